"""Moving-window detection runs, set-overlap metrics, and detection-power
curves calibrated on event-free scores.

Method ids: "scss" (alternating spatial detector), "ss-emerging",
"ss-dynamic", "ss-static" (two-phase scan variants finished by a circular
Poisson scan), and "naive-bayes".  The spatial method reports locations
from its inclusion posterior and documents from its final flags; the
others report the circular cluster and the window documents inside it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .baselines import circular_scan, nb_fit, nb_predict_many
from .corpus import Corpus, Document, LocationRegistry
from .detector import DetectorConfig
from .detector import run as run_detector
from .gibbs import TopicModel, empty_background_model, fold_in_many, map_estimates
from .semantic import ScanConfig, fit_background, fit_foreground
from .spatial import DEFAULT_PROB_FLOOR, RegionPrior

METHODS = ("scss", "ss-emerging", "ss-dynamic", "ss-static", "naive-bayes")
FP_PER_YEAR_GRID = (1, 2, 4, 8, 12, 26, 52)
DAYS_PER_YEAR = 365

METRICS_HEADER = ["day", "method", "sp_prec", "sp_rec", "sp_ovl", "doc_prec", "doc_rec", "doc_ovl"]
POWER_HEADER = ["fp_per_year", "method", "frac_detected", "days_to_detect"]


@dataclass(frozen=True)
class DetectionConfig:
    """Shared settings for every method's window runs."""

    t_background: int = 25
    t_foreground: int = 25
    background_sweeps: int = 500
    foreground_sweeps: int = 200
    fold_in_sweeps: int = 20
    alpha: float = 0.5
    beta_background: float = 0.01
    beta_foreground: float = 0.01
    prior: RegionPrior = field(default_factory=RegionPrior)
    max_iterations: int = 10
    convergence_fraction: float = 0.01
    location_threshold: float = 0.5
    window_days: int = 3
    prob_floor: float = DEFAULT_PROB_FLOOR
    baseline_floor: float = 0.5

    def scan_config(self, variant: str) -> ScanConfig:
        base = ScanConfig(
            t_background=self.t_background,
            t_foreground=self.t_foreground,
            variant="emerging",
            background_sweeps=self.background_sweeps,
            foreground_sweeps=self.foreground_sweeps,
            fold_in_sweeps=self.fold_in_sweeps,
            alpha=self.alpha,
            beta_background=self.beta_background,
            beta_foreground=self.beta_foreground,
        )
        return base.for_variant(variant)

    def detector_config(self) -> DetectorConfig:
        return DetectorConfig(
            scan=self.scan_config("emerging"),
            prior=self.prior,
            max_iterations=self.max_iterations,
            convergence_fraction=self.convergence_fraction,
            location_threshold=self.location_threshold,
            prob_floor=self.prob_floor,
        )


@dataclass(frozen=True)
class DetectionOutput:
    day: int
    score: float
    locations: tuple[str, ...]
    documents: tuple[str, ...]
    skipped: bool = False


@dataclass(frozen=True)
class MetricRow:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    overlap: float


def set_metrics(detected: set, truth: set) -> MetricRow:
    """Precision, recall and overlap (Jaccard) between two sets.

    A ratio with zero denominator reports 1.0 when all three counts are
    zero (both sets empty) and 0.0 otherwise.
    """
    tp = len(detected & truth)
    fp = len(detected - truth)
    fn = len(truth - detected)
    all_zero = tp == 0 and fp == 0 and fn == 0
    precision = tp / (tp + fp) if tp + fp else (1.0 if all_zero else 0.0)
    recall = tp / (tp + fn) if tp + fn else (1.0 if all_zero else 0.0)
    overlap = tp / (tp + fp + fn) if tp + fp + fn else 1.0
    return MetricRow(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, overlap=overlap)


def spatial_metrics(detected_locations, true_locations) -> MetricRow:
    return set_metrics(set(detected_locations), set(true_locations))


def document_metrics(detected_ids, true_ids) -> MetricRow:
    return set_metrics(set(detected_ids), set(true_ids))


class _MethodRunner:
    """Per-scenario state shared across that scenario's window days."""

    def __init__(
        self,
        method,
        corpus,
        registry,
        config: DetectionConfig,
        seed: int,
        background_model: TopicModel | None = None,
    ):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
        self.method = method
        self.corpus = corpus
        self.registry = registry
        self.config = config
        self.seed = seed
        self.n_words = len(corpus.vocabulary)
        bg_days = [d.timestamp for d in corpus.background]
        self.n_background_days = max(bg_days) - min(bg_days) + 1 if bg_days else 1
        self._location_rates = self._background_rates()
        self._background_model = background_model
        self._background_topic_rates: np.ndarray | None = None
        if background_model is not None and method == "ss-static":
            self._static_rates_from_model(background_model)

    def _background_rates(self) -> np.ndarray:
        counts = np.zeros(len(self.registry))
        for doc in self.corpus.background:
            counts[self.registry.index[doc.location]] += 1
        return counts / self.n_background_days

    def _baseline(self) -> np.ndarray:
        raw = self._location_rates * self.config.window_days
        return np.maximum(raw, self.config.baseline_floor)

    def _fit_rng(self):
        return np.random.default_rng(
            np.random.SeedSequence([self.seed, METHODS.index(self.method)])
        )

    def _day_rng(self, day: int):
        return np.random.default_rng(
            np.random.SeedSequence([self.seed, METHODS.index(self.method), day])
        )

    def background_model(self) -> TopicModel:
        """Fit (once per scenario) the frozen background block."""
        if self._background_model is None:
            if self.method == "ss-dynamic":
                hyper = self.config.scan_config("dynamic").hyperparameters()
                self._background_model = empty_background_model(self.n_words, hyper)
            else:
                variant = "static" if self.method == "ss-static" else "emerging"
                scan = self.config.scan_config(variant)
                model, tables = fit_background(self.corpus, scan, self._fit_rng())
                self._background_model = model
                if self.method == "ss-static":
                    _, theta = map_estimates(tables, scan.hyperparameters())
                    self._static_rates_from_theta(theta, scan.t_background)
        return self._background_model

    def _static_rates_from_model(self, model: TopicModel) -> None:
        # Background assignments are not available from a checkpoint, so
        # estimate them by folding the background documents into the model.
        theta = fold_in_many(
            model,
            list(self.corpus.background),
            (0, model.t_background),
            self.config.fold_in_sweeps,
            self._fit_rng(),
        )
        self._static_rates_from_theta(theta, model.t_background)

    def _static_rates_from_theta(self, theta: np.ndarray, n_topics: int) -> None:
        assigned = np.argmax(theta, axis=1)
        rates = np.zeros((n_topics, len(self.registry)))
        for doc, topic in zip(self.corpus.background, assigned):
            rates[topic, self.registry.index[doc.location]] += 1
        self._background_topic_rates = rates / self.n_background_days

    def run_day(self, day: int, window: list[Document]) -> DetectionOutput:
        rng = self._day_rng(day)
        if self.method == "scss":
            return self._run_scss(day, window, rng)
        if self.method == "naive-bayes":
            return self._run_naive_bayes(day, window, rng)
        return self._run_scan_variant(day, window, rng)

    def _run_scss(self, day, window, rng) -> DetectionOutput:
        state = run_detector(
            window, self.background_model(), self.registry, self.config.detector_config(), rng
        )
        return DetectionOutput(
            day=day,
            score=state.score,
            locations=tuple(state.detected_locations(self.config.location_threshold)),
            documents=tuple(state.flagged_documents(window)),
        )

    def _run_scan_variant(self, day, window, rng) -> DetectionOutput:
        variant = {"ss-emerging": "emerging", "ss-dynamic": "dynamic", "ss-static": "static"}[
            self.method
        ]
        scan = self.config.scan_config(variant)
        model = self.background_model()
        if scan.t_foreground > 0:
            model = fit_foreground(model, window, scan, rng)
        theta = fold_in_many(model, window, (0, model.n_topics), scan.fold_in_sweeps, rng)
        assigned = np.argmax(theta, axis=1)

        if variant == "static":
            result = self._best_topic_cluster(window, assigned, scan.t_background)
        else:
            case_docs = [d for d, k in zip(window, assigned) if k >= scan.t_background]
            cases = self._location_counts(case_docs)
            result = circular_scan(cases, self._baseline(), self.registry)
        cluster = set(result.locations)
        documents = tuple(d.id for d in window if d.location in cluster)
        return DetectionOutput(
            day=day, score=result.statistic, locations=tuple(result.locations), documents=documents
        )

    def _best_topic_cluster(self, window, assigned, n_topics):
        # Without a foreground block the scan looks for spatial excess of
        # any single topic against that topic's own background rate.
        self.background_model()
        best = None
        for topic in range(n_topics):
            cases = self._location_counts(
                [d for d, k in zip(window, assigned) if k == topic]
            )
            baseline = np.maximum(
                self._background_topic_rates[topic] * self.config.window_days,
                self.config.baseline_floor,
            )
            result = circular_scan(cases, baseline, self.registry)
            if best is None or result.statistic > best.statistic:
                best = result
        return best

    def _run_naive_bayes(self, day, window, rng) -> DetectionOutput:
        del rng  # fit and prediction are deterministic
        model = nb_fit(list(self.corpus.background), window, self.n_words)
        predictions = nb_predict_many(model, window)
        case_docs = [d for d, c in zip(window, predictions) if c == 1]
        cases = self._location_counts(case_docs)
        result = circular_scan(cases, self._baseline(), self.registry)
        cluster = set(result.locations)
        documents = tuple(d.id for d in window if d.location in cluster)
        return DetectionOutput(
            day=day, score=result.statistic, locations=tuple(result.locations), documents=documents
        )

    def _location_counts(self, documents) -> np.ndarray:
        counts = np.zeros(len(self.registry))
        for doc in documents:
            counts[self.registry.index[doc.location]] += 1
        return counts


def run_windows(
    method: str,
    corpus: Corpus,
    registry: LocationRegistry,
    days,
    config: DetectionConfig,
    seed: int,
    background_model: TopicModel | None = None,
) -> list[DetectionOutput]:
    """Run one method over a range of evaluation days.

    Day t scans the foreground window [t - window_days + 1, t] against the
    fixed background corpus.  Days whose window reaches before the
    foreground start, or that contain no documents, are reported skipped.
    A pre-fitted background model (checkpoint) skips the per-scenario fit.
    """
    runner = _MethodRunner(method, corpus, registry, config, seed, background_model)
    by_day: dict[int, list[Document]] = {}
    for doc in corpus.foreground:
        by_day.setdefault(doc.timestamp, []).append(doc)
    fg_start = min(by_day) if by_day else None
    outputs = []
    for day in days:
        first = day - config.window_days + 1
        window = [doc for d in range(first, day + 1) for doc in by_day.get(d, ())]
        if fg_start is None or first < fg_start or not window:
            outputs.append(
                DetectionOutput(day=day, score=float("nan"), locations=(), documents=(), skipped=True)
            )
            continue
        outputs.append(runner.run_day(day, window))
    return outputs


def calibrate_thresholds(
    null_scores, fp_per_year=FP_PER_YEAR_GRID, days_per_year: int = DAYS_PER_YEAR
) -> dict[int, float]:
    """Per-rate alarm thresholds from event-free daily scores.

    The threshold for r false positives per year is the empirical
    (1 - r/days_per_year) quantile of the null scores (interpolated, so
    the implied alarm rate is centred on nominal rather than one-sided).
    """
    scores = np.asarray([s for s in null_scores if np.isfinite(s)], dtype=np.float64)
    if scores.size < days_per_year:
        raise ValueError(
            f"need at least {days_per_year} null window-days, got {scores.size}"
        )
    return {
        int(r): float(np.quantile(scores, 1.0 - r / days_per_year))
        for r in fp_per_year
    }


def false_alarm_rate(scores, threshold: float) -> float:
    scores = np.asarray([s for s in scores if np.isfinite(s)], dtype=np.float64)
    return float(np.mean(scores > threshold)) if scores.size else 0.0


@dataclass(frozen=True)
class PowerPoint:
    fp_per_year: int
    frac_detected: float
    days_to_detect: float
    n_detected: int
    n_undetected: int


def power_curves(
    null_scores,
    outbreak_scores: list[np.ndarray],
    fp_per_year=FP_PER_YEAR_GRID,
    days_per_year: int = DAYS_PER_YEAR,
) -> list[PowerPoint]:
    """Fraction detected and days-to-detection per allowed FP rate.

    Each entry of outbreak_scores holds one outbreak's daily scores in
    outbreak-day order.  An outbreak counts as detected when any day beats
    the threshold; its detection day is the first such day.  Undetected
    outbreaks impute their full duration and are tallied separately.
    """
    thresholds = calibrate_thresholds(null_scores, fp_per_year, days_per_year)
    points = []
    for r in fp_per_year:
        thr = thresholds[int(r)]
        detected_days = []
        n_detected = 0
        for scores in outbreak_scores:
            scores = np.asarray(scores, dtype=np.float64)
            above = np.flatnonzero(np.where(np.isfinite(scores), scores, -np.inf) > thr)
            if above.size:
                n_detected += 1
                detected_days.append(int(above[0]) + 1)
            else:
                detected_days.append(len(scores))
        points.append(
            PowerPoint(
                fp_per_year=int(r),
                frac_detected=n_detected / len(outbreak_scores) if outbreak_scores else 0.0,
                days_to_detect=float(np.mean(detected_days)) if detected_days else 0.0,
                n_detected=n_detected,
                n_undetected=len(outbreak_scores) - n_detected,
            )
        )
    return points


def scenario_metric_rows(truth, outputs: list[DetectionOutput], method: str, window_days: int = 3):
    """Per-day metric rows for one scenario, keyed by outbreak day number."""
    rows = []
    for out in outputs:
        if out.skipped:
            continue
        outbreak_day = out.day - truth.start_day + 1
        if not 1 <= outbreak_day <= truth.duration:
            continue
        true_docs = truth.injected_in_window(out.day - window_days + 1, out.day)
        sp = spatial_metrics(out.locations, truth.affected)
        doc = document_metrics(out.documents, true_docs)
        rows.append(
            {
                "day": outbreak_day,
                "method": method,
                "sp_prec": sp.precision,
                "sp_rec": sp.recall,
                "sp_ovl": sp.overlap,
                "doc_prec": doc.precision,
                "doc_rec": doc.recall,
                "doc_ovl": doc.overlap,
            }
        )
    return rows


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow(
                [row["day"], row["method"]]
                + [f"{row[k]:.6f}" for k in METRICS_HEADER[2:]]
            )


def write_power_csv(path, points_by_method: dict[str, list[PowerPoint]]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(POWER_HEADER)
        for method in sorted(points_by_method):
            for point in points_by_method[method]:
                writer.writerow(
                    [
                        point.fp_per_year,
                        method,
                        f"{point.frac_detected:.6f}",
                        f"{point.days_to_detect:.6f}",
                    ]
                )


def write_detections_csv(path, outputs: list[DetectionOutput]) -> None:
    """One row per evaluated day; ids and locations are ';'-joined."""
    import datetime

    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date", "score", "skipped", "locations", "documents"])
        for out in outputs:
            writer.writerow(
                [
                    datetime.date.fromordinal(out.day).isoformat(),
                    "" if out.skipped else f"{out.score:.12g}",
                    int(out.skipped),
                    ";".join(out.locations),
                    ";".join(out.documents),
                ]
            )


def read_detections_csv(path) -> list[DetectionOutput]:
    from .corpus import day_index

    outputs = []
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            skipped = bool(int(row["skipped"]))
            outputs.append(
                DetectionOutput(
                    day=day_index(row["date"]),
                    score=float(row["score"]) if row["score"] else float("nan"),
                    locations=tuple(x for x in row["locations"].split(";") if x),
                    documents=tuple(x for x in row["documents"].split(";") if x),
                    skipped=skipped,
                )
            )
    return outputs
