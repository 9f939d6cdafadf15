"""Semi-synthetic benchmark generation.

Three layers: a synthetic corpus drawn from the detector's own generative
story (topics from a symmetric Dirichlet, documents as topic mixtures,
uniform timestamps and locations); a labeled variant whose label classes
carry their own anchor vocabulary, standing in for externally coded
records; and the leave-one-label-out outbreak protocol, which strips one
label from the corpus and re-injects its text as a spatially concentrated,
temporally growing case series (3*d cases on outbreak day d).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, Document, LocationRegistry, Vocabulary, day_index
from .gibbs import Hyperparameters, TopicModel


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the synthetic corpus generator."""

    n_topics: int = 10
    vocab_size: int = 200
    docs_per_day: int = 20
    start_day: int | str = "2003-01-01"
    n_background_days: int = 60
    n_foreground_days: int = 120
    mean_tokens: float = 8.0
    topic_concentration: float = 0.08
    mixture_concentration: float = 0.5
    severity_eta: tuple[float, float] = (2.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        if self.severity_eta[0] <= 0 or self.severity_eta[1] <= 0:
            raise ValueError("severity_eta components must be positive")
        if self.n_background_days < 1 or self.n_foreground_days < 1:
            raise ValueError("day ranges must be non-empty")

    @property
    def first_day(self) -> int:
        return day_index(self.start_day)

    @property
    def split_day(self) -> int:
        """First foreground day; everything before is background."""
        return self.first_day + self.n_background_days

    @property
    def last_day(self) -> int:
        return self.split_day + self.n_foreground_days - 1


def _sample_tokens(rng, n_tokens: int, theta: np.ndarray, phi: np.ndarray) -> tuple[int, ...]:
    # bag-of-words draw: per-topic token counts, then per-topic word counts
    if n_tokens == 0:
        return ()
    pieces = []
    topic_counts = rng.multinomial(n_tokens, theta)
    for k in np.flatnonzero(topic_counts):
        word_counts = rng.multinomial(topic_counts[k], phi[k])
        pieces.append(np.repeat(np.arange(phi.shape[1]), word_counts))
    return tuple(int(w) for w in np.concatenate(pieces))


def generate_background(
    config: GeneratorConfig,
    registry: LocationRegistry,
    rng: np.random.Generator | None = None,
) -> tuple[Corpus, TopicModel]:
    """Event-free corpus drawn from the background generative process.

    Documents on both sides of the split come from the same topics;
    timestamps are uniform within each day range and locations uniform
    over the registry.  Returns the corpus and the true topic-word rows
    for recovery checks.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    vocabulary = Vocabulary(_numbered_words("w", config.vocab_size))
    phi = rng.dirichlet(np.full(config.vocab_size, config.topic_concentration), size=config.n_topics)
    phi /= phi.sum(axis=1, keepdims=True)
    alpha = np.full(config.n_topics, config.mixture_concentration)

    docs = []
    for prefix, first, n_days in (
        ("bg", config.first_day, config.n_background_days),
        ("fg", config.split_day, config.n_foreground_days),
    ):
        n_docs = config.docs_per_day * n_days
        days = rng.integers(first, first + n_days, size=n_docs)
        locs = rng.integers(0, len(registry), size=n_docs)
        lengths = rng.poisson(config.mean_tokens, size=n_docs)
        for i in range(n_docs):
            theta = rng.dirichlet(alpha)
            docs.append(
                Document(
                    id=f"{prefix}-{i:06d}",
                    tokens=_sample_tokens(rng, int(lengths[i]), theta, phi),
                    timestamp=int(days[i]),
                    location=registry.ids[int(locs[i])],
                )
            )
    background = tuple(d for d in docs if d.timestamp < config.split_day)
    foreground = tuple(d for d in docs if d.timestamp >= config.split_day)
    corpus = Corpus(background, foreground, vocabulary)
    truth = TopicModel(
        phi=phi,
        hyper=Hyperparameters.symmetric(config.n_topics, alpha=config.mixture_concentration),
        t_background=config.n_topics,
        t_foreground=0,
    )
    return corpus, truth


def generate_labeled_corpus(
    config: GeneratorConfig,
    registry: LocationRegistry,
    n_labels: int = 10,
    label_vocab: int = 8,
    labeled_fraction: float = 0.35,
    label_mix: float = 0.75,
    rng: np.random.Generator | None = None,
) -> Corpus:
    """Synthetic corpus with held-out label classes.

    Each label owns ``label_vocab`` anchor words never emitted by the
    shared topics; a labeled document draws each token from its label
    topic with probability ``label_mix``, otherwise from the shared
    mixture.  Stripping a label therefore removes its anchor words from
    the corpus, so re-injected text reads as genuinely novel.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    shared_words = _numbered_words("w", config.vocab_size)
    anchor_words = []
    for lab in range(n_labels):
        anchor_words.extend(f"label{lab:02d}x{j:02d}" for j in range(label_vocab))
    vocabulary = Vocabulary(tuple(shared_words) + tuple(anchor_words))
    n_total_words = len(vocabulary)

    shared_phi = np.zeros((config.n_topics, n_total_words))
    shared_phi[:, : config.vocab_size] = rng.dirichlet(
        np.full(config.vocab_size, config.topic_concentration), size=config.n_topics
    )
    shared_phi /= shared_phi.sum(axis=1, keepdims=True)
    label_phi = np.zeros((n_labels, n_total_words))
    for lab in range(n_labels):
        start = config.vocab_size + lab * label_vocab
        label_phi[lab, start : start + label_vocab] = rng.dirichlet(np.full(label_vocab, 1.0))
    alpha = np.full(config.n_topics, config.mixture_concentration)

    docs = []
    n_days = config.n_background_days + config.n_foreground_days
    n_docs = config.docs_per_day * n_days
    days = rng.integers(config.first_day, config.first_day + n_days, size=n_docs)
    locs = rng.integers(0, len(registry), size=n_docs)
    lengths = rng.poisson(config.mean_tokens, size=n_docs)
    labels = np.where(
        rng.random(n_docs) < labeled_fraction, rng.integers(0, n_labels, size=n_docs), -1
    )
    for i in range(n_docs):
        theta = rng.dirichlet(alpha)
        n_tokens = int(lengths[i])
        lab = int(labels[i])
        if lab >= 0:
            n_anchor = int(rng.binomial(n_tokens, label_mix))
            anchor_part = _sample_tokens(rng, n_anchor, np.ones(1), label_phi[lab : lab + 1])
            shared_part = _sample_tokens(rng, n_tokens - n_anchor, theta, shared_phi)
            tokens = anchor_part + shared_part
            label = f"label{lab:02d}"
        else:
            tokens = _sample_tokens(rng, n_tokens, theta, shared_phi)
            label = None
        docs.append(
            Document(
                id=f"doc-{i:06d}",
                tokens=tokens,
                timestamp=int(days[i]),
                location=registry.ids[int(locs[i])],
                label=label,
            )
        )
    background = tuple(d for d in docs if d.timestamp < config.split_day)
    foreground = tuple(d for d in docs if d.timestamp >= config.split_day)
    return Corpus(background, foreground, vocabulary)


@dataclass(frozen=True)
class OutbreakParams:
    center: str
    size: int
    sparsity: float
    start_day: int
    duration: int = 30
    daily_growth: int = 3
    mode: str = "uniform"              # "uniform" per the benchmark protocol,
    severity_eta: tuple[float, float] = (2.0, 2.0)  # "severity" for Beta-thinned injection

    def __post_init__(self):
        if self.mode not in ("uniform", "severity"):
            raise ValueError("mode must be 'uniform' or 'severity'")
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in (0, 1]")


@dataclass(frozen=True)
class OutbreakGroundTruth:
    """What was planted: the region, its sparse affected subset, and the
    injected document ids day by day (day numbers are 1-based)."""

    center: str
    size: int
    neighborhood: tuple[str, ...]
    sparsity: float
    affected: tuple[str, ...]
    start_day: int
    duration: int
    injected_by_day: dict[int, tuple[str, ...]]
    severities: dict[str, float] = field(default_factory=dict)

    def all_injected_ids(self) -> set[str]:
        return {doc_id for ids in self.injected_by_day.values() for doc_id in ids}

    def day_timestamp(self, day: int) -> int:
        return self.start_day + day - 1

    def injected_in_window(self, first_day: int, last_day: int) -> set[str]:
        out: set[str] = set()
        for day, ids in self.injected_by_day.items():
            if first_day <= self.day_timestamp(day) <= last_day:
                out.update(ids)
        return out

    def to_json(self) -> dict:
        return {
            "center": self.center,
            "size": self.size,
            "neighborhood": list(self.neighborhood),
            "sparsity": self.sparsity,
            "affected": list(self.affected),
            "start_day": self.start_day,
            "duration": self.duration,
            "injected_by_day": {str(d): list(ids) for d, ids in self.injected_by_day.items()},
            "severities": dict(self.severities),
        }

    @classmethod
    def from_json(cls, data: dict) -> "OutbreakGroundTruth":
        return cls(
            center=data["center"],
            size=int(data["size"]),
            neighborhood=tuple(data["neighborhood"]),
            sparsity=float(data["sparsity"]),
            affected=tuple(data["affected"]),
            start_day=int(data["start_day"]),
            duration=int(data["duration"]),
            injected_by_day={
                int(d): tuple(ids) for d, ids in data["injected_by_day"].items()
            },
            severities={k: float(v) for k, v in data.get("severities", {}).items()},
        )


def inject_outbreak(
    corpus: Corpus,
    pool: list[Document],
    registry: LocationRegistry,
    params: OutbreakParams,
    rng: np.random.Generator,
) -> tuple[Corpus, OutbreakGroundTruth]:
    """Plant one outbreak into the foreground corpus.

    Day d (1..duration) receives daily_growth * d cases: text drawn
    uniformly with replacement from the pool, location uniform over the
    affected subset.  In "severity" mode each affected location gets a
    Beta-distributed keep probability and candidate cases are thinned.
    """
    if params.duration > 0 and not pool:
        raise ValueError("held-out document pool is empty")
    neighborhood = registry.neighborhood(params.center, params.size) if params.duration else []
    affected: list[str] = []
    if params.duration > 0:
        while not affected:
            affected = [loc for loc in neighborhood if rng.random() < params.sparsity]
    severities: dict[str, float] = {}
    if params.mode == "severity":
        a, b = params.severity_eta
        severities = {loc: float(rng.beta(a, b)) for loc in affected}

    injected_docs: list[Document] = []
    injected_by_day: dict[int, tuple[str, ...]] = {}
    for day in range(1, params.duration + 1):
        kept_ids = []
        timestamp = params.start_day + day - 1
        for case in range(params.daily_growth * day):
            source = pool[int(rng.integers(len(pool)))]
            location = affected[int(rng.integers(len(affected)))]
            if params.mode == "severity" and not rng.random() < severities[location]:
                continue
            doc_id = f"outbreak-d{day:02d}-c{case:04d}"
            injected_docs.append(
                Document(
                    id=doc_id,
                    tokens=source.tokens,
                    timestamp=timestamp,
                    location=location,
                    label=source.label,
                )
            )
            kept_ids.append(doc_id)
        injected_by_day[day] = tuple(kept_ids)

    truth = OutbreakGroundTruth(
        center=params.center if params.duration else "",
        size=params.size if params.duration else 0,
        neighborhood=tuple(neighborhood),
        sparsity=params.sparsity,
        affected=tuple(affected),
        start_day=params.start_day,
        duration=params.duration,
        injected_by_day=injected_by_day,
        severities=severities,
    )
    augmented = Corpus(
        corpus.background, corpus.foreground + tuple(injected_docs), corpus.vocabulary
    )
    return augmented, truth


@dataclass(frozen=True)
class Scenario:
    name: str
    held_out_label: str
    seed: int
    corpus: Corpus
    truth: OutbreakGroundTruth


def strip_label(corpus: Corpus, label: str) -> tuple[Corpus, list[Document]]:
    """Remove every document carrying `label`; vocabulary is unchanged."""
    removed = [d for d in corpus.background + corpus.foreground if d.label == label]
    if not removed:
        raise ValueError(f"label {label!r} has no documents")
    background = tuple(d for d in corpus.background if d.label != label)
    foreground = tuple(d for d in corpus.foreground if d.label != label)
    return Corpus(background, foreground, corpus.vocabulary), removed


def top_labels(corpus: Corpus, k: int) -> list[str]:
    """The k most frequent labels (ties broken lexicographically)."""
    counts = Counter(
        d.label for d in corpus.background + corpus.foreground if d.label is not None
    )
    if len(counts) < k:
        raise ValueError(f"corpus has only {len(counts)} labels, {k} requested")
    return [lab for lab, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def make_benchmark(
    corpus: Corpus,
    registry: LocationRegistry,
    n_labels: int,
    outbreaks_per_label: int,
    seed: int,
    size_range: tuple[int, int] = (5, 15),
    sparsity_choices: tuple[float, ...] = (0.5, 0.75, 1.0),
    duration: int = 30,
    daily_growth: int = 3,
    mode: str = "uniform",
    severity_eta: tuple[float, float] = (2.0, 2.0),
) -> list[Scenario]:
    """Leave-one-label-out scenarios: n_labels * outbreaks_per_label runs.

    Every scenario strips one label from both corpus halves and re-injects
    its text as an outbreak with center, size, sparsity and start day
    sampled from declared defaults.  Each scenario is reproducible from
    its own recorded seed.
    """
    labels = top_labels(corpus, n_labels)
    children = np.random.SeedSequence(seed).spawn(n_labels * outbreaks_per_label)
    scenarios = []
    fg_days = [d.timestamp for d in corpus.foreground]
    fg_first, fg_last = min(fg_days), max(fg_days)
    for li, label in enumerate(labels):
        stripped, removed = strip_label(corpus, label)
        for j in range(outbreaks_per_label):
            child = children[li * outbreaks_per_label + j]
            scenario_seed = int(child.generate_state(1)[0])
            rng = np.random.default_rng(scenario_seed)
            max_size = min(size_range[1], len(registry))
            min_size = min(size_range[0], max_size)
            latest_start = max(fg_first, fg_last - duration + 1)
            params = OutbreakParams(
                center=registry.ids[int(rng.integers(len(registry)))],
                size=int(rng.integers(min_size, max_size + 1)),
                sparsity=float(sparsity_choices[int(rng.integers(len(sparsity_choices)))]),
                start_day=int(rng.integers(fg_first, latest_start + 1)),
                duration=duration,
                daily_growth=daily_growth,
                mode=mode,
                severity_eta=severity_eta,
            )
            scenario_corpus, truth = inject_outbreak(stripped, removed, registry, params, rng)
            scenarios.append(
                Scenario(
                    name=f"{label}-{j:02d}",
                    held_out_label=label,
                    seed=scenario_seed,
                    corpus=scenario_corpus,
                    truth=truth,
                )
            )
    return scenarios


def random_registry(
    n_locations: int,
    rng: np.random.Generator,
    lat_range: tuple[float, float] = (40.0, 41.0),
    lon_range: tuple[float, float] = (-80.5, -79.5),
) -> LocationRegistry:
    """Uniform synthetic centroids, ids z000..; handy for benchmarks."""
    lats = rng.uniform(*lat_range, size=n_locations)
    lons = rng.uniform(*lon_range, size=n_locations)
    return LocationRegistry(
        [(f"z{i:03d}", float(lats[i]), float(lons[i])) for i in range(n_locations)]
    )


def _numbered_words(prefix: str, count: int) -> tuple[str, ...]:
    width = max(4, len(str(count - 1)))
    return tuple(f"{prefix}{i:0{width}d}" for i in range(count))


def write_scenario(directory, scenario: Scenario, split_day: int) -> None:
    """Persist one scenario bundle: corpus JSONL, truth JSON, manifest."""
    from .corpus import write_jsonl
    import datetime

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_jsonl(directory / "corpus.jsonl", scenario.corpus)
    with open(directory / "truth.json", "w") as handle:
        json.dump(scenario.truth.to_json(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    manifest = {
        "name": scenario.name,
        "held_out_label": scenario.held_out_label,
        "seed": scenario.seed,
        "split_date": datetime.date.fromordinal(split_day).isoformat(),
    }
    with open(directory / "manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_scenario(directory, registry: LocationRegistry):
    """Load a scenario bundle; returns (corpus, truth, manifest)."""
    from .corpus import ingest, read_jsonl

    directory = Path(directory)
    with open(directory / "manifest.json") as handle:
        manifest = json.load(handle)
    corpus = ingest(read_jsonl(directory / "corpus.jsonl"), registry, manifest["split_date"])
    with open(directory / "truth.json") as handle:
        truth = OutbreakGroundTruth.from_json(json.load(handle))
    return corpus, truth, manifest
