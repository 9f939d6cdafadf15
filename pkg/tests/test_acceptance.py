"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line.  Run with `pytest tests/test_acceptance.py -v -s`.

Statistical criteria use fixed seeds throughout, so every run of this
suite is deterministic on a given platform.
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from semscan.corpus import Corpus, Document, LocationRegistry, Vocabulary
from semscan.evaluate import (
    DAYS_PER_YEAR,
    FP_PER_YEAR_GRID,
    METHODS,
    DetectionConfig,
    calibrate_thresholds,
    document_metrics,
    power_curves,
    run_windows,
    set_metrics,
    spatial_metrics,
)
from semscan.gibbs import CountTables, Hyperparameters, conditional_distribution, gibbs_sweep
from semscan.semantic import ScanConfig, fit_background, fit_foreground
from semscan.simulate import (
    GeneratorConfig,
    generate_background,
    generate_labeled_corpus,
    make_benchmark,
    random_registry,
)
from semscan.spatial import RegionPrior, neighborhood_score, region_posterior

from conftest import make_doc


def report(criterion: int, detail: str):
    print(f"\n[PASS] criterion {criterion:2d}: {detail}")


# ---------------------------------------------------------------------------
# vectorised exhaustive subset enumeration (oracle for criteria 1 and 2)
# ---------------------------------------------------------------------------

_MASK_CACHE: dict[int, np.ndarray] = {}


def _masks(n: int) -> np.ndarray:
    if n not in _MASK_CACHE:
        _MASK_CACHE[n] = ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(bool)
    return _MASK_CACHE[n]


def enumerate_subset_sum(ratios: np.ndarray, p: float, forced: int | None = None) -> float:
    """Sum over all subsets (optionally only those containing `forced`) of
    p^|S| (1-p)^(n-|S|) prod_{i in S} ratio_i, by explicit enumeration."""
    n = len(ratios)
    masks = _masks(n)
    if forced is not None:
        masks = masks[masks[:, forced]]
    sizes = masks.sum(axis=1)
    prods = np.where(masks, np.asarray(ratios)[None, :], 1.0).prod(axis=1)
    return float(np.sum(p ** sizes * (1.0 - p) ** (n - sizes) * prods))


def test_criterion_01_subset_sum_oracle_equivalence():
    started = time.perf_counter()
    rng = np.random.default_rng(20240501)
    n_instances = 200
    for _ in range(n_instances):
        n = int(rng.integers(1, 13))
        ratios = rng.lognormal(0.0, 1.0, size=n)
        p = float(rng.uniform(0.05, 1.0))

        # linear-time product of smoothed factors vs 2^n enumeration
        got = math.exp(neighborhood_score(np.log(ratios), p))
        expected = enumerate_subset_sum(ratios, p)
        assert math.isclose(got, expected, rel_tol=1e-9)

        # full posterior over a scan grid vs enumeration
        registry = LocationRegistry(
            [(f"z{i:02d}", 40.0 + 0.01 * i, -80.0 + 0.002 * i * i) for i in range(n)]
        )
        sizes = tuple(sorted({1, max(1, n // 2), n}))
        prior = RegionPrior(sparsity=p, sizes=sizes)
        docs = [make_doc(f"d{i}", [], location=f"z{i:02d}") for i in range(n)]
        post = region_posterior(np.log(ratios), docs, registry, prior)

        exp_scores = {}
        for center in registry.ids:
            for size in sizes:
                members = registry.neighborhood(center, size)
                member_ratios = np.array([ratios[registry.index[m]] for m in members])
                exp_scores[(center, size)] = enumerate_subset_sum(member_ratios, p)
        normalizer = sum(exp_scores.values())
        got_scores = post.score_map()
        for key, value in exp_scores.items():
            assert math.isclose(got_scores[key], value / normalizer, rel_tol=1e-9)

        got_locations = post.location_map()
        for loc in registry.ids:
            total = 0.0
            for center in registry.ids:
                for size in sizes:
                    members = registry.neighborhood(center, size)
                    if loc not in members:
                        continue
                    member_ratios = np.array(
                        [ratios[registry.index[m]] for m in members]
                    )
                    total += enumerate_subset_sum(member_ratios, p, forced=members.index(loc))
            assert math.isclose(
                got_locations[loc], total / normalizer, rel_tol=1e-9, abs_tol=1e-12
            )
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    report(1, f"200 instances (n <= 12) match 2^n enumeration within 1e-9 in {elapsed:.1f}s")


def test_criterion_02_worked_neighborhood_example():
    got = math.exp(neighborhood_score(np.log([2.0, 1.0, 0.5]), 0.5))
    assert abs(got - 1.125) <= 1e-12
    assert abs(enumerate_subset_sum(np.array([2.0, 1.0, 0.5]), 0.5) - 1.125) <= 1e-12
    report(2, "n=3, ratios (2, 1, 0.5), p=0.5 scores exactly 1.125")


def test_criterion_03_collapsed_conditional_and_count_consistency():
    rng = np.random.default_rng(77)

    def term_by_term_reference(tables, hyper, doc, word, lo, hi):
        beta, beta_sum = hyper.word_prior_arrays(
            tables.t_background, tables.n_topics, tables.n_words
        )
        weights = []
        for k in range(lo, hi):
            doc_term = float(tables.n_ik[doc, k]) + float(hyper.alpha[k])
            word_term = float(tables.n_kw[k, word] + tables.base_n_kw[k, word]) + float(beta[k])
            norm = float(tables.n_k[k] + tables.base_n_k[k]) + float(beta_sum[k])
            weights.append(doc_term * word_term / norm)
        total = sum(weights)
        return np.array([w / total for w in weights])

    checked = 0
    while checked < 1000:
        n_words = int(rng.integers(2, 7))
        t_bg = int(rng.integers(1, 4))
        t_fg = int(rng.integers(0, 3))
        docs = [
            make_doc(f"d{i}", rng.integers(0, n_words, size=rng.integers(1, 9)).tolist())
            for i in range(int(rng.integers(1, 6)))
        ]
        tables = CountTables.initialize(docs, n_words, t_bg, t_fg, rng)
        hyper = Hyperparameters(
            alpha=rng.uniform(0.1, 2.0, size=t_bg + t_fg),
            beta_background=float(rng.uniform(0.01, 1.0)),
            beta_foreground=float(rng.uniform(0.01, 1.0)),
        )
        d = int(rng.integers(len(docs)))
        pos = int(rng.integers(docs[d].n_tokens))
        w = int(tables.doc_tokens(d)[pos])
        old = int(tables.doc_assignments(d)[pos])
        tables.n_ik[d, old] -= 1
        tables.n_kw[old, w] -= 1
        tables.n_k[old] -= 1
        got = conditional_distribution(tables, hyper, d, pos, (0, t_bg + t_fg))
        expected = term_by_term_reference(tables, hyper, d, w, 0, t_bg + t_fg)
        np.testing.assert_allclose(got, expected, rtol=1e-12, atol=0)
        checked += 1

    docs = [
        make_doc(f"d{i}", rng.integers(0, 12, size=rng.integers(0, 20)).tolist())
        for i in range(40)
    ]
    tables = CountTables.initialize(docs, 12, 3, 1, rng)
    hyper = Hyperparameters.symmetric(4, alpha=0.5)
    for _ in range(40):
        gibbs_sweep(tables, hyper, np.arange(len(docs)), (0, 4), rng)
        assert tables.consistent()
    report(3, "1000 conditionals match term-by-term evaluation; 40 sweeps recount exactly")


def _separable_corpus(seed, n_topics=5, n_words=50, n_docs=2000, doc_len=50):
    # anchor-structured topics: 95% of each topic's mass on its own block
    rng = np.random.default_rng(seed)
    block = n_words // n_topics
    phi = np.full((n_topics, n_words), 0.05 / n_words)
    for k in range(n_topics):
        phi[k, k * block : (k + 1) * block] += 0.95 / block
    phi /= phi.sum(axis=1, keepdims=True)
    vocab = Vocabulary(tuple(f"w{i:03d}" for i in range(n_words)))
    docs = []
    for i in range(n_docs):
        theta = rng.dirichlet(np.full(n_topics, 0.2))
        counts = rng.multinomial(doc_len, theta)
        toks = []
        for k in np.flatnonzero(counts):
            toks.extend(rng.choice(n_words, size=counts[k], p=phi[k]).tolist())
        docs.append(Document(id=f"d{i}", tokens=tuple(toks), timestamp=0, location="z"))
    return Corpus(tuple(docs), (), vocab), phi


def _greedy_match_l1(true_phi, learned_phi):
    remaining = list(range(learned_phi.shape[0]))
    errors = []
    for row in true_phi:
        dists = [np.abs(row - learned_phi[j]).sum() for j in remaining]
        pick = int(np.argmin(dists))
        errors.append(dists[pick])
        remaining.pop(pick)
    return float(np.mean(errors))


def test_criterion_04_topic_recovery():
    started = time.perf_counter()
    errors = []
    for seed in range(5):
        corpus, truth = _separable_corpus(seed)
        config = ScanConfig(
            t_background=5, t_foreground=0, variant="static", background_sweeps=500, seed=seed
        )
        model, _ = fit_background(corpus, config)
        errors.append(_greedy_match_l1(truth, model.phi))
    elapsed = time.perf_counter() - started
    mean_error = float(np.mean(errors))
    assert mean_error <= 0.15
    assert elapsed < 120.0
    report(4, f"mean greedy-matched L1 {mean_error:.3f} <= 0.15 over 5 seeds in {elapsed:.0f}s")


def test_criterion_05_frozen_background_rows():
    rng = np.random.default_rng(5)
    corpus, _ = _separable_corpus(seed=100, n_docs=150, doc_len=12)
    config = ScanConfig(t_background=3, t_foreground=2, background_sweeps=60, seed=1)
    model, _ = fit_background(corpus, config)
    for run in range(20):
        docs = [
            make_doc(f"f{i}", rng.integers(0, 50, size=rng.integers(1, 15)).tolist())
            for i in range(int(rng.integers(5, 40)))
        ]
        fitted = fit_foreground(model, docs, config, np.random.default_rng(run))
        assert fitted.phi[:3].tobytes() == model.phi.tobytes()
    report(5, "background rows bit-identical through 20 foreground fits")


def test_criterion_06_injection_protocol():
    rng = np.random.default_rng(6)
    registry = random_registry(20, rng)
    gen = GeneratorConfig(
        n_topics=3, vocab_size=60, docs_per_day=10, n_background_days=20,
        n_foreground_days=45, seed=6,
    )
    corpus = generate_labeled_corpus(gen, registry, n_labels=2, rng=rng)
    scenarios = make_benchmark(
        corpus, registry, n_labels=2, outbreaks_per_label=2, seed=17, size_range=(4, 8)
    )
    assert len(scenarios) == 4
    for scenario in scenarios:
        truth = scenario.truth
        assert truth.duration == 30
        for day in range(1, 31):
            assert len(truth.injected_by_day[day]) == 3 * day
        assert len(truth.all_injected_ids()) == 1395
        injected = {
            d.id: d for d in scenario.corpus.foreground if d.id in truth.all_injected_ids()
        }
        assert len(injected) == 1395
        assert all(doc.location in set(truth.affected) for doc in injected.values())
        assert set(truth.affected) <= set(truth.neighborhood)
    report(6, "4 outbreaks: exact 3*d daily cases, 1395 total, locations inside the subset")


def test_criterion_07_metric_formula_enumeration():
    universe = ["a", "b", "c", "d"]
    subsets = [
        frozenset(combo) for r in range(5) for combo in itertools.combinations(universe, r)
    ]

    def exact(num, den, tp, fp, fn):
        if den == 0:
            return Fraction(1) if tp == fp == fn == 0 else Fraction(0)
        return Fraction(num, den)

    n_pairs = 0
    for detected in subsets:
        for truth in subsets:
            row = set_metrics(set(detected), set(truth))
            tp, fp, fn = row.tp, row.fp, row.fn
            assert tp == len(detected & truth)
            assert fp == len(detected - truth)
            assert fn == len(truth - detected)
            assert Fraction(row.precision).limit_denominator(10**6) == exact(
                tp, tp + fp, tp, fp, fn
            )
            assert Fraction(row.recall).limit_denominator(10**6) == exact(
                tp, tp + fn, tp, fp, fn
            )
            assert Fraction(row.overlap).limit_denominator(10**6) == exact(
                tp, tp + fp + fn, tp, fp, fn
            )
            n_pairs += 1
    assert n_pairs == 256
    report(7, "precision/recall/overlap equal exact rationals on all 256 subset pairs")


@pytest.fixture(scope="module")
def small_benchmark():
    """20 scenarios plus a long event-free run on a 10-location registry."""
    rng = np.random.default_rng(88)
    registry = random_registry(10, rng)
    gen = GeneratorConfig(
        n_topics=3, vocab_size=60, docs_per_day=8, n_background_days=30,
        n_foreground_days=40, mean_tokens=6.0, seed=88,
    )
    corpus = generate_labeled_corpus(
        gen, registry, n_labels=4, label_vocab=6, labeled_fraction=0.3, label_mix=0.8, rng=rng
    )
    scenarios = make_benchmark(corpus, registry, 4, 5, seed=30, size_range=(3, 5))

    null_gen = GeneratorConfig(
        n_topics=3, vocab_size=60, docs_per_day=8, n_background_days=30,
        n_foreground_days=375, mean_tokens=6.0, seed=89,
    )
    null_corpus = generate_labeled_corpus(
        null_gen, registry, n_labels=4, label_vocab=6, labeled_fraction=0.3,
        label_mix=0.8, rng=np.random.default_rng(89),
    )
    config = DetectionConfig(
        t_background=3, t_foreground=3, background_sweeps=100, foreground_sweeps=40,
        fold_in_sweeps=6, prior=RegionPrior(sizes=(1, 2, 3, 4, 5)), max_iterations=2,
    )
    return registry, scenarios, null_corpus, null_gen, config


def test_criterion_08_power_curve_monotonicity(small_benchmark):
    registry, scenarios, null_corpus, null_gen, config = small_benchmark
    null_days = range(null_gen.split_day + 2, null_gen.split_day + 2 + 368)
    for method in METHODS:
        nulls = [
            o.score
            for o in run_windows(method, null_corpus, registry, null_days, config, seed=41)
            if not o.skipped
        ]
        assert len(nulls) >= DAYS_PER_YEAR
        outbreak_scores = []
        for scenario in scenarios:
            fg_start = min(d.timestamp for d in scenario.corpus.foreground)
            days = range(scenario.truth.start_day, scenario.truth.start_day + 30)
            outputs = run_windows(
                method, scenario.corpus, registry,
                [d for d in days if d >= fg_start + 2], config, seed=42,
            )
            outbreak_scores.append(np.array([o.score for o in outputs]))
        points = power_curves(nulls, outbreak_scores)
        fractions = [p.frac_detected for p in points]
        days_to = [p.days_to_detect for p in points]
        assert fractions == sorted(fractions), method
        assert days_to == sorted(days_to, reverse=True), method
    report(8, f"power curves monotone for all {len(METHODS)} methods on 20 scenarios")


def test_criterion_09_directional_advantage():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    registry = random_registry(50, rng)
    gen = GeneratorConfig(
        n_topics=6, vocab_size=120, docs_per_day=80, n_background_days=40,
        n_foreground_days=40, mean_tokens=8.0, seed=2024,
    )
    corpus = generate_labeled_corpus(
        gen, registry, n_labels=4, label_vocab=8, labeled_fraction=0.3, label_mix=0.8, rng=rng
    )
    scenarios = make_benchmark(corpus, registry, n_labels=4, outbreaks_per_label=5, seed=99)
    assert len(scenarios) == 20
    config = DetectionConfig(
        t_background=8, t_foreground=6, background_sweeps=200, foreground_sweeps=80,
        fold_in_sweeps=8, prior=RegionPrior(sparsity=0.5), max_iterations=4,
    )
    overlap = {"scss": [], "ss-emerging": []}
    precision = {"scss": [], "ss-emerging": []}
    flag_overlap = []
    for scenario in scenarios:
        day15 = scenario.truth.start_day + 14
        true_docs = scenario.truth.injected_in_window(day15 - 2, day15)
        for method in ("scss", "ss-emerging"):
            out = run_windows(method, scenario.corpus, registry, [day15], config, seed=7)[0]
            overlap[method].append(spatial_metrics(out.locations, scenario.truth.affected).overlap)
            precision[method].append(document_metrics(out.documents, true_docs).precision)
            if method == "scss":
                flag_overlap.append(document_metrics(out.documents, true_docs).overlap)
    elapsed = time.perf_counter() - started
    scss_overlap = float(np.mean(overlap["scss"]))
    em_overlap = float(np.mean(overlap["ss-emerging"]))
    scss_precision = float(np.mean(precision["scss"]))
    em_precision = float(np.mean(precision["ss-emerging"]))
    assert scss_overlap >= em_overlap
    assert scss_precision > em_precision
    # the flagged-document set agrees with the planted set well past half
    assert float(np.mean(flag_overlap)) >= 0.5
    assert elapsed < 1800.0
    report(
        9,
        f"day-15 spatial overlap {scss_overlap:.3f} >= {em_overlap:.3f} and document "
        f"precision {scss_precision:.3f} > {em_precision:.3f} over 20 scenarios in {elapsed:.0f}s",
    )


def test_criterion_10_null_calibration():
    # calibration set (6 year-equivalents) and verification set (3 years)
    # of event-free window-days, sampled at stride 3 so the 3-day windows
    # do not overlap
    rng = np.random.default_rng(101)
    registry = random_registry(10, rng)
    n_cal, n_ver = 2190, 1095
    n_days = 3 * (n_cal + n_ver) + 3
    gen = GeneratorConfig(
        n_topics=3, vocab_size=60, docs_per_day=8, n_background_days=30,
        n_foreground_days=n_days, mean_tokens=6.0, seed=101,
    )
    corpus, _ = generate_background(gen, registry, rng)
    config = DetectionConfig(
        t_background=3, t_foreground=3, background_sweeps=100, foreground_sweeps=40,
        fold_in_sweeps=6, prior=RegionPrior(sizes=(1, 2, 3, 4, 5)), max_iterations=2,
    )
    days = list(range(gen.split_day + 2, gen.split_day + n_days, 3))
    outputs = run_windows("scss", corpus, registry, days, config, seed=55)
    scores = np.array([o.score for o in outputs if not o.skipped])
    assert scores.size >= n_cal + n_ver
    calibration, verification = scores[:n_cal], scores[n_cal : n_cal + n_ver]
    thresholds = calibrate_thresholds(calibration)
    lines = []
    for r in FP_PER_YEAR_GRID:
        q = r / DAYS_PER_YEAR
        hits = int(np.sum(verification > thresholds[r]))
        low = int(stats.binom.ppf(0.025, n_ver, q))
        high = int(stats.binom.ppf(0.975, n_ver, q))
        assert low <= hits <= high, (r, hits, low, high)
        lines.append(f"{r}/yr: {hits} in [{low}, {high}]")
    report(10, "false-alarm rates within binomial 95% bounds — " + "; ".join(lines))
