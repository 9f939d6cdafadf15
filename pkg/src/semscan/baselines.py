"""Reference detectors: a two-class multinomial Naive Bayes over the
background/foreground split, and the circular expectation-based Poisson
scan used as the spatial step for methods that do not model space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document, LocationRegistry


@dataclass(frozen=True)
class NbModel:
    """Add-one-smoothed multinomial NB; class 0 = background, 1 = foreground."""

    class_log_priors: np.ndarray   # (2,)
    word_log_probs: np.ndarray     # (2, n_words)


def nb_fit(
    background: list[Document], foreground: list[Document], n_words: int
) -> NbModel:
    if not background or not foreground:
        raise ValueError("both classes need at least one document")
    counts = np.zeros((2, n_words), dtype=np.int64)
    for cls, docs in enumerate((background, foreground)):
        for doc in docs:
            if doc.n_tokens:
                counts[cls] += np.bincount(doc.token_array(), minlength=n_words)
    word_log_probs = np.log(counts + 1.0) - np.log(
        counts.sum(axis=1, keepdims=True) + float(n_words)
    )
    n_bg, n_fg = len(background), len(foreground)
    class_log_priors = np.log(np.array([n_bg, n_fg]) / (n_bg + n_fg))
    return NbModel(class_log_priors=class_log_priors, word_log_probs=word_log_probs)


def nb_predict(model: NbModel, document: Document) -> int:
    """Argmax class log-posterior; exact ties go to class 0."""
    scores = model.class_log_priors.copy()
    if document.n_tokens:
        tokens = document.token_array()
        scores = scores + model.word_log_probs[:, tokens].sum(axis=1)
    return 1 if scores[1] > scores[0] else 0


def nb_predict_many(model: NbModel, documents: list[Document]) -> np.ndarray:
    return np.array([nb_predict(model, doc) for doc in documents], dtype=np.int8)


@dataclass(frozen=True)
class CircularScanResult:
    """Best distance-ordered cluster.  ``locations`` is a prefix of the
    neighbor list around ``center``; empty when nothing beats the null."""

    center: str | None
    size: int
    locations: tuple[str, ...]
    statistic: float


def circular_scan(
    case_counts: np.ndarray,
    baseline_counts: np.ndarray,
    registry: LocationRegistry,
    max_size: int | None = None,
) -> CircularScanResult:
    """Maximise C log(C/B) + B - C (0 unless C > B) over circular clusters.

    Clusters are prefixes of each center's distance-sorted neighbor list,
    up to max_size (default |Z|).  Ties keep the first candidate in
    (registry order, ascending size) order.
    """
    cases = np.asarray(case_counts, dtype=np.float64)
    baselines = np.asarray(baseline_counts, dtype=np.float64)
    if cases.shape != (len(registry),) or baselines.shape != (len(registry),):
        raise ValueError("counts must be one value per registered location")
    if np.any((cases > 0) & (baselines <= 0)):
        raise ValueError("baseline counts must be positive wherever cases occur")
    if max_size is None:
        max_size = len(registry)

    order = registry.neighbor_order()
    c_sum = np.cumsum(cases[order], axis=1)[:, :max_size]
    b_sum = np.cumsum(baselines[order], axis=1)[:, :max_size]
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(c_sum > b_sum, c_sum * np.log(c_sum / b_sum) + b_sum - c_sum, 0.0)

    best_flat = int(np.argmax(stat))
    best_value = float(stat.flat[best_flat])
    if best_value <= 0.0:
        return CircularScanResult(center=None, size=0, locations=(), statistic=0.0)
    center_idx, size_idx = np.unravel_index(best_flat, stat.shape)
    members = tuple(registry.ids[i] for i in order[center_idx, : size_idx + 1])
    return CircularScanResult(
        center=registry.ids[center_idx],
        size=size_idx + 1,
        locations=members,
        statistic=best_value,
    )
