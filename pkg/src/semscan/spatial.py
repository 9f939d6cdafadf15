"""Bayesian spatial scoring of circular neighborhoods.

Each location carries the product of the likelihood ratios of its
documents.  A neighborhood's unnormalised score is the product of smoothed
per-location factors (1 - p + p * LR), which equals the sum over all 2^n
sparse location subsets of their prior-weighted likelihood-ratio products,
computed in linear time.  Normalising over every scanned (center, size)
pair gives the neighborhood posterior; per-location inclusion posteriors
come from the same pass by forcing the location's own factor to p * LR.

All accumulation is in log space; the normaliser uses a max-shifted
exponential sum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .corpus import Document, LocationRegistry
from .gibbs import TopicModel

DEFAULT_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class RegionPrior:
    """Scan grid and inclusion sparsity for the spatial search.

    ``sparsity`` is each neighborhood member's prior inclusion
    probability.  ``sizes`` and ``centers`` default to 1..ceil(|Z|/2) and
    every registered location.
    """

    sparsity: float = 0.5
    sizes: tuple[int, ...] | None = None
    centers: tuple[str, ...] | None = None

    def __post_init__(self):
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in (0, 1]")

    def resolve(self, registry: LocationRegistry) -> tuple[np.ndarray, np.ndarray]:
        """Concrete (center index array, ascending size array) for a registry."""
        n = len(registry)
        if self.sizes is None:
            sizes = np.arange(1, math.ceil(n / 2) + 1, dtype=np.int64)
        else:
            sizes = np.array(sorted(set(self.sizes)), dtype=np.int64)
        if sizes.size == 0 or sizes[0] < 1 or sizes[-1] > n:
            raise ValueError(f"scan sizes must be within [1, {n}]")
        if self.centers is None:
            centers = np.arange(n, dtype=np.int64)
        else:
            centers = np.array([registry.index[c] for c in self.centers], dtype=np.int64)
        return centers, sizes


def document_log_likelihood(
    document: Document,
    theta: np.ndarray,
    model: TopicModel,
    topic_range: tuple[int, int],
    prob_floor: float = DEFAULT_PROB_FLOOR,
) -> float:
    """Log-likelihood with the per-word topic marginalised out.

    Sum over positions of log(sum_k theta_k * phi[k, w]); each per-word
    probability is floored at prob_floor so the result is finite.  A
    zero-token document scores 0.
    """
    lo, hi = topic_range
    if document.n_tokens == 0:
        return 0.0
    tokens = document.token_array()
    word_probs = theta @ model.phi[lo:hi, tokens]
    return float(np.sum(np.log(np.maximum(word_probs, prob_floor))))


def log_likelihood_ratios(
    documents: list[Document],
    theta_full: np.ndarray,
    theta_background: np.ndarray,
    model: TopicModel,
    prob_floor: float = DEFAULT_PROB_FLOOR,
) -> np.ndarray:
    """Per-document log ratio of full-model to background-only likelihood."""
    t_bg = model.t_background
    out = np.empty(len(documents))
    for i, doc in enumerate(documents):
        full = document_log_likelihood(doc, theta_full[i], model, (0, model.n_topics), prob_floor)
        bg = document_log_likelihood(doc, theta_background[i], model, (0, t_bg), prob_floor)
        out[i] = full - bg
    return out


def location_log_ratios(
    log_ratios: np.ndarray, documents: list[Document], registry: LocationRegistry
) -> np.ndarray:
    """Sum document log ratios per location; locations without documents get 0."""
    out = np.zeros(len(registry))
    for llr, doc in zip(log_ratios, documents):
        if doc.location not in registry.index:
            raise KeyError(f"document {doc.id} at unregistered location {doc.location!r}")
        out[registry.index[doc.location]] += llr
    return out


def smoothed_log_factors(log_ratios: np.ndarray, sparsity: float) -> np.ndarray:
    """log(1 - p + p * LR) from log LR, stable for extreme ratios."""
    log_ratios = np.asarray(log_ratios, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_keep = np.log1p(-sparsity) if sparsity < 1.0 else -np.inf
        return np.logaddexp(log_keep, np.log(sparsity) + log_ratios)


def neighborhood_score(log_ratios, sparsity: float) -> float:
    """Unnormalised log score of one neighborhood given its members' log LRs.

    Equals the log of the 2^n subset sum sum_S p^|S| (1-p)^(n-|S|)
    prod_{i in S} LR_i, folded into a product of n smoothed factors.
    """
    return float(np.sum(smoothed_log_factors(np.asarray(log_ratios, dtype=np.float64), sparsity)))


@dataclass
class RegionPosterior:
    """Posterior over scanned (center, size) neighborhoods plus per-location
    inclusion probabilities, under a uniform prior on the scan grid."""

    center_ids: tuple[str, ...]
    sizes: tuple[int, ...]
    log_scores: np.ndarray          # (centers, sizes), unnormalised
    scores: np.ndarray              # (centers, sizes), sums to 1
    location_ids: tuple[str, ...]
    location_scores: np.ndarray     # (|Z|,)
    log_normalizer: float

    @property
    def max_log_score(self) -> float:
        return float(self.log_scores.max()) if self.log_scores.size else -np.inf

    def score_map(self) -> dict[tuple[str, int], float]:
        return {
            (c, int(n)): float(self.scores[i, j])
            for i, c in enumerate(self.center_ids)
            for j, n in enumerate(self.sizes)
        }

    def location_map(self) -> dict[str, float]:
        return {loc: float(s) for loc, s in zip(self.location_ids, self.location_scores)}

    def top_neighborhood(self) -> tuple[str, int, float]:
        i, j = np.unravel_index(int(np.argmax(self.scores)), self.scores.shape)
        return self.center_ids[i], int(self.sizes[j]), float(self.scores[i, j])

    def detected_locations(self, threshold: float = 0.5) -> list[str]:
        return [loc for loc, s in zip(self.location_ids, self.location_scores) if s >= threshold]


def region_posterior(
    log_ratios: np.ndarray,
    documents: list[Document],
    registry: LocationRegistry,
    prior: RegionPrior,
) -> RegionPosterior:
    """Score every scanned neighborhood and location from document log LRs.

    Documents toggle with their location: a location's factor carries the
    product of all its documents' ratios.  Documents outside a
    neighborhood contribute factor 1 (they are simply not in its product).
    """
    centers, sizes = prior.resolve(registry)
    per_location = location_log_ratios(np.asarray(log_ratios, dtype=np.float64), documents, registry)
    return _posterior_from_location_ratios(per_location, registry, prior, centers, sizes)


def location_posterior(
    log_ratios: np.ndarray,
    documents: list[Document],
    registry: LocationRegistry,
    prior: RegionPrior,
) -> dict[str, float]:
    """Per-location inclusion posterior Pr(location affected | documents)."""
    return region_posterior(log_ratios, documents, registry, prior).location_map()


def _posterior_from_location_ratios(per_location, registry, prior, centers, sizes):
    p = prior.sparsity
    smoothed = smoothed_log_factors(per_location, p)
    order = registry.neighbor_order()[centers]         # (C, |Z|)
    cumulative = np.cumsum(smoothed[order], axis=1)    # prefix sums in distance order
    log_scores = cumulative[:, sizes - 1]              # (C, S)

    shift = log_scores.max() if log_scores.size else 0.0
    if not np.isfinite(shift):
        # Every neighborhood has log score -inf (p = 1 with an impossible
        # location everywhere); fall back to a uniform posterior.
        shift = 0.0
        exp_scores = np.ones_like(log_scores)
    else:
        exp_scores = np.exp(log_scores - shift)
    total = exp_scores.sum()
    scores = exp_scores / total
    log_normalizer = shift + np.log(total)

    # Inclusion ratio p * LR / (1 - p + p * LR); exactly 0 for LR = 0.
    with np.errstate(divide="ignore", invalid="ignore"):
        inclusion = np.exp(np.log(p) + per_location - smoothed)
    inclusion[~np.isfinite(per_location)] = 0.0

    # coverage[j] = sum over scanned (c, n) containing j of exp(score - shift).
    max_size = int(sizes[-1])
    coverage = np.zeros(len(registry))
    first_size_idx = np.searchsorted(sizes, np.arange(1, max_size + 1), side="left")
    for row, exp_row in zip(order, exp_scores):
        suffix = np.concatenate([np.cumsum(exp_row[::-1])[::-1], [0.0]])
        np.add.at(coverage, row[:max_size], suffix[first_size_idx])
    location_scores = np.clip(inclusion * coverage / total, 0.0, 1.0)

    return RegionPosterior(
        center_ids=tuple(registry.ids[i] for i in centers),
        sizes=tuple(int(n) for n in sizes),
        log_scores=log_scores,
        scores=scores,
        location_ids=registry.ids,
        location_scores=location_scores,
        log_normalizer=float(log_normalizer),
    )


def write_neighborhood_csv(path, posterior: RegionPosterior) -> None:
    """Dump (center, size, posterior) rows, highest posterior first."""
    rows = sorted(posterior.score_map().items(), key=lambda kv: (-kv[1], kv[0]))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["center", "size", "posterior"])
        for (center, size), score in rows:
            writer.writerow([center, size, f"{score:.12g}"])


def write_location_csv(path, posterior: RegionPosterior) -> None:
    """Dump (location, posterior) rows, highest posterior first."""
    rows = sorted(posterior.location_map().items(), key=lambda kv: (-kv[1], kv[0]))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["location", "posterior"])
        for location, score in rows:
            writer.writerow([location, f"{score:.12g}"])
