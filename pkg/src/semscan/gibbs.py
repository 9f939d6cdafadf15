"""Collapsed Gibbs sampling over an arbitrary topic range.

The sampler state lives in flat arrays (CSR-style token layout) so the hot
sweep can run through :mod:`semscan.kernels`.  Topic indices split into a
background block ``[0, t_background)`` and a foreground block
``[t_background, t_background + t_foreground)``; the word prior is
``beta_background`` on the first block and ``beta_foreground`` on the
second.  Freezing a fitted background block is expressed through the
``base_*`` count arrays: additive topic-word counts that sweeps read but
never write.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document, Vocabulary
from .kernels import fold_in_kernel, gibbs_sweep_kernel

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Hyperparameters:
    """Dirichlet hyperparameters: per-topic alpha and per-block word priors."""

    alpha: np.ndarray
    beta_background: float
    beta_foreground: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=np.float64))
        if self.alpha.ndim != 1 or not np.all(self.alpha > 0):
            raise ValueError("alpha must be a vector of positive reals")
        if self.beta_background <= 0 or self.beta_foreground <= 0:
            raise ValueError("word priors must be strictly positive")

    @property
    def n_topics(self) -> int:
        return self.alpha.shape[0]

    @classmethod
    def symmetric(
        cls,
        n_topics: int,
        alpha: float = 0.5,
        beta_background: float = 0.01,
        beta_foreground: float = 0.01,
    ) -> "Hyperparameters":
        return cls(np.full(n_topics, alpha), beta_background, beta_foreground)

    def word_prior_arrays(self, t_background: int, n_topics: int, n_words: int):
        """Per-topic (beta, beta * n_words) arrays for the first n_topics."""
        beta = np.where(
            np.arange(n_topics) < t_background, self.beta_background, self.beta_foreground
        ).astype(np.float64)
        return beta, beta * n_words


class CountTables:
    """Gibbs sufficient statistics plus the per-token assignments.

    ``n_ik``/``n_kw``/``n_k`` always equal a recount of ``z``; the frozen
    ``base_n_kw``/``base_n_k`` hold count contributions from documents that
    are not part of these tables (a fitted background corpus) and are never
    mutated by sweeps.
    """

    def __init__(
        self,
        tokens: np.ndarray,
        doc_ptr: np.ndarray,
        z: np.ndarray,
        n_words: int,
        t_background: int,
        t_foreground: int,
        base_n_kw: np.ndarray | None = None,
        base_n_k: np.ndarray | None = None,
    ):
        self.tokens = np.asarray(tokens, dtype=np.int32)
        self.doc_ptr = np.asarray(doc_ptr, dtype=np.int64)
        self.z = np.asarray(z, dtype=np.int32)
        self.n_words = int(n_words)
        self.t_background = int(t_background)
        self.t_foreground = int(t_foreground)
        n_topics = self.n_topics
        if base_n_kw is None:
            base_n_kw = np.zeros((n_topics, n_words), dtype=np.int64)
        if base_n_k is None:
            base_n_k = np.zeros(n_topics, dtype=np.int64)
        self.base_n_kw = np.asarray(base_n_kw, dtype=np.int64)
        self.base_n_k = np.asarray(base_n_k, dtype=np.int64)
        self.n_ik, self.n_kw, self.n_k = self.recount()

    @property
    def n_topics(self) -> int:
        return self.t_background + self.t_foreground

    @property
    def n_docs(self) -> int:
        return self.doc_ptr.shape[0] - 1

    def doc_length(self, doc: int) -> int:
        return int(self.doc_ptr[doc + 1] - self.doc_ptr[doc])

    def doc_tokens(self, doc: int) -> np.ndarray:
        return self.tokens[self.doc_ptr[doc] : self.doc_ptr[doc + 1]]

    def doc_assignments(self, doc: int) -> np.ndarray:
        return self.z[self.doc_ptr[doc] : self.doc_ptr[doc + 1]]

    def recount(self):
        """Rebuild the count tables from z alone."""
        n_topics, n_words = self.n_topics, self.n_words
        n_ik = np.zeros((self.n_docs, n_topics), dtype=np.int64)
        for d in range(self.n_docs):
            zs = self.doc_assignments(d)
            if zs.size:
                n_ik[d] = np.bincount(zs, minlength=n_topics)
        if self.z.size:
            n_kw_flat = np.bincount(
                self.z.astype(np.int64) * n_words + self.tokens, minlength=n_topics * n_words
            )
        else:
            n_kw_flat = np.zeros(n_topics * n_words, dtype=np.int64)
        n_kw = n_kw_flat.reshape(n_topics, n_words).astype(np.int64)
        return n_ik, n_kw, n_kw.sum(axis=1)

    def consistent(self) -> bool:
        """True when the stored tables match an exact recount of z."""
        n_ik, n_kw, n_k = self.recount()
        return (
            np.array_equal(n_ik, self.n_ik)
            and np.array_equal(n_kw, self.n_kw)
            and np.array_equal(n_k, self.n_k)
        )

    @classmethod
    def initialize(
        cls,
        documents: list[Document],
        n_words: int,
        t_background: int,
        t_foreground: int,
        rng: np.random.Generator,
        allowed_topics: tuple[int, int] | None = None,
        base_n_kw: np.ndarray | None = None,
        base_n_k: np.ndarray | None = None,
    ) -> "CountTables":
        """Random uniform assignments over allowed_topics (default: all)."""
        lo, hi = allowed_topics if allowed_topics is not None else (0, t_background + t_foreground)
        if not 0 <= lo < hi <= t_background + t_foreground:
            raise ValueError(f"bad topic range [{lo}, {hi})")
        lengths = np.array([d.n_tokens for d in documents], dtype=np.int64)
        doc_ptr = np.concatenate([[0], np.cumsum(lengths)])
        tokens = (
            np.concatenate([d.token_array() for d in documents])
            if documents
            else np.zeros(0, dtype=np.int32)
        )
        z = rng.integers(lo, hi, size=tokens.shape[0], dtype=np.int32)
        return cls(tokens, doc_ptr, z, n_words, t_background, t_foreground, base_n_kw, base_n_k)


def conditional_distribution(
    tables: CountTables,
    hyper: Hyperparameters,
    doc: int,
    pos: int,
    allowed_topics: tuple[int, int],
) -> np.ndarray:
    """Collapsed conditional P(z = k) over allowed_topics for one position.

    The tables must already exclude the assignment at (doc, pos): weights
    are (n_ik + alpha) * (n_kw + beta) / (n_k + sum_w beta), normalised.
    """
    lo, hi = allowed_topics
    if hi <= lo:
        raise ValueError("empty topic range")
    w = int(tables.tokens[tables.doc_ptr[doc] + pos])
    beta, beta_sum = hyper.word_prior_arrays(tables.t_background, tables.n_topics, tables.n_words)
    weights = (
        (tables.n_ik[doc, lo:hi] + hyper.alpha[lo:hi])
        * (tables.n_kw[lo:hi, w] + tables.base_n_kw[lo:hi, w] + beta[lo:hi])
        / (tables.n_k[lo:hi] + tables.base_n_k[lo:hi] + beta_sum[lo:hi])
    )
    return weights / weights.sum()


def gibbs_sweep(
    tables: CountTables,
    hyper: Hyperparameters,
    doc_ids,
    allowed_topics: tuple[int, int],
    rng: np.random.Generator,
    sweeps: int = 1,
) -> CountTables:
    """Run full resampling sweeps over the listed documents, in place.

    Documents not listed keep their assignments and count contributions
    untouched, as do the frozen base counts.
    """
    lo, hi = allowed_topics
    if not 0 <= lo < hi <= tables.n_topics:
        raise ValueError(f"bad topic range [{lo}, {hi})")
    doc_ids = np.asarray(doc_ids, dtype=np.int64)
    beta, beta_sum = hyper.word_prior_arrays(tables.t_background, tables.n_topics, tables.n_words)
    alpha = hyper.alpha[: tables.n_topics]
    n_positions = int(sum(tables.doc_length(int(d)) for d in doc_ids))
    for _ in range(sweeps):
        uniforms = rng.random(n_positions)
        used = gibbs_sweep_kernel(
            tables.tokens,
            tables.doc_ptr,
            tables.z,
            doc_ids,
            tables.n_ik,
            tables.n_kw,
            tables.n_k,
            tables.base_n_kw,
            tables.base_n_k,
            alpha,
            beta,
            beta_sum,
            lo,
            hi,
            uniforms,
        )
        assert used == n_positions
    return tables


@dataclass
class TopicModel:
    """Row-stochastic topic-word matrix with its priors and block split.

    ``word_counts``/``topic_totals`` carry the integer counts behind the
    smoothed rows when the model came out of a fit; they are what lets a
    later foreground fit keep this model's topics frozen exactly.
    """

    phi: np.ndarray
    hyper: Hyperparameters
    t_background: int
    t_foreground: int
    word_counts: np.ndarray | None = None
    topic_totals: np.ndarray | None = None
    vocab_hash: str | None = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.ndim != 2:
            raise ValueError("phi must be 2-D")
        if self.phi.shape[0] != self.t_background + self.t_foreground:
            raise ValueError("phi row count must equal t_background + t_foreground")
        if self.phi.size and (
            np.any(self.phi < 0) or np.max(np.abs(self.phi.sum(axis=1) - 1.0)) > 1e-12
        ):
            raise ValueError("phi rows must be distributions")

    @property
    def n_topics(self) -> int:
        return self.t_background + self.t_foreground

    @property
    def n_words(self) -> int:
        return self.phi.shape[1]

    def background_block(self) -> np.ndarray:
        return self.phi[: self.t_background]


def empty_background_model(n_words: int, hyper: Hyperparameters) -> TopicModel:
    """A zero-topic background model (entry point for dynamic-style fits)."""
    return TopicModel(
        phi=np.zeros((0, n_words)),
        hyper=hyper,
        t_background=0,
        t_foreground=0,
        word_counts=np.zeros((0, n_words), dtype=np.int64),
        topic_totals=np.zeros(0, dtype=np.int64),
    )


def map_estimates(tables: CountTables, hyper: Hyperparameters):
    """Smoothed point estimates from the current counts.

    Returns (TopicModel, theta) where theta[i] is document i's posterior
    mean mixture over all topics in the tables.
    """
    n_topics, n_words = tables.n_topics, tables.n_words
    beta, beta_sum = hyper.word_prior_arrays(tables.t_background, n_topics, n_words)
    counts_kw = tables.n_kw + tables.base_n_kw
    counts_k = tables.n_k + tables.base_n_k
    phi = (counts_kw + beta[:, None]) / (counts_k + beta_sum)[:, None]
    phi /= phi.sum(axis=1, keepdims=True)

    alpha = hyper.alpha[:n_topics]
    lengths = np.diff(tables.doc_ptr)
    theta = (tables.n_ik + alpha) / (lengths + alpha.sum())[:, None]

    model = TopicModel(
        phi=phi,
        hyper=hyper,
        t_background=tables.t_background,
        t_foreground=tables.t_foreground,
        word_counts=counts_kw.copy(),
        topic_totals=counts_k.copy(),
    )
    return model, theta


def fold_in_many(
    model: TopicModel,
    documents: list[Document],
    allowed_topics: tuple[int, int],
    sweeps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-document mixture estimates with phi held fixed.

    Gibbs over each document alone (conditional proportional to
    (n_k + alpha) * phi[k, w]), returning smoothed theta rows over the
    allowed topic range.  A zero-token document gets the normalised prior.
    """
    lo, hi = allowed_topics
    if not 0 <= lo < hi <= model.n_topics:
        raise ValueError(f"bad topic range [{lo}, {hi})")
    lengths = np.array([d.n_tokens for d in documents], dtype=np.int64)
    doc_ptr = np.concatenate([[0], np.cumsum(lengths)])
    tokens = (
        np.concatenate([d.token_array() for d in documents])
        if documents
        else np.zeros(0, dtype=np.int32)
    )
    counts = np.zeros((len(documents), hi - lo), dtype=np.int64)
    if tokens.size:
        uniforms = rng.random(int(lengths.sum()) * (sweeps + 1))
        doc_ids = np.arange(len(documents), dtype=np.int64)
        used = fold_in_kernel(
            tokens,
            doc_ptr,
            doc_ids,
            model.phi,
            model.hyper.alpha[: model.n_topics],
            lo,
            hi,
            sweeps,
            uniforms,
            counts,
        )
        assert used == uniforms.shape[0]
    alpha = model.hyper.alpha[lo:hi]
    theta = (counts + alpha) / (lengths + alpha.sum())[:, None]
    return theta


def fold_in(
    model: TopicModel,
    document: Document,
    allowed_topics: tuple[int, int],
    sweeps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Single-document convenience wrapper around fold_in_many."""
    return fold_in_many(model, [document], allowed_topics, sweeps, rng)[0]


def save_checkpoint(model: TopicModel, path, vocabulary: Vocabulary | None = None) -> None:
    """Persist a model as a self-describing .npz archive."""
    vocab_hash = model.vocab_hash
    if vocabulary is not None:
        vocab_hash = vocabulary.content_hash()
    n_topics, n_words = model.phi.shape
    word_counts = model.word_counts
    topic_totals = model.topic_totals
    if word_counts is None:
        word_counts = np.zeros((0, n_words), dtype=np.int64)
        topic_totals = np.zeros(0, dtype=np.int64)
    np.savez(
        path,
        format_version=np.int64(CHECKPOINT_VERSION),
        phi=model.phi,
        alpha=model.hyper.alpha,
        beta_background=np.float64(model.hyper.beta_background),
        beta_foreground=np.float64(model.hyper.beta_foreground),
        t_background=np.int64(model.t_background),
        t_foreground=np.int64(model.t_foreground),
        word_counts=word_counts,
        topic_totals=topic_totals,
        vocab_hash=np.str_(vocab_hash or ""),
    )


def load_checkpoint(path) -> TopicModel:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        hyper = Hyperparameters(
            alpha=data["alpha"],
            beta_background=float(data["beta_background"]),
            beta_foreground=float(data["beta_foreground"]),
        )
        word_counts = data["word_counts"]
        topic_totals = data["topic_totals"]
        if word_counts.shape[0] == 0 and int(data["t_background"]) + int(data["t_foreground"]) > 0:
            word_counts, topic_totals = None, None
        vocab_hash = str(data["vocab_hash"]) or None
        return TopicModel(
            phi=data["phi"],
            hyper=hyper,
            t_background=int(data["t_background"]),
            t_foreground=int(data["t_foreground"]),
            word_counts=word_counts,
            topic_totals=topic_totals,
            vocab_hash=vocab_hash,
        )
