"""Two-phase contrastive topic fitting.

Phase one fits a topic block on the background corpus.  Phase two learns
additional topics on foreground documents while the fitted block stays
frozen: its word distributions are carried over bit for bit, and its count
contributions enter the phase-two sampler as immutable base counts.
Foreground words may still be assigned to frozen topics; only the new
topics' rows are learned from those assignments.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import Corpus, Document
from .gibbs import (
    CountTables,
    Hyperparameters,
    TopicModel,
    gibbs_sweep,
    map_estimates,
)

VARIANTS = ("static", "dynamic", "emerging")


@dataclass(frozen=True)
class ScanConfig:
    """Topic counts, sweep budgets and priors for one scan variant."""

    t_background: int = 25
    t_foreground: int = 25
    variant: str = "emerging"
    background_sweeps: int = 500
    foreground_sweeps: int = 200
    fold_in_sweeps: int = 20
    alpha: float = 0.5
    beta_background: float = 0.01
    beta_foreground: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "static" and self.t_foreground != 0:
            raise ValueError("static variant requires t_foreground == 0")
        if self.variant == "dynamic" and self.t_background != 0:
            raise ValueError("dynamic variant requires t_background == 0")
        if self.variant == "emerging" and (self.t_background <= 0 or self.t_foreground <= 0):
            raise ValueError("emerging variant requires both topic blocks non-empty")

    @property
    def n_topics(self) -> int:
        return self.t_background + self.t_foreground

    def hyperparameters(self) -> Hyperparameters:
        return Hyperparameters.symmetric(
            self.n_topics,
            alpha=self.alpha,
            beta_background=self.beta_background,
            beta_foreground=self.beta_foreground,
        )

    def for_variant(self, variant: str) -> "ScanConfig":
        """The same budgets re-targeted at another variant's topic split."""
        if variant == "static":
            return replace(self, variant="static", t_foreground=0)
        if variant == "dynamic":
            return replace(self, variant="dynamic", t_background=0)
        return replace(self, variant="emerging")


def fit_background(
    corpus: Corpus, config: ScanConfig, rng: np.random.Generator | None = None
) -> tuple[TopicModel, CountTables]:
    """Collapsed Gibbs over the background corpus only."""
    if config.t_background < 1:
        raise ValueError("background fit requires at least one background topic")
    if not corpus.background:
        raise ValueError("background corpus is empty")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    hyper = config.hyperparameters()
    tables = CountTables.initialize(
        list(corpus.background),
        n_words=len(corpus.vocabulary),
        t_background=config.t_background,
        t_foreground=0,
        rng=rng,
    )
    doc_ids = np.arange(tables.n_docs)
    gibbs_sweep(
        tables, hyper, doc_ids, (0, config.t_background), rng, sweeps=config.background_sweeps
    )
    model, _ = map_estimates(tables, hyper)
    model.vocab_hash = corpus.vocabulary.content_hash()
    return model, tables


def fit_foreground(
    model: TopicModel,
    documents: list[Document],
    config: ScanConfig,
    rng: np.random.Generator | None = None,
) -> TopicModel:
    """Learn the foreground block on `documents` with `model`'s topics frozen.

    The returned model's first rows are the input rows unchanged; the new
    rows are smoothed estimates from the foreground assignments alone.
    With t_foreground == 0 the input model is returned as-is; with no
    documents the new rows are the prior mean (uniform).
    """
    if model.t_background != config.t_background:
        raise ValueError(
            f"model has {model.t_background} frozen topics, config expects {config.t_background}"
        )
    if config.t_foreground == 0:
        return model
    if rng is None:
        rng = np.random.default_rng(config.seed)
    hyper = config.hyperparameters()
    t_bg, t_fg = config.t_background, config.t_foreground
    n_words = model.n_words

    base_n_kw = np.zeros((t_bg + t_fg, n_words), dtype=np.int64)
    base_n_k = np.zeros(t_bg + t_fg, dtype=np.int64)
    if t_bg > 0:
        if model.word_counts is None or model.topic_totals is None:
            raise ValueError("background model carries no counts; refit it before freezing")
        base_n_kw[:t_bg] = model.word_counts
        base_n_k[:t_bg] = model.topic_totals

    tables = CountTables.initialize(
        documents,
        n_words=n_words,
        t_background=t_bg,
        t_foreground=t_fg,
        rng=rng,
        base_n_kw=base_n_kw,
        base_n_k=base_n_k,
    )
    if documents:
        doc_ids = np.arange(tables.n_docs)
        gibbs_sweep(tables, hyper, doc_ids, (0, t_bg + t_fg), rng, sweeps=config.foreground_sweeps)

    fitted, _ = map_estimates(tables, hyper)
    phi = np.vstack([model.phi, fitted.phi[t_bg:]])
    return TopicModel(
        phi=phi,
        hyper=hyper,
        t_background=t_bg,
        t_foreground=t_fg,
        vocab_hash=model.vocab_hash,
    )
