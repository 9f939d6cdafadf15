import numpy as np
import pytest

from semscan.corpus import Corpus, Document, LocationRegistry, Vocabulary


def make_doc(doc_id, tokens, timestamp=100, location="z000", label=None):
    return Document(
        id=doc_id, tokens=tuple(tokens), timestamp=timestamp, location=location, label=label
    )


def make_corpus(background_tokens, foreground_tokens, n_words, split_day=100):
    """Corpus from raw token-id lists; vocab is w000..w{n_words-1}."""
    vocab = Vocabulary(tuple(f"w{i:03d}" for i in range(n_words)))
    background = tuple(
        make_doc(f"bg-{i}", toks, timestamp=split_day - 1)
        for i, toks in enumerate(background_tokens)
    )
    foreground = tuple(
        make_doc(f"fg-{i}", toks, timestamp=split_day) for i, toks in enumerate(foreground_tokens)
    )
    return Corpus(background, foreground, vocab)


@pytest.fixture
def grid_registry():
    """5x5 grid of locations, ids g00..g24, row-major from the south-west."""
    rows = []
    for i in range(5):
        for j in range(5):
            rows.append((f"g{i * 5 + j:02d}", 40.0 + 0.1 * i, -80.0 + 0.1 * j))
    return LocationRegistry(rows)


@pytest.fixture
def line_registry():
    """Collinear locations spaced ~1.11 km apart going north from z0."""
    return LocationRegistry([(f"z{i}", 40.0 + 0.01 * i, -80.0) for i in range(6)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
