"""Corpus representation: tokenisation, vocabulary, the background/foreground
split, and the location registry with great-circle neighborhoods."""

from __future__ import annotations

import csv
import datetime
import json
import logging
import math
import re
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0

_TOKEN_CLEAN = re.compile(r"[^a-z0-9\s]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, strip non-alphanumerics, split on whitespace."""
    return _TOKEN_CLEAN.sub(" ", text.lower()).split()


def day_index(value) -> int:
    """Normalise a timestamp to an integer day index.

    Integers pass through; ISO-8601 date strings and ``datetime.date``
    values map to their proleptic Gregorian ordinal, so calendar inputs
    share one consistent axis.
    """
    if isinstance(value, bool):
        raise TypeError(f"not a date: {value!r}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, datetime.date):
        return value.toordinal()
    if isinstance(value, str):
        return datetime.date.fromisoformat(value).toordinal()
    raise TypeError(f"not a date: {value!r}")


class Vocabulary:
    """Dense word <-> id bijection over a fixed word set."""

    def __init__(self, words):
        self.words = tuple(words)
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate words in vocabulary")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id_of(self, word: str) -> int:
        return self.index[word]

    def word_of(self, word_id: int) -> str:
        return self.words[word_id]

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.index[t] for t in tokens], dtype=np.int32)

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for w in self.words:
            h.update(w.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()

    @classmethod
    def from_token_lists(cls, token_lists) -> "Vocabulary":
        seen = set()
        for toks in token_lists:
            seen.update(toks)
        return cls(sorted(seen))


@dataclass(frozen=True)
class Document:
    """One timestamped, geolocated token sequence.

    ``label`` is a held-out class used only by the simulator; detection
    code must never read it.
    """

    id: str
    tokens: tuple[int, ...]
    timestamp: int
    location: str
    label: str | None = None

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def token_array(self) -> np.ndarray:
        return np.array(self.tokens, dtype=np.int32)


@dataclass(frozen=True)
class Corpus:
    background: tuple[Document, ...]
    foreground: tuple[Document, ...]
    vocabulary: Vocabulary

    def __post_init__(self):
        n_words = len(self.vocabulary)
        for doc in list(self.background) + list(self.foreground):
            if doc.tokens and max(doc.tokens) >= n_words:
                raise ValueError(f"document {doc.id} has out-of-vocabulary token ids")
        if self.background and self.foreground:
            last_bg = max(d.timestamp for d in self.background)
            first_fg = min(d.timestamp for d in self.foreground)
            if last_bg >= first_fg:
                raise ValueError(
                    "background timestamps must strictly precede foreground timestamps"
                )

    @property
    def n_background(self) -> int:
        return len(self.background)

    @property
    def n_foreground(self) -> int:
        return len(self.foreground)

    def foreground_window(self, first_day: int, last_day: int) -> list[Document]:
        """Foreground documents with timestamp in [first_day, last_day]."""
        return [d for d in self.foreground if first_day <= d.timestamp <= last_day]


class LocationRegistry:
    """The ordered set of data-generating locations with their centroids."""

    def __init__(self, locations):
        self.locations = tuple((str(i), float(lat), float(lon)) for i, lat, lon in locations)
        self.ids = tuple(loc[0] for loc in self.locations)
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate location ids")
        for loc_id, lat, lon in self.locations:
            if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
                raise ValueError(f"location {loc_id} has invalid coordinates ({lat}, {lon})")
        self.index = {loc_id: i for i, loc_id in enumerate(self.ids)}
        self._neighbor_order: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, loc_id: str) -> bool:
        return loc_id in self.index

    def coordinates(self) -> np.ndarray:
        return np.array([(lat, lon) for _, lat, lon in self.locations], dtype=np.float64)

    def neighbor_order(self) -> np.ndarray:
        """Row c holds all location indices sorted by distance from c.

        Distance ties break by ascending location id so neighborhoods are
        deterministic.  Cached; the registry is immutable.
        """
        if self._neighbor_order is None:
            coords = np.radians(self.coordinates())
            n = len(self)
            order = np.empty((n, n), dtype=np.int64)
            id_rank = np.argsort(np.argsort(np.array(self.ids)))
            for c in range(n):
                d = _haversine_km(coords[c, 0], coords[c, 1], coords[:, 0], coords[:, 1])
                order[c] = np.lexsort((id_rank, d))
            self._neighbor_order = order
        return self._neighbor_order

    def neighborhood(self, center: str, size: int) -> list[str]:
        """The `size` locations nearest to `center`, nearest first."""
        if center not in self.index:
            raise KeyError(f"unknown location {center!r}")
        if not 1 <= size <= len(self):
            raise ValueError(f"neighborhood size {size} outside [1, {len(self)}]")
        row = self.neighbor_order()[self.index[center], :size]
        return [self.ids[i] for i in row]

    @classmethod
    def from_csv(cls, path) -> "LocationRegistry":
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            required = {"zipcode", "latitude", "longitude"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ValueError(f"registry CSV must have columns {sorted(required)}")
            rows = [(r["zipcode"], float(r["latitude"]), float(r["longitude"])) for r in reader]
        if not rows:
            raise ValueError("empty location registry")
        return cls(rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["zipcode", "latitude", "longitude"])
            for loc_id, lat, lon in self.locations:
                writer.writerow([loc_id, repr(lat), repr(lon)])


def _haversine_km(lat1, lon1, lat2, lon2):
    # All arguments in radians.
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance between two (lat, lon) pairs in degrees."""
    return float(
        _haversine_km(
            math.radians(lat1), math.radians(lon1), math.radians(lat2), math.radians(lon2)
        )
    )


def ingest(records, registry: LocationRegistry, split_day) -> Corpus:
    """Build a Corpus from raw records.

    Each record needs ``text``, ``date`` and ``zipcode`` (``label`` is
    optional).  Records dated before ``split_day`` become background
    documents, the rest foreground.  Records at unregistered locations are
    rejected with a logged diagnostic; an input yielding no documents at
    all is an error.
    """
    split = day_index(split_day)
    kept = []
    n_rejected = 0
    for i, rec in enumerate(records):
        loc = str(rec["zipcode"])
        if loc not in registry:
            n_rejected += 1
            log.warning("record %d rejected: unknown location %r", i, loc)
            continue
        kept.append(
            (
                str(rec.get("id", f"doc-{i:06d}")),
                tokenize(rec["text"]),
                day_index(rec["date"]),
                loc,
                rec.get("label"),
            )
        )
    if not kept:
        raise ValueError(f"no ingestible records ({n_rejected} rejected)")

    vocabulary = Vocabulary.from_token_lists(toks for _, toks, _, _, _ in kept)
    background = []
    foreground = []
    for doc_id, toks, day, loc, label in kept:
        doc = Document(
            id=doc_id,
            tokens=tuple(vocabulary.id_of(t) for t in toks),
            timestamp=day,
            location=loc,
            label=label,
        )
        (background if day < split else foreground).append(doc)
    return Corpus(tuple(background), tuple(foreground), vocabulary)


def read_jsonl(path):
    """Yield one record dict per non-blank line."""
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path, corpus: Corpus) -> None:
    """Write all documents as line-delimited JSON, background first.

    Timestamps are emitted as ISO dates (day index read as a Gregorian
    ordinal), matching what ``ingest`` parses back.
    """
    words = corpus.vocabulary.words
    with open(path, "w") as handle:
        for doc in list(corpus.background) + list(corpus.foreground):
            rec = {
                "id": doc.id,
                "text": " ".join(words[t] for t in doc.tokens),
                "date": datetime.date.fromordinal(doc.timestamp).isoformat(),
                "zipcode": doc.location,
            }
            if doc.label is not None:
                rec["label"] = doc.label
            handle.write(json.dumps(rec) + "\n")
