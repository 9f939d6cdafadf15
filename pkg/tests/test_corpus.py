import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semscan.corpus import (
    LocationRegistry,
    Vocabulary,
    day_index,
    haversine_km,
    ingest,
    read_jsonl,
    tokenize,
    write_jsonl,
)

from conftest import make_corpus


class TestTokenize:
    def test_lowercase_and_punctuation(self):
        assert tokenize("FEVER, cough") == ["fever", "cough"]

    def test_empty_text(self):
        assert tokenize("") == []
        assert tokenize("   ,,, !!") == []

    def test_numbers_kept(self):
        assert tokenize("temp 102.5F") == ["temp", "102", "5f"]

    @given(st.text())
    @settings(max_examples=100)
    def test_deterministic(self, text):
        assert tokenize(text) == tokenize(text)

    @given(st.text())
    @settings(max_examples=100)
    def test_idempotent_on_own_output(self, text):
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once


class TestVocabulary:
    def test_bijection_roundtrip(self):
        vocab = Vocabulary(("cough", "fever", "rash"))
        for word in vocab.words:
            assert vocab.word_of(vocab.id_of(word)) == word
        for i in range(len(vocab)):
            assert vocab.id_of(vocab.word_of(i)) == i

    def test_ids_dense(self):
        vocab = Vocabulary.from_token_lists([["b", "a"], ["c", "a"]])
        assert sorted(vocab.index.values()) == [0, 1, 2]

    def test_duplicate_words_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary(("a", "a"))

    def test_hash_stable_and_content_sensitive(self):
        v1 = Vocabulary(("a", "b"))
        v2 = Vocabulary(("a", "b"))
        v3 = Vocabulary(("a", "c"))
        assert v1.content_hash() == v2.content_hash()
        assert v1.content_hash() != v3.content_hash()


class TestIngest:
    REGISTRY = LocationRegistry([("7", 40.0, -80.0), ("8", 40.5, -80.5)])

    def test_split_to_background(self):
        records = [{"text": "FEVER, cough", "date": 3, "zipcode": "7"}]
        corpus = ingest(records, self.REGISTRY, split_day=10)
        assert corpus.n_background == 1 and corpus.n_foreground == 0
        doc = corpus.background[0]
        words = [corpus.vocabulary.word_of(t) for t in doc.tokens]
        assert words == ["fever", "cough"]

    def test_split_to_foreground(self):
        records = [{"text": "FEVER, cough", "date": 3, "zipcode": "7"}]
        corpus = ingest(records, self.REGISTRY, split_day=2)
        assert corpus.n_background == 0 and corpus.n_foreground == 1

    def test_empty_text_document_retained(self):
        records = [
            {"text": "", "date": 1, "zipcode": "7"},
            {"text": "cough", "date": 1, "zipcode": "7"},
        ]
        corpus = ingest(records, self.REGISTRY, split_day=10)
        assert corpus.n_background == 2
        assert corpus.background[0].n_tokens == 0

    def test_unknown_location_rejected_with_diagnostic(self, caplog):
        records = [
            {"text": "cough", "date": 1, "zipcode": "99"},
            {"text": "fever", "date": 1, "zipcode": "7"},
        ]
        with caplog.at_level(logging.WARNING):
            corpus = ingest(records, self.REGISTRY, split_day=10)
        assert corpus.n_background == 1
        assert any("99" in rec.message for rec in caplog.records)

    def test_empty_corpus_is_error(self):
        with pytest.raises(ValueError):
            ingest([], self.REGISTRY, split_day=10)
        with pytest.raises(ValueError):
            ingest([{"text": "x", "date": 1, "zipcode": "99"}], self.REGISTRY, split_day=10)

    def test_iso_dates(self):
        records = [
            {"text": "a", "date": "2003-12-31", "zipcode": "7"},
            {"text": "b", "date": "2004-01-01", "zipcode": "7"},
        ]
        corpus = ingest(records, self.REGISTRY, split_day="2004-01-01")
        assert corpus.n_background == 1 and corpus.n_foreground == 1

    def test_label_carried_but_optional(self):
        records = [{"text": "a", "date": 1, "zipcode": "7", "label": "code9"}]
        corpus = ingest(records, self.REGISTRY, split_day=10)
        assert corpus.background[0].label == "code9"

    def test_jsonl_roundtrip(self, tmp_path):
        corpus = make_corpus([[0, 1], [2], []], [[1, 1, 2]], n_words=3, split_day=731216)
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, corpus)
        back = ingest(read_jsonl(path), LocationRegistry([("z000", 0.0, 0.0)]), 731216)
        assert back.n_background == 3 and back.n_foreground == 1
        assert [d.id for d in back.background] == ["bg-0", "bg-1", "bg-2"]
        first = back.background[0]
        assert [back.vocabulary.word_of(t) for t in first.tokens] == ["w000", "w001"]
        assert back.background[2].tokens == ()

    def test_vocabulary_canonical_under_record_order(self):
        records = [
            {"text": "zebra apple", "date": 1, "zipcode": "7"},
            {"text": "mango apple", "date": 2, "zipcode": "7"},
        ]
        a = ingest(records, self.REGISTRY, split_day=10)
        b = ingest(list(reversed(records)), self.REGISTRY, split_day=10)
        assert a.vocabulary.words == b.vocabulary.words


class TestCorpusInvariants:
    def test_split_ordering_enforced(self):
        from semscan.corpus import Corpus, Document

        vocab = Vocabulary(("w",))
        early = Document(id="a", tokens=(0,), timestamp=5, location="z")
        late = Document(id="b", tokens=(0,), timestamp=5, location="z")
        with pytest.raises(ValueError):
            Corpus((late,), (early,), vocab)

    def test_out_of_vocab_token_rejected(self):
        with pytest.raises(ValueError):
            make_corpus([[5]], [], n_words=3)


class TestDayIndex:
    def test_iso_string_matches_date(self):
        import datetime

        assert day_index("2003-01-01") == datetime.date(2003, 1, 1).toordinal()

    def test_int_passthrough(self):
        assert day_index(42) == 42

    def test_bad_type(self):
        with pytest.raises(TypeError):
            day_index(3.5)


class TestNeighborhood:
    def test_size_one_is_self(self, grid_registry):
        assert grid_registry.neighborhood("g12", 1) == ["g12"]

    def test_full_size_is_everything(self, grid_registry):
        got = grid_registry.neighborhood("g12", len(grid_registry))
        assert sorted(got) == sorted(grid_registry.ids)

    def test_collinear_points_sorted_by_distance(self, line_registry):
        # Brute-force oracle: sort all locations by haversine distance.
        coords = {loc: (lat, lon) for loc, lat, lon in line_registry.locations}
        center = "z0"
        expected = sorted(
            line_registry.ids, key=lambda z: (haversine_km(*coords[center], *coords[z]), z)
        )
        assert line_registry.neighborhood(center, 3) == expected[:3]
        assert line_registry.neighborhood(center, 3) == ["z0", "z1", "z2"]

    def test_matches_bruteforce_on_random_points(self, rng):
        lats = rng.uniform(-60, 60, size=15)
        lons = rng.uniform(-170, 170, size=15)
        registry = LocationRegistry(
            [(f"r{i:02d}", lats[i], lons[i]) for i in range(15)]
        )
        coords = {loc: (lat, lon) for loc, lat, lon in registry.locations}
        for center in registry.ids:
            expected = sorted(
                registry.ids, key=lambda z: (haversine_km(*coords[center], *coords[z]), z)
            )
            for size in (1, 4, 15):
                assert registry.neighborhood(center, size) == expected[:size]

    def test_nested_growth(self, grid_registry):
        for center in ("g00", "g12", "g24"):
            for size in range(1, len(grid_registry)):
                smaller = set(grid_registry.neighborhood(center, size))
                larger = set(grid_registry.neighborhood(center, size + 1))
                assert smaller < larger

    def test_exact_length(self, grid_registry):
        for size in (1, 7, 25):
            assert len(grid_registry.neighborhood("g03", size)) == size

    def test_size_bounds(self, grid_registry):
        with pytest.raises(ValueError):
            grid_registry.neighborhood("g00", 0)
        with pytest.raises(ValueError):
            grid_registry.neighborhood("g00", 26)

    def test_tie_break_by_id(self):
        # Two locations equidistant from the center: lower id first.
        registry = LocationRegistry(
            [("c", 40.0, -80.0), ("b", 40.01, -80.0), ("a", 39.99, -80.0)]
        )
        assert registry.neighborhood("c", 3) == ["c", "a", "b"]


class TestRegistry:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            LocationRegistry([("a", 0, 0), ("a", 1, 1)])

    def test_coordinate_bounds(self):
        with pytest.raises(ValueError):
            LocationRegistry([("a", 91.0, 0.0)])
        with pytest.raises(ValueError):
            LocationRegistry([("a", 0.0, -181.0)])

    def test_csv_roundtrip(self, tmp_path, grid_registry):
        path = tmp_path / "registry.csv"
        grid_registry.to_csv(path)
        back = LocationRegistry.from_csv(path)
        assert back.ids == grid_registry.ids
        assert np.allclose(back.coordinates(), grid_registry.coordinates())

    def test_known_haversine_value(self):
        # One degree of latitude is ~111.2 km on a 6371 km sphere.
        d = haversine_km(40.0, -80.0, 41.0, -80.0)
        assert math.isclose(d, 2 * math.pi * 6371.0 / 360.0, rel_tol=1e-6)
