"""History library: insert/retrieve semantics, persistence, separability stats."""

import numpy as np
import pytest

from intentkit.embedding import EmbedderSpec, embed
from intentkit.errors import (
    DataFormatError,
    InsufficientDataError,
    UnknownLabelError,
)
from intentkit.library import (
    HistoryEntry,
    IntentHistoryLibrary,
    build_library,
    discriminability_report,
    templated_explanation,
)
from intentkit.types import Context, IntentExplanation

from conftest import make_record
from oracles import brute_force_retrieve


def fill(library, rows):
    for user, label, text in rows:
        library.insert(user, label, IntentExplanation(text))


@pytest.fixture
def library(colors, embedder):
    lib = IntentHistoryLibrary(colors, embedder)
    fill(
        lib,
        [
            ("u1", "red", "tracking daily workouts"),
            ("u1", "green", "asking about plants"),
            ("u1", "red", "tracking meals and sleep"),
            ("u2", "red", "tracking daily workouts"),
        ],
    )
    return lib


class TestInsert:
    def test_unknown_label_rejected(self, library):
        with pytest.raises(UnknownLabelError):
            library.insert("u1", "purple", IntentExplanation("x"))

    def test_empty_user_rejected(self, library):
        with pytest.raises(ValueError):
            library.insert("", "red", IntentExplanation("x"))

    def test_label_stored_in_canonical_spelling(self, colors, embedder):
        lib = IntentHistoryLibrary(colors, embedder)
        entry = lib.insert("u1", "  RED ", IntentExplanation("x"))
        assert entry.label == "red"

    def test_seq_increments(self, library):
        assert [e.seq for e in library.entries] == [0, 1, 2, 3]
        assert len(library) == 4

    def test_entries_for_user(self, library):
        assert len(library.entries_for_user("u1")) == 3
        assert len(library.entries_for_user("nobody")) == 0


class TestRetrieve:
    def test_filters_by_user(self, library):
        result = library.retrieve("u2", ["red", "green"], "tracking daily workouts")
        assert [m.entry.user for m in result.matches] == ["u2"]

    def test_filters_by_options(self, library):
        result = library.retrieve("u1", ["green"], "asking about plants")
        assert [m.entry.label for m in result.matches] == ["green"]

    def test_options_resolve_cosmetic_variants(self, library):
        result = library.retrieve("u1", [" GREEN "], "asking about plants")
        assert len(result) == 1

    def test_unknown_options_dropped(self, library):
        result = library.retrieve("u1", ["purple", "mauve"], "anything at all")
        assert len(result) == 0

    def test_ranked_by_similarity(self, library):
        result = library.retrieve("u1", ["red", "green"], "tracking daily workouts")
        labels = [m.entry.label for m in result.matches]
        assert labels[0] == "red"
        sims = [m.similarity for m in result.matches]
        assert sims == sorted(sims, reverse=True)

    def test_k_truncates(self, library):
        result = library.retrieve("u1", ["red", "green"], "tracking", k=1)
        assert len(result) == 1

    def test_k_must_be_positive(self, library):
        with pytest.raises(ValueError):
            library.retrieve("u1", ["red"], "tracking", k=0)

    def test_tie_breaks_by_insertion_order(self, colors, embedder):
        lib = IntentHistoryLibrary(colors, embedder)
        fill(
            lib,
            [
                ("u1", "red", "identical words"),
                ("u1", "blue", "identical words"),
                ("u1", "green", "identical words"),
            ],
        )
        result = lib.retrieve("u1", ["blue", "red", "green"], "identical words")
        assert [m.entry.seq for m in result.matches] == [0, 1, 2]
        assert all(m.similarity == pytest.approx(1.0) for m in result.matches)

    def test_triples_in_rank_order(self, library):
        result = library.retrieve("u1", ["red"], "tracking daily workouts", k=2)
        triples = result.triples()
        assert triples[0] == ("u1", "red", "tracking daily workouts")
        assert len(triples) == 2

    def test_matches_brute_force_on_random_libraries(self, colors, embedder):
        rng = np.random.default_rng(11)
        vocab = [f"w{i}" for i in range(25)]
        labels = colors.labels
        for _ in range(25):
            lib = IntentHistoryLibrary(colors, embedder)
            for _ in range(int(rng.integers(1, 40))):
                lib.insert(
                    f"u{rng.integers(3)}",
                    labels[rng.integers(len(labels))],
                    IntentExplanation(
                        " ".join(rng.choice(vocab, size=4, replace=True))
                    ),
                )
            user = f"u{rng.integers(3)}"
            options = list(rng.choice(labels, size=2, replace=False))
            query = " ".join(rng.choice(vocab, size=3))
            k = int(rng.integers(1, 5))
            got = lib.retrieve(user, options, query, k=k)
            expected = brute_force_retrieve(
                lib.entries, user, options, embed(query, embedder), k
            )
            assert [m.entry.seq for m in got.matches] == [s for s, _ in expected]
            for m, (_, sim) in zip(got.matches, expected):
                assert m.similarity == pytest.approx(sim, abs=1e-12)


class TestPersistence:
    def test_round_trip(self, library, colors, tmp_path):
        path = tmp_path / "library.jsonl"
        library.save(path)
        loaded = IntentHistoryLibrary.load(path, colors)
        assert loaded.embedder == library.embedder
        assert len(loaded) == len(library)
        for a, b in zip(loaded.entries, library.entries):
            assert (a.user, a.label, a.seq) == (b.user, b.label, b.seq)
            assert a.explanation == b.explanation
            np.testing.assert_allclose(a.embedding, b.embedding)

    def test_loaded_library_retrieves_identically(self, library, colors, tmp_path):
        path = tmp_path / "library.jsonl"
        library.save(path)
        loaded = IntentHistoryLibrary.load(path, colors)
        a = library.retrieve("u1", ["red", "green"], "tracking daily workouts")
        b = loaded.retrieve("u1", ["red", "green"], "tracking daily workouts")
        assert [m.entry.seq for m in a.matches] == [m.entry.seq for m in b.matches]

    def test_empty_file_rejected(self, colors, tmp_path):
        path = tmp_path / "library.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DataFormatError, match="empty"):
            IntentHistoryLibrary.load(path, colors)

    def test_bad_header_rejected(self, colors, tmp_path):
        path = tmp_path / "library.jsonl"
        path.write_text('{"not_embedder": 1}\n', encoding="utf-8")
        with pytest.raises(DataFormatError, match="header"):
            IntentHistoryLibrary.load(path, colors)

    def test_foreign_label_rejected(self, library, tmp_path):
        from intentkit.types import Taxonomy

        path = tmp_path / "library.jsonl"
        library.save(path)
        narrower = Taxonomy("narrow", ("red",))
        with pytest.raises(DataFormatError, match="green"):
            IntentHistoryLibrary.load(path, narrower)

    def test_dim_mismatch_rejected(self, library, colors, tmp_path):
        import json

        path = tmp_path / "library.jsonl"
        library.save(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        payload = json.loads(lines[1])
        payload["embedding"] = payload["embedding"][:-1]
        lines[1] = json.dumps(payload)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="dim"):
            IntentHistoryLibrary.load(path, colors)


class TestTemplatedExplanation:
    def test_personalized_and_mentions_label(self):
        ctx = Context(user="u1", situational_text="", action_text="logged a run")
        exp = templated_explanation("red", ctx)
        assert exp.kind == "personalized"
        assert "red" in exp.text
        assert "logged a run" in exp.text

    def test_build_library_uses_fallback(self, colors, embedder):
        records = [
            make_record("u1", "logged a run", "red"),
            make_record("u1", "asked about ferns", "green", explanation="plant care"),
        ]
        lib = build_library(records, colors, embedder)
        assert lib.entries[0].explanation.kind == "personalized"
        assert lib.entries[1].explanation.text == "plant care"


def make_entry(user, label, vec, seq):
    return HistoryEntry(
        user=user,
        label=label,
        explanation=IntentExplanation("e"),
        embedding=np.asarray(vec, dtype=np.float64),
        seq=seq,
    )


class TestDiscriminability:
    def test_hand_computed_small_case(self):
        # u1 holds two identical "red" vectors and one orthogonal "green";
        # u2 holds one "red" pair member at 45 degrees to the others.
        e0, e1 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        diag = np.array([1.0, 1.0]) / np.sqrt(2)
        entries = [
            make_entry("u1", "red", e0, 0),
            make_entry("u1", "red", e0, 1),
            make_entry("u1", "green", e1, 2),
            make_entry("u2", "red", diag, 3),
        ]
        report = discriminability_report(entries)
        # intra pairs: (0,1)=1, (0,3)=(1,3)=cos45; inter: (0,2)=(1,2)=0, (2,3)=cos45
        cos45 = 1 / np.sqrt(2)
        assert report.intra_sim == pytest.approx((1 + 2 * cos45) / 3)
        assert report.inter_sim == pytest.approx(cos45 / 3)
        # only u1 has >= 2 entries; all three of its held-out entries find a
        # same-label neighbor except "green", whose pool is all "red".
        assert report.user_loo_acc == pytest.approx(2 / 3)
        assert report.n_users_scored == 1
        # global R@1: 0<->1 hit each other; 2's best is 3 (cos45 > 0) miss;
        # 3's best is 0 (ties at cos45, lowest index wins) hit.
        assert report.global_r1 == pytest.approx(3 / 4)
        assert report.n_entries == 4

    def test_needs_two_entries(self):
        with pytest.raises(InsufficientDataError):
            discriminability_report([make_entry("u1", "red", [1.0, 0.0], 0)])

    def test_needs_both_pair_kinds(self):
        same = [
            make_entry("u1", "red", [1.0, 0.0], 0),
            make_entry("u1", "red", [0.0, 1.0], 1),
        ]
        with pytest.raises(InsufficientDataError, match="cross-label"):
            discriminability_report(same)
        different = [
            make_entry("u1", "red", [1.0, 0.0], 0),
            make_entry("u1", "green", [0.0, 1.0], 1),
        ]
        with pytest.raises(InsufficientDataError, match="same-label"):
            discriminability_report(different)

    def test_needs_a_scorable_user(self):
        entries = [
            make_entry("u1", "red", [1.0, 0.0], 0),
            make_entry("u2", "red", [1.0, 0.0], 1),
            make_entry("u3", "green", [0.0, 1.0], 2),
        ]
        with pytest.raises(InsufficientDataError, match="user"):
            discriminability_report(entries)
