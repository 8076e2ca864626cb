"""Per-user intent history storage with filtered top-k retrieval.

The library holds (user, intent label, explanation) triples. Retrieval
first filters to one user's entries whose label is among the caller's
candidate options, then ranks the survivors by cosine similarity between
the query embedding and the stored explanation embeddings. Ties break by
insertion order, so identical inputs always produce identical rankings.

It also computes a discriminability report over a whole corpus of entries:
how similar same-label explanations are versus cross-label ones, and how
recoverable labels are from nearest neighbors (per-user leave-one-out and
global top-1 recall).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import EmbedderSpec, cosine, embed
from .errors import DataFormatError, InsufficientDataError, UnknownLabelError
from .types import Context, IntentExplanation, Taxonomy, is_no_match

DEFAULT_K = 3


@dataclass(frozen=True)
class HistoryEntry:
    user: str
    label: str
    explanation: IntentExplanation
    embedding: np.ndarray
    seq: int

    def to_dict(self) -> dict:
        return {
            "user": self.user,
            "label": self.label,
            "explanation": {"text": self.explanation.text, "kind": self.explanation.kind},
            "embedding": [float(x) for x in self.embedding],
            "seq": self.seq,
        }


@dataclass(frozen=True)
class ScoredEntry:
    entry: HistoryEntry
    similarity: float


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked matches for one query, most similar first."""

    matches: tuple[ScoredEntry, ...]

    def __len__(self) -> int:
        return len(self.matches)

    def triples(self) -> list[tuple[str, str, str]]:
        """(user, label, explanation text) rows in rank order."""
        return [
            (m.entry.user, m.entry.label, m.entry.explanation.text)
            for m in self.matches
        ]


@dataclass(frozen=True)
class DiscriminabilityReport:
    intra_sim: float
    inter_sim: float
    user_loo_acc: float
    global_r1: float
    n_entries: int
    n_users_scored: int

    def to_dict(self) -> dict:
        return {
            "intra_sim": self.intra_sim,
            "inter_sim": self.inter_sim,
            "user_loo_acc": self.user_loo_acc,
            "global_r1": self.global_r1,
            "n_entries": self.n_entries,
            "n_users_scored": self.n_users_scored,
        }


class IntentHistoryLibrary:
    """Append-only store of labeled, embedded intent explanations.

    Concurrency: inserts are serialized behind a lock and the entry list is
    append-only, so readers may run concurrently with each other; a reader
    racing a writer sees a consistent prefix.
    """

    def __init__(self, taxonomy: Taxonomy, embedder: EmbedderSpec):
        self.taxonomy = taxonomy
        self.embedder = embedder
        self._entries: list[HistoryEntry] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[HistoryEntry, ...]:
        return tuple(self._entries)

    def entries_for_user(self, user: str) -> tuple[HistoryEntry, ...]:
        return tuple(e for e in self._entries if e.user == user)

    def insert(
        self, user: str, label: str, explanation: IntentExplanation
    ) -> HistoryEntry:
        """Embed the explanation and append one entry for this user."""
        member = self.taxonomy.canonicalize(label)
        if is_no_match(member):
            raise UnknownLabelError(
                f"label {label!r} is not in taxonomy {self.taxonomy.name!r}"
            )
        if not user:
            raise ValueError("user must be non-empty")
        vector = embed(explanation.text, self.embedder)
        with self._lock:
            entry = HistoryEntry(
                user=user,
                label=member,
                explanation=explanation,
                embedding=vector,
                seq=len(self._entries),
            )
            self._entries.append(entry)
        return entry

    def retrieve(
        self,
        user: str,
        options: tuple[str, ...] | list[str],
        query_text: str,
        k: int = DEFAULT_K,
    ) -> RetrievalResult:
        """Top-k entries for this user whose label is among the options.

        Ranking is by cosine similarity between the query embedding and the
        stored explanation embeddings, descending, with ties broken by
        insertion order. Fewer than k survivors returns them all; an empty
        filter result is a valid empty ranking.
        """
        if k < 1:
            raise ValueError("k must be at least 1")
        wanted = set()
        for option in options:
            member = self.taxonomy.canonicalize(option)
            if not is_no_match(member):
                wanted.add(member)
        candidates = [
            e for e in self._entries if e.user == user and e.label in wanted
        ]
        if not candidates:
            return RetrievalResult(matches=())
        query_vec = embed(query_text, self.embedder)
        scored = [
            ScoredEntry(entry=e, similarity=cosine(query_vec, e.embedding))
            for e in candidates
        ]
        scored.sort(key=lambda s: (-s.similarity, s.entry.seq))
        return RetrievalResult(matches=tuple(scored[:k]))

    # --- persistence -----------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write a JSONL file: embedder spec header, then one entry per line."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"embedder": self.embedder.to_dict()}) + "\n")
            for entry in self._entries:
                fh.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path, taxonomy: Taxonomy) -> "IntentHistoryLibrary":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line for line in (l.strip() for l in fh) if line]
        if not lines:
            raise DataFormatError(f"{path}: empty library file")
        try:
            header = json.loads(lines[0])
            spec = EmbedderSpec.from_dict(header["embedder"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: bad library header: {exc}") from exc
        lib = cls(taxonomy, spec)
        for lineno, line in enumerate(lines[1:], start=2):
            try:
                payload = json.loads(line)
                explanation = IntentExplanation(
                    text=payload["explanation"]["text"],
                    kind=payload["explanation"]["kind"],
                )
                entry = HistoryEntry(
                    user=payload["user"],
                    label=payload["label"],
                    explanation=explanation,
                    embedding=np.asarray(payload["embedding"], dtype=np.float64),
                    seq=int(payload["seq"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
            if entry.label not in taxonomy:
                raise DataFormatError(
                    f"{path}: line {lineno}: label {entry.label!r} not in "
                    f"taxonomy {taxonomy.name!r}"
                )
            if entry.embedding.shape != (spec.dim,):
                raise DataFormatError(
                    f"{path}: line {lineno}: embedding dim "
                    f"{entry.embedding.shape[0]} != {spec.dim}"
                )
            lib._entries.append(entry)
        return lib


def templated_explanation(label: str, context: Context) -> IntentExplanation:
    """Deterministic personalized-format fallback when a model emits none."""
    text = (
        f"[PersonalMotivation] This user has a recurring tendency toward "
        f"{label}. [Context] {context.action_text} [Strategy] Treat similar "
        f"situations from this user as {label}."
    )
    return IntentExplanation(text=text, kind="personalized")


def build_library(
    records,
    taxonomy: Taxonomy,
    embedder: EmbedderSpec,
) -> IntentHistoryLibrary:
    """Insert one entry per record, falling back to a templated explanation."""
    lib = IntentHistoryLibrary(taxonomy, embedder)
    for record in records:
        explanation = record.explanation or templated_explanation(
            record.gt_label, record.context
        )
        lib.insert(record.context.user, record.gt_label, explanation)
    return lib


# --- discriminability --------------------------------------------------------


def _nearest_index(matrix: np.ndarray, i: int, candidates: list[int]) -> int:
    """Index of the most similar candidate to row i, ties by lowest index."""
    best = candidates[0]
    best_sim = matrix[i, best]
    for j in candidates[1:]:
        sim = matrix[i, j]
        if sim > best_sim:
            best, best_sim = j, sim
    return best


def discriminability_report(
    entries: list[HistoryEntry] | tuple[HistoryEntry, ...],
) -> DiscriminabilityReport:
    """Corpus-level separability statistics over explanation embeddings.

    intra_sim / inter_sim: mean cosine over all same-label / cross-label
    unordered pairs. user_loo_acc: for each user with at least two entries,
    hold out each entry and check whether its nearest neighbor among the
    user's remaining entries (no label filtering) carries the same label;
    per-user accuracies are macro-averaged. global_r1: fraction of entries
    whose nearest neighbor across the whole corpus (excluding itself)
    shares the label.
    """
    entries = list(entries)
    n = len(entries)
    if n < 2:
        raise InsufficientDataError("discriminability needs at least two entries")

    vectors = np.stack([e.embedding for e in entries])
    sims = np.clip(vectors @ vectors.T, -1.0, 1.0)
    labels = [e.label for e in entries]

    intra_vals: list[float] = []
    inter_vals: list[float] = []
    for i in range(n):
        for j in range(i + 1, n):
            if labels[i] == labels[j]:
                intra_vals.append(float(sims[i, j]))
            else:
                inter_vals.append(float(sims[i, j]))
    if not intra_vals:
        raise InsufficientDataError("no same-label pair in the corpus")
    if not inter_vals:
        raise InsufficientDataError("no cross-label pair in the corpus")

    by_user: dict[str, list[int]] = {}
    for idx, entry in enumerate(entries):
        by_user.setdefault(entry.user, []).append(idx)

    user_accs: list[float] = []
    for indices in by_user.values():
        if len(indices) < 2:
            continue
        hits = 0
        for i in indices:
            pool = [j for j in indices if j != i]
            nearest = _nearest_index(sims, i, pool)
            hits += int(labels[nearest] == labels[i])
        user_accs.append(hits / len(indices))
    if not user_accs:
        raise InsufficientDataError("no user has two or more entries")

    r1_hits = 0
    all_indices = list(range(n))
    for i in all_indices:
        pool = [j for j in all_indices if j != i]
        nearest = _nearest_index(sims, i, pool)
        r1_hits += int(labels[nearest] == labels[i])

    return DiscriminabilityReport(
        intra_sim=float(np.mean(intra_vals)),
        inter_sim=float(np.mean(inter_vals)),
        user_loo_acc=float(np.mean(user_accs)),
        global_r1=r1_hits / n,
        n_entries=n,
        n_users_scored=len(user_accs),
    )
