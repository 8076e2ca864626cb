"""Text embedding backends and cosine similarity.

Two backends sit behind one spec:

- "hashed_bow": a deterministic hashed bag-of-words. Tokens are hashed with
  a stable 64-bit digest into ``dim`` buckets, counts accumulate, and the
  vector is L2-normalized. No vocabulary, no network, reproducible across
  processes and platforms. This is the default for tests and offline runs.
- "remote": POSTs ``{"model": ..., "input": [text, ...]}`` to an HTTP
  endpoint and reads ``{"data": [{"embedding": [...]}, ...]}`` back,
  re-normalizing locally so cosine scores stay in [-1, 1] regardless of
  what the server returns.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np
import requests

from .errors import (
    DimensionMismatchError,
    EmbeddingFailedError,
    EmptyTextError,
    RemoteUnavailableError,
    RequestTimeoutError,
    ZeroVectorError,
)

BACKENDS = ("hashed_bow", "remote")

# Word characters minus underscore: underscores count as punctuation, so
# they separate tokens just like whitespace does. CJK ideographs are word
# characters, which keeps non-segmented text usable without a tokenizer.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_DEFAULT_TIMEOUT_MS = 30_000


@dataclass(frozen=True)
class EmbedderSpec:
    """Which backend produces vectors, and at what dimensionality."""

    backend: str = "hashed_bow"
    dim: int = 256
    endpoint_url: str | None = None
    model_name: str | None = None

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown embedding backend {self.backend!r}")
        if self.dim < 1:
            raise ValueError("embedding dim must be positive")
        if self.backend == "hashed_bow" and self.dim < 16:
            raise ValueError("hashed_bow dim must be at least 16")
        if self.backend == "remote" and not self.endpoint_url:
            raise ValueError("remote backend requires endpoint_url")

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "dim": self.dim,
            "endpoint_url": self.endpoint_url,
            "model_name": self.model_name,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EmbedderSpec":
        return cls(
            backend=payload["backend"],
            dim=int(payload["dim"]),
            endpoint_url=payload.get("endpoint_url"),
            model_name=payload.get("model_name"),
        )


def tokenize(text: str) -> list[str]:
    """Lowercase and split on Unicode whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


def token_bucket(token: str, dim: int) -> int:
    """Stable 64-bit hash of a token, reduced modulo the bucket count."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


def _embed_hashed_bow(text: str, dim: int) -> np.ndarray:
    tokens = tokenize(text)
    if not tokens:
        raise EmptyTextError("text produced no tokens to embed")
    vec = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        vec[token_bucket(token, dim)] += 1.0
    return vec / np.linalg.norm(vec)


def _embed_remote(
    texts: list[str], spec: EmbedderSpec, timeout_ms: int
) -> list[np.ndarray]:
    payload = {"model": spec.model_name, "input": texts}
    try:
        resp = requests.post(spec.endpoint_url, json=payload, timeout=timeout_ms / 1000.0)
    except requests.Timeout as exc:
        raise RequestTimeoutError(
            f"embedding request timed out after {timeout_ms} ms", timeout_ms
        ) from exc
    except requests.RequestException as exc:
        raise RemoteUnavailableError(f"embedding endpoint unreachable: {exc}") from exc
    if resp.status_code != 200:
        raise RemoteUnavailableError(
            f"embedding endpoint returned HTTP {resp.status_code}",
            status=resp.status_code,
        )
    try:
        rows = resp.json()["data"]
        vectors = [np.asarray(row["embedding"], dtype=np.float64) for row in rows]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise EmbeddingFailedError(f"malformed embedding response: {exc}") from exc
    if len(vectors) != len(texts):
        raise EmbeddingFailedError(
            f"expected {len(texts)} embeddings, got {len(vectors)}"
        )
    out = []
    for vec in vectors:
        if vec.ndim != 1 or vec.shape[0] != spec.dim:
            raise EmbeddingFailedError(
                f"embedding has dim {vec.shape}, spec says {spec.dim}"
            )
        norm = np.linalg.norm(vec)
        if norm == 0.0 or not np.isfinite(norm):
            raise EmbeddingFailedError("embedding endpoint returned a degenerate vector")
        out.append(vec / norm)
    return out


def embed_many(
    texts: list[str], spec: EmbedderSpec, timeout_ms: int = _DEFAULT_TIMEOUT_MS
) -> list[np.ndarray]:
    """Embed a batch of texts. Remote backends use a single HTTP request."""
    for text in texts:
        if not text.strip():
            raise EmptyTextError("cannot embed empty text")
    if spec.backend == "hashed_bow":
        return [_embed_hashed_bow(t, spec.dim) for t in texts]
    return _embed_remote(texts, spec, timeout_ms)


def embed(
    text: str, spec: EmbedderSpec, timeout_ms: int = _DEFAULT_TIMEOUT_MS
) -> np.ndarray:
    """Embed one text into a unit-norm float64 vector of length spec.dim."""
    return embed_many([text], spec, timeout_ms=timeout_ms)[0]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two 1-D vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise DimensionMismatchError("cosine expects 1-D vectors")
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError(
            f"vector dims differ: {a.shape[0]} vs {b.shape[0]}"
        )
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for a zero vector")
    value = float(np.dot(a, b) / (norm_a * norm_b))
    return max(-1.0, min(1.0, value))
