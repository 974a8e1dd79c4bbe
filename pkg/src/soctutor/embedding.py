"""Embedding providers for the course-material index.

The fallback provider is always available and fully deterministic: lowercase,
split on non-alphanumerics, FNV-1a-hash each token into one of 256 buckets,
count, L2-normalize. Tests and offline deployments run on it; a live HTTP
provider can be slotted in behind the same contract.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import EmptyText, ProviderUnavailable

_TOKEN_RE = re.compile(r"[a-z0-9]+")

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _U64
    return h


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class FallbackEmbedder:
    """Hashed bag-of-tokens embedder, 256 dimensions, unit norm."""

    name = "fallback"
    dim = 256

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyText("no tokens to embed")
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            vec[fnv1a_64(token.encode("utf-8")) % self.dim] += 1.0
        return vec / np.linalg.norm(vec)

    def bucket(self, token: str) -> int:
        return fnv1a_64(token.lower().encode("utf-8")) % self.dim


class HttpEmbedder:
    """Live provider speaking a minimal JSON protocol: {"input": text} in,
    {"embedding": [floats]} out. Network failures surface as
    ProviderUnavailable so callers can retry or fall back per config."""

    name = "http"

    def __init__(self, url: str, dim: int, api_key: str = "", client=None):
        import httpx

        self.url = url
        self.dim = dim
        self._client = client or httpx.Client(timeout=30.0)
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyText("no text to embed")
        import httpx

        try:
            response = self._client.post(
                self.url, json={"input": text}, headers=self._headers
            )
            response.raise_for_status()
            raw = response.json()["embedding"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise ProviderUnavailable(f"embedding provider failed: {exc}") from exc
        vec = np.asarray(raw, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ProviderUnavailable(
                f"provider returned dimension {vec.shape}, expected ({self.dim},)"
            )
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ProviderUnavailable("provider returned a zero vector")
        return vec / norm
