"""Embedding access: on-disk vector store, remote endpoint, normalization.

Embeddings are consumed, never computed here; they come from a precomputed
binary store or an HTTP endpoint. The store format is deliberately plain so
round-trips are bit-exact:

    magic  b"LGEMB1\\n"
    header one JSON line {"dim": d, "count": n, "normalized": bool}
    body   n records of [u32 LE id_len][id utf-8][d x f32 LE]

Vectors are float32 throughout. The store is read-only after open and safe
for concurrent readers (reads use pread, no shared file position).
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import httpx
import numpy as np

MAGIC = b"LGEMB1\n"


class StoreCorruptionError(RuntimeError):
    """A store file failed validation; offset points at the bad byte."""

    def __init__(self, offset: int, detail: str):
        self.offset = offset
        super().__init__(f"store corrupted at byte {offset}: {detail}")


class EmbeddingProtocolError(RuntimeError):
    """The remote endpoint broke the embedding protocol."""


def normalize(v: np.ndarray) -> np.ndarray:
    """Scale v to unit L2 norm (float32); zero vectors are rejected."""
    v = np.asarray(v, dtype=np.float32)
    norm = float(np.linalg.norm(v.astype(np.float64)))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return (v.astype(np.float64) / norm).astype(np.float32)


def validate_vector(v: np.ndarray, normalized: bool = False) -> None:
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    if normalized and abs(float(np.linalg.norm(v.astype(np.float64))) - 1.0) > 1e-5:
        raise ValueError("vector flagged normalized but norm deviates from 1")


def text_key(text: str) -> str:
    """Stable store key for a text: hex sha256 of its UTF-8 bytes."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def save_store(
    path: str | Path,
    ids: Sequence[str],
    matrix: np.ndarray,
    normalized: bool = False,
) -> None:
    """Write vectors to a store file; ids and matrix rows pair up in order."""
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or len(ids) != matrix.shape[0]:
        raise ValueError("need one id per matrix row")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids in store")
    header = {"dim": int(matrix.shape[1]), "count": len(ids), "normalized": bool(normalized)}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        for rid, row in zip(ids, matrix):
            validate_vector(row, normalized)
            id_bytes = rid.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(row.tobytes())


class EmbeddingStore:
    """Read-only random access to a store file by record id."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        self._fd = self._fh.fileno()
        self.dim, self.count, self.normalized, self.index = self._scan()

    def _scan(self) -> tuple[int, int, bool, dict[str, int]]:
        fh = self._fh
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise StoreCorruptionError(0, "bad magic")
        header_line = fh.readline()
        if not header_line.endswith(b"\n"):
            raise StoreCorruptionError(len(MAGIC), "unterminated header")
        try:
            header = json.loads(header_line)
            dim, count = int(header["dim"]), int(header["count"])
            normalized = bool(header["normalized"])
        except (ValueError, KeyError, TypeError):
            raise StoreCorruptionError(len(MAGIC), "unreadable header") from None
        if dim <= 0 or count < 0:
            raise StoreCorruptionError(len(MAGIC), f"bad dimensions dim={dim} count={count}")

        vec_bytes = 4 * dim
        index: dict[str, int] = {}
        offset = len(MAGIC) + len(header_line)
        for _ in range(count):
            prefix = os.pread(self._fd, 4, offset)
            if len(prefix) < 4:
                raise StoreCorruptionError(offset, "truncated id length")
            (id_len,) = struct.unpack("<I", prefix)
            id_bytes = os.pread(self._fd, id_len, offset + 4)
            if len(id_bytes) < id_len:
                raise StoreCorruptionError(offset + 4, "truncated id")
            vec_offset = offset + 4 + id_len
            tail = os.pread(self._fd, vec_bytes, vec_offset)
            if len(tail) < vec_bytes:
                raise StoreCorruptionError(vec_offset, "truncated vector")
            rid = id_bytes.decode("utf-8")
            if rid in index:
                raise StoreCorruptionError(offset, f"duplicate id {rid!r}")
            index[rid] = vec_offset
            offset = vec_offset + vec_bytes
        if os.pread(self._fd, 1, offset):
            raise StoreCorruptionError(offset, "trailing bytes after last record")
        return dim, count, normalized, index

    def __contains__(self, rid: str) -> bool:
        return rid in self.index

    def __len__(self) -> int:
        return self.count

    def get(self, rid: str) -> Optional[np.ndarray]:
        offset = self.index.get(rid)
        if offset is None:
            return None
        raw = os.pread(self._fd, 4 * self.dim, offset)
        return np.frombuffer(raw, dtype="<f4").copy()

    def lookup(self, ids: Sequence[str]) -> tuple[list[np.ndarray], list[str]]:
        """Vectors for the requested ids in request order, plus a miss list."""
        vectors, misses = [], []
        for rid in ids:
            v = self.get(rid)
            if v is None:
                misses.append(rid)
            else:
                vectors.append(v)
        return vectors, misses

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        """Stacked vectors for ids that must all be present."""
        vectors, misses = self.lookup(ids)
        if misses:
            raise KeyError(f"store is missing {len(misses)} ids, first: {misses[:3]}")
        return np.vstack(vectors) if vectors else np.empty((0, self.dim), dtype=np.float32)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "EmbeddingStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass(frozen=True)
class EmbeddingEndpoint:
    """Remote embedding service configuration."""

    url: str
    auth_env_var: Optional[str] = None
    timeout_ms: int = 30000
    max_batch: int = 256
    retries: int = 2
    normalized: bool = False

    def headers(self) -> dict[str, str]:
        if not self.auth_env_var:
            return {}
        token = os.environ.get(self.auth_env_var)
        if not token:
            raise RuntimeError(f"auth env var {self.auth_env_var} is not set")
        return {"Authorization": f"Bearer {token}"}


def fetch_remote(texts: Sequence[str], endpoint: EmbeddingEndpoint) -> list[np.ndarray]:
    """POST texts to the endpoint and return one float32 vector per text.

    Transient HTTP failures are retried up to the configured budget; a
    response with the wrong cardinality or ragged dimensions is a protocol
    error, not retried.
    """
    if not texts:
        return []
    if len(texts) > endpoint.max_batch:
        raise ValueError(f"batch of {len(texts)} exceeds max_batch {endpoint.max_batch}")

    last_error: Exception | None = None
    for attempt in range(endpoint.retries + 1):
        try:
            resp = httpx.post(
                endpoint.url,
                json={"texts": list(texts)},
                headers=endpoint.headers(),
                timeout=endpoint.timeout_ms / 1000.0,
            )
            resp.raise_for_status()
            payload = resp.json()
            break
        except (httpx.HTTPError, json.JSONDecodeError) as exc:
            last_error = exc
            if attempt < endpoint.retries:
                time.sleep(0.05 * (attempt + 1))
    else:
        raise EmbeddingProtocolError(f"endpoint failed after {endpoint.retries + 1} attempts: {last_error}")

    rows = payload.get("embeddings")
    if not isinstance(rows, list) or len(rows) != len(texts):
        got = len(rows) if isinstance(rows, list) else "none"
        raise EmbeddingProtocolError(f"expected {len(texts)} vectors, got {got}")
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        raise EmbeddingProtocolError(f"inconsistent dims in batch: {sorted(dims)}")
    vectors = [np.asarray(r, dtype=np.float32) for r in rows]
    for v in vectors:
        validate_vector(v)
    return vectors


class StoreEmbedder:
    """Serves embeddings for texts from a store keyed by sha256(text)."""

    def __init__(self, store: EmbeddingStore):
        self.store = store
        self.dim = store.dim
        self.normalized = store.normalized

    def try_embed(self, texts: Sequence[str]) -> list[Optional[np.ndarray]]:
        return [self.store.get(text_key(t)) for t in texts]

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = self.try_embed(texts)
        missing = [i for i, v in enumerate(out) if v is None]
        if missing:
            raise KeyError(f"no stored embedding for {len(missing)} texts, first index {missing[0]}")
        return out  # type: ignore[return-value]


class RemoteEmbedder:
    """Serves embeddings for texts from a remote endpoint."""

    def __init__(self, endpoint: EmbeddingEndpoint, dim: Optional[int] = None):
        self.endpoint = endpoint
        self.dim = dim
        self.normalized = endpoint.normalized

    def try_embed(self, texts: Sequence[str]) -> list[Optional[np.ndarray]]:
        try:
            return list(self.embed(texts))
        except (EmbeddingProtocolError, RuntimeError, ValueError):
            return [None] * len(texts)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        vectors = fetch_remote(texts, self.endpoint)
        if vectors:
            if self.dim is None:
                self.dim = int(vectors[0].shape[0])
            elif vectors[0].shape[0] != self.dim:
                raise EmbeddingProtocolError(
                    f"endpoint returned dim {vectors[0].shape[0]}, expected {self.dim}"
                )
            if self.normalized:
                vectors = [normalize(v) for v in vectors]
        return vectors
