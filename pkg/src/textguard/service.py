"""Moderation as a library call and as an HTTP service.

moderate() is the single scoring path: embed, normalize when the bundle
asks for it, score all eight heads, apply thresholds. The FastAPI app is a
thin shell over it, so HTTP results equal in-process results field for
field. The bundle and embedding source are validated at startup (fail
fast); after that the served model is immutable.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .bundle import BundleError, ModelBundle
from .embeddings import (
    EmbeddingEndpoint,
    EmbeddingStore,
    RemoteEmbedder,
    StoreEmbedder,
    normalize,
)
from .taxonomy import BINARY, CATEGORIES

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

DEFAULT_MAX_BATCH = 64


@dataclass
class ModerationResult:
    """Scores and flags for one input text."""

    index: int
    binary: Optional[dict] = None           # {"score": float, "flagged": bool}
    categories: Optional[dict] = None       # {category: {"score", "flagged"}}
    model_version: str = ""
    embedding_source: str = ""
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "binary": self.binary,
            "categories": self.categories,
            "model_version": self.model_version,
            "embedding_source": self.embedding_source,
            "error": self.error,
        }


def moderate(
    texts: Sequence[str],
    bundle: ModelBundle,
    embedder,
    threshold_overrides: Optional[dict[str, float]] = None,
) -> list[ModerationResult]:
    """Score texts with every head in the bundle; order-preserving.

    A text whose embedding cannot be produced gets an error entry and the
    rest of the batch proceeds. A dimension mismatch is a configuration
    error and aborts the whole call.
    """
    if not texts:
        return []
    overrides = threshold_overrides or {}
    vectors = embedder.try_embed(list(texts))

    rows, row_of = [], {}
    for i, v in enumerate(vectors):
        if v is None:
            continue
        if v.shape[0] != bundle.dim:
            raise BundleError(f"embedding dim {v.shape[0]} != bundle dim {bundle.dim}")
        if bundle.normalized and not getattr(embedder, "normalized", False):
            v = normalize(v)
        row_of[i] = len(rows)
        rows.append(np.asarray(v, dtype=np.float32))

    scores: dict[str, np.ndarray] = {}
    flags: dict[str, np.ndarray] = {}
    if rows:
        X = np.vstack(rows)
        for target in bundle.targets:
            head = bundle.head(target)
            s = np.atleast_1d(np.asarray(head.score(X)))
            threshold = overrides.get(target, head.threshold)
            scores[target] = s
            flags[target] = s >= threshold

    results = []
    for i in range(len(texts)):
        if i not in row_of:
            results.append(ModerationResult(
                index=i, error="embedding unavailable",
                model_version=bundle.version, embedding_source=bundle.embedding_kind,
            ))
            continue
        r = row_of[i]
        results.append(ModerationResult(
            index=i,
            binary={"score": float(scores[BINARY][r]), "flagged": bool(flags[BINARY][r])},
            categories={
                c.value: {
                    "score": float(scores[c.value][r]),
                    "flagged": bool(flags[c.value][r]),
                }
                for c in CATEGORIES if c.value in scores
            },
            model_version=bundle.version,
            embedding_source=bundle.embedding_kind,
        ))
    return results


@dataclass
class ServiceConfig:
    """Service wiring: bundle location, embedding source, limits."""

    bundle_path: str
    store_path: Optional[str] = None
    embedding_url: Optional[str] = None
    embedding_auth_env_var: Optional[str] = None
    host: str = "127.0.0.1"
    port: int = 8080
    max_batch: int = DEFAULT_MAX_BATCH
    threshold_overrides: dict[str, float] = field(default_factory=dict)
    request_timeout_ms: int = 30000

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        for target, t in self.threshold_overrides.items():
            if not (0.0 <= t <= 1.0):
                raise ValueError(f"threshold override for {target} outside [0,1]: {t}")
        if bool(self.store_path) == bool(self.embedding_url):
            raise ValueError("configure exactly one of store_path or embedding_url")

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        path = Path(path)
        if path.suffix == ".toml":
            raw = tomllib.loads(path.read_text("utf-8"))
        else:
            raw = json.loads(path.read_text("utf-8"))
        return cls(**raw)


def _build_embedder(config: ServiceConfig, bundle: ModelBundle):
    if config.store_path:
        return StoreEmbedder(EmbeddingStore(config.store_path))
    endpoint = EmbeddingEndpoint(
        url=config.embedding_url,
        auth_env_var=config.embedding_auth_env_var,
        timeout_ms=config.request_timeout_ms,
    )
    return RemoteEmbedder(endpoint, dim=bundle.dim)


class ModerateRequest(BaseModel):
    texts: list[str]


def create_app(
    config: ServiceConfig,
    bundle: Optional[ModelBundle] = None,
    embedder=None,
) -> FastAPI:
    """Build the service app; bundle and embedder load (and fail) here."""
    if bundle is None:
        bundle = ModelBundle.load(config.bundle_path)
    if embedder is None:
        embedder = _build_embedder(config, bundle)
    if getattr(embedder, "dim", None) is not None and embedder.dim != bundle.dim:
        raise BundleError(f"embedder dim {embedder.dim} != bundle dim {bundle.dim}")

    app = FastAPI(title="textguard", version=bundle.version)
    app.state.bundle = bundle
    app.state.embedder = embedder
    app.state.config = config

    @app.post("/v1/moderate")
    def moderate_endpoint(request: ModerateRequest) -> dict:
        if len(request.texts) > config.max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.texts)} exceeds limit of {config.max_batch}",
            )
        results = moderate(
            request.texts, bundle, embedder,
            threshold_overrides=config.threshold_overrides,
        )
        return {"results": [r.to_dict() for r in results]}

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "model_version": bundle.version}

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted; startup errors exit nonzero."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port)
