"""Model bundle: packaged heads + embedding config for serving.

A bundle is a directory with a manifest and one weight file per head:

    manifest.json  {version, dim, normalized, embedding: {kind, ref},
                    heads: [{target, kind, hidden?, calibration, threshold,
                             file, sha256}]}
    <target>.<kind>.bin  ridge: [dim x f32 LE][f32 bias]
                         nn:    [W1 hidden*dim][b1 hidden][W2 hidden][b2 1]

Serving weights are float32 and all serving arithmetic runs in float32, so
save -> load -> score round-trips are bit-exact. Weight files are integrity
checked against the manifest hashes on load.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .classifier import Calibration, NeuralModel, RidgeModel, _sigmoid
from .taxonomy import ALL_TARGETS

BUNDLE_VERSION = "1"
MANIFEST_NAME = "manifest.json"


class BundleError(RuntimeError):
    pass


@dataclass
class BundleHead:
    """One serving head with float32 weights."""

    target: str
    kind: str  # "ridge" | "nn"
    calibration: Calibration
    threshold: float
    weights: dict[str, np.ndarray]
    hidden: Optional[int] = None

    @property
    def dim(self) -> int:
        if self.kind == "ridge":
            return int(self.weights["w"].shape[0])
        return int(self.weights["W1"].shape[1])

    def score_raw(self, X: np.ndarray) -> np.ndarray:
        """Uncalibrated scores for an n x dim float32 batch."""
        X = np.ascontiguousarray(X, dtype=np.float32)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise BundleError(f"dim mismatch: input {X.shape[1]} vs head {self.dim}")
        if self.kind == "ridge":
            out = X @ self.weights["w"] + self.weights["b"][0]
        else:
            h = np.maximum(X @ self.weights["W1"].T + self.weights["b1"], np.float32(0.0))
            logits = h @ self.weights["W2"] + self.weights["b2"][0]
            out = _sigmoid(logits.astype(np.float32))
        return out[0] if single else out

    def score(self, X: np.ndarray) -> np.ndarray:
        return self.calibration.apply(self.score_raw(X))

    def classify(self, X: np.ndarray):
        """Decision at the stored threshold; ties resolve toward unsafe."""
        return np.asarray(self.score(X)) >= self.threshold

    def to_bytes(self) -> bytes:
        if self.kind == "ridge":
            parts = [self.weights["w"], self.weights["b"]]
        else:
            parts = [self.weights["W1"].ravel(), self.weights["b1"],
                     self.weights["W2"], self.weights["b2"]]
        return b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in parts)


def _head_from_bytes(entry: dict, blob: bytes, dim: int) -> BundleHead:
    flat = np.frombuffer(blob, dtype="<f4")
    kind = entry["kind"]
    if kind == "ridge":
        if flat.size != dim + 1:
            raise BundleError(f"{entry['file']}: expected {dim + 1} floats, got {flat.size}")
        weights = {"w": flat[:dim].copy(), "b": flat[dim:].copy()}
        hidden = None
    elif kind == "nn":
        hidden = int(entry["hidden"])
        expected = hidden * dim + hidden + hidden + 1
        if flat.size != expected:
            raise BundleError(f"{entry['file']}: expected {expected} floats, got {flat.size}")
        pos = 0
        W1 = flat[pos:pos + hidden * dim].reshape(hidden, dim).copy(); pos += hidden * dim
        b1 = flat[pos:pos + hidden].copy(); pos += hidden
        W2 = flat[pos:pos + hidden].copy(); pos += hidden
        b2 = flat[pos:pos + 1].copy()
        weights = {"W1": W1, "b1": b1, "W2": W2, "b2": b2}
    else:
        raise BundleError(f"unknown head kind: {kind!r}")
    calib = entry.get("calibration", {})
    return BundleHead(
        target=entry["target"],
        kind=kind,
        calibration=Calibration(
            kind=calib.get("kind", "raw"),
            slope=float(calib.get("slope", 1.0)),
            intercept=float(calib.get("intercept", 0.0)),
        ),
        threshold=float(entry["threshold"]),
        weights=weights,
        hidden=hidden,
    )


def head_from_model(
    model: RidgeModel | NeuralModel,
    calibration: Optional[Calibration] = None,
    threshold: Optional[float] = None,
) -> BundleHead:
    """Freeze a trained model into a float32 serving head."""
    calibration = calibration or Calibration()
    if threshold is None:
        threshold = calibration.default_threshold
    if isinstance(model, RidgeModel):
        weights = {
            "w": model.weights.astype(np.float32),
            "b": np.asarray([model.bias], dtype=np.float32),
        }
        return BundleHead(model.target, "ridge", calibration, threshold, weights)
    weights = {
        "W1": model.W1.astype(np.float32),
        "b1": model.b1.astype(np.float32),
        "W2": model.W2.astype(np.float32),
        "b2": np.asarray([model.b2], dtype=np.float32),
    }
    return BundleHead(model.target, "nn", calibration, threshold, weights,
                      hidden=int(model.W1.shape[0]))


@dataclass
class ModelBundle:
    """Embedding config plus the binary head and seven category heads."""

    dim: int
    normalized: bool
    embedding_kind: str  # "store" | "remote"
    embedding_ref: str
    heads: dict[str, BundleHead]
    version: str = BUNDLE_VERSION

    def __post_init__(self) -> None:
        for head in self.heads.values():
            if head.dim != self.dim:
                raise BundleError(
                    f"head {head.target} dim {head.dim} != bundle dim {self.dim}"
                )
        unknown = set(self.heads) - set(ALL_TARGETS)
        if unknown:
            raise BundleError(f"unknown head targets: {sorted(unknown)}")

    @property
    def targets(self) -> list[str]:
        return [t for t in ALL_TARGETS if t in self.heads]

    def head(self, target: str) -> BundleHead:
        if target not in self.heads:
            raise BundleError(f"bundle has no head for {target!r}")
        return self.heads[target]

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for target in self.targets:
            head = self.heads[target]
            blob = head.to_bytes()
            filename = f"{target}.{head.kind}.bin"
            (directory / filename).write_bytes(blob)
            entry = {
                "target": target,
                "kind": head.kind,
                "calibration": {
                    "kind": head.calibration.kind,
                    "slope": head.calibration.slope,
                    "intercept": head.calibration.intercept,
                },
                "threshold": head.threshold,
                "file": filename,
                "sha256": hashlib.sha256(blob).hexdigest(),
            }
            if head.kind == "nn":
                entry["hidden"] = head.hidden
            entries.append(entry)
        manifest = {
            "version": self.version,
            "dim": self.dim,
            "normalized": self.normalized,
            "embedding": {"kind": self.embedding_kind, "ref": self.embedding_ref},
            "heads": entries,
        }
        (directory / MANIFEST_NAME).write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
        )
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "ModelBundle":
        directory = Path(directory)
        manifest_path = directory / MANIFEST_NAME
        if not manifest_path.exists():
            raise BundleError(f"no {MANIFEST_NAME} in {directory}")
        manifest = json.loads(manifest_path.read_text("utf-8"))
        dim = int(manifest["dim"])
        heads = {}
        for entry in manifest["heads"]:
            blob = (directory / entry["file"]).read_bytes()
            digest = hashlib.sha256(blob).hexdigest()
            if digest != entry["sha256"]:
                raise BundleError(f"hash mismatch for {entry['file']}")
            head = _head_from_bytes(entry, blob, dim)
            heads[head.target] = head
        return cls(
            dim=dim,
            normalized=bool(manifest["normalized"]),
            embedding_kind=manifest["embedding"]["kind"],
            embedding_ref=manifest["embedding"]["ref"],
            heads=heads,
            version=str(manifest["version"]),
        )
