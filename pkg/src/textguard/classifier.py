"""Per-label classification heads over embeddings: ridge and a small NN.

Training rows are consensus-filtered per target (only rows whose tri-state
label for that target is determined are kept). The ridge head is the primary
model: closed-form solution on mean-centered data with an unregularized
bias, solved through a Cholesky factorization of the regularized Gram
matrix. The NN head is a dim -> hidden (ReLU) -> dropout -> 1 (sigmoid)
network trained with Adam on binary cross-entropy, implemented in plain
numpy with float64 internals and a seeded PCG64 generator so runs are
deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .labelling import LabelledDataset, LabelledRow
from .taxonomy import BINARY, Category, TriState

RIDGE_ALPHA_DEFAULT = 1.0


def target_name(target: Category | str) -> str:
    if isinstance(target, Category):
        return target.value
    if target == BINARY or target in Category._value2member_map_:
        return str(target)
    raise ValueError(f"unknown target: {target!r}")


@dataclass
class ConsensusRows:
    """Rows kept for one target after consensus filtering, labels in ±1."""

    rows: list[LabelledRow]
    y: np.ndarray
    kept_fraction: float


def filter_consensus_rows(dataset: LabelledDataset, target: Category | str) -> ConsensusRows:
    """Keep rows whose state for target is determined; map yes/no to +1/-1."""
    name = target_name(target)
    kept, labels = [], []
    for row in dataset.rows:
        state = row.labels.state(name)
        if state.determined:
            kept.append(row)
            labels.append(1.0 if state is TriState.YES else -1.0)
    if not kept:
        raise ValueError(f"no rows with a determined {name} label")
    return ConsensusRows(
        rows=kept,
        y=np.asarray(labels, dtype=np.float64),
        kept_fraction=len(kept) / len(dataset.rows),
    )


@dataclass
class RidgeModel:
    """Linear head: score(x) = x . weights + bias."""

    weights: np.ndarray
    bias: float
    alpha: float
    target: str = BINARY
    train_meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])


def train_ridge(
    X: np.ndarray,
    y: np.ndarray,
    alpha: float = RIDGE_ALPHA_DEFAULT,
    target: Category | str = BINARY,
) -> RidgeModel:
    """Closed-form ridge on mean-centered data with unregularized bias.

    w = (Xc'Xc + alpha I)^-1 Xc'yc with Xc, yc centered; b = ybar - xbar.w.
    The regularized Gram matrix is symmetric positive definite for any
    alpha > 0, so a Cholesky factorization solves it.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape} vs y {y.shape}")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in training data")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if np.unique(y).size < 2:
        raise ValueError("single-class training labels")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc + alpha * np.eye(X.shape[1])
    w = cho_solve(cho_factor(gram, lower=True), Xc.T @ yc)
    bias = y_mean - float(x_mean @ w)
    return RidgeModel(
        weights=w,
        bias=bias,
        alpha=float(alpha),
        target=target_name(target),
        train_meta={"n_rows": int(X.shape[0]), "feature_means": x_mean},
    )


def ridge_score(model: RidgeModel, x: np.ndarray) -> float | np.ndarray:
    """Raw decision value x.w + b; higher means more unsafe.

    Accepts a single vector or an n x dim batch; batch scoring equals
    per-row scoring elementwise. Prediction at threshold t is score >= t
    (ties resolve toward unsafe); raw-score default t = 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise ValueError(f"dim mismatch: vector {x.shape[-1]} vs model {model.dim}")
    scores = x @ model.weights + model.bias
    return float(scores) if scores.ndim == 0 else scores


def ridge_residual_gradient(model: RidgeModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """First-order condition residual 2Xc'(Xc w - yc) + 2 alpha w.

    Zero at the exact optimum; used as a training-quality diagnostic.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    return 2.0 * Xc.T @ (Xc @ model.weights - yc) + 2.0 * model.alpha * model.weights


@dataclass(frozen=True)
class NnHyper:
    epochs: int = 30
    batch: int = 8
    lr: float = 0.001
    hidden: int = 64
    dropout: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.dropout < 1):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if min(self.epochs, self.batch, self.hidden) < 1 or self.lr <= 0:
            raise ValueError("invalid hyperparameters")


@dataclass
class NeuralModel:
    """dim -> hidden (ReLU) -> dropout -> 1 (sigmoid)."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float
    dropout_p: float
    hyper: NnHyper
    target: str = BINARY

    @property
    def dim(self) -> int:
        return int(self.W1.shape[1])

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2,
                "b2": np.asarray([self.b2], dtype=np.float64)}


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bce_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    # mean of softplus(z) - y*z, computed without overflow
    softplus = np.maximum(logits, 0.0) + np.log1p(np.exp(-np.abs(logits)))
    return float(np.mean(softplus - y * logits))


def _init_params(dim: int, hyper: NnHyper, rng: np.random.Generator) -> tuple:
    bound1 = 1.0 / math.sqrt(dim)
    bound2 = 1.0 / math.sqrt(hyper.hidden)
    W1 = rng.uniform(-bound1, bound1, size=(hyper.hidden, dim))
    b1 = rng.uniform(-bound1, bound1, size=hyper.hidden)
    W2 = rng.uniform(-bound2, bound2, size=hyper.hidden)
    b2 = float(rng.uniform(-bound2, bound2))
    return W1, b1, W2, b2


def nn_loss_and_grads(
    params: dict[str, np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    dropout_mask: Optional[np.ndarray] = None,
    keep_scale: float = 1.0,
) -> tuple[float, dict[str, np.ndarray]]:
    """BCE loss and analytic gradients for one batch.

    With dropout_mask None the network runs deterministically (evaluation
    mode); training passes a precomputed inverted-dropout mask. Exposed so
    gradients can be checked against finite differences.
    """
    W1, b1 = params["W1"], params["b1"]
    W2, b2 = params["W2"], float(params["b2"][0])
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = X.shape[0]

    pre = X @ W1.T + b1
    h = np.maximum(pre, 0.0)
    if dropout_mask is not None:
        h_dropped = h * dropout_mask * keep_scale
    else:
        h_dropped = h
    logits = h_dropped @ W2 + b2
    loss = _bce_from_logits(logits, y)

    dlogits = (_sigmoid(logits) - y) / n
    dW2 = h_dropped.T @ dlogits
    db2 = float(dlogits.sum())
    dh_dropped = np.outer(dlogits, W2)
    if dropout_mask is not None:
        dh = dh_dropped * dropout_mask * keep_scale
    else:
        dh = dh_dropped
    dpre = dh * (pre > 0.0)
    dW1 = dpre.T @ X
    db1 = dpre.sum(axis=0)
    grads = {"W1": dW1, "b1": db1, "W2": dW2, "b2": np.asarray([db2])}
    return loss, grads


def train_nn(
    X: np.ndarray,
    y: np.ndarray,
    hyper: NnHyper = NnHyper(),
    target: Category | str = BINARY,
) -> NeuralModel:
    """Train the NN head with Adam; deterministic given hyper.seed.

    y takes values in {0, 1}. Weights and biases start uniform in
    +-1/sqrt(fan_in); dropout (inverted scaling) is active only here.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape} vs y {y.shape}")
    if not set(np.unique(y)) <= {0.0, 1.0}:
        raise ValueError("labels must be 0/1")
    if np.unique(y).size < 2:
        raise ValueError("single-class training labels")

    rng = np.random.Generator(np.random.PCG64(hyper.seed))
    W1, b1, W2, b2 = _init_params(X.shape[1], hyper, rng)
    params = {"W1": W1, "b1": b1, "W2": W2, "b2": np.asarray([b2])}

    # Adam state
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(vv) for k, vv in params.items()}
    step = 0
    keep = 1.0 - hyper.dropout
    n = X.shape[0]

    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch):
            batch_idx = order[start:start + hyper.batch]
            Xb, yb = X[batch_idx], y[batch_idx]
            if hyper.dropout > 0:
                mask = (rng.random((Xb.shape[0], hyper.hidden)) >= hyper.dropout)
                loss, grads = nn_loss_and_grads(params, Xb, yb, mask.astype(np.float64), 1.0 / keep)
            else:
                loss, grads = nn_loss_and_grads(params, Xb, yb)
            if not math.isfinite(loss):
                raise RuntimeError(f"NaN loss at epoch {epoch}, batch {start // hyper.batch}")
            step += 1
            for key in params:
                g = grads[key]
                m[key] = beta1 * m[key] + (1 - beta1) * g
                v[key] = beta2 * v[key] + (1 - beta2) * g * g
                m_hat = m[key] / (1 - beta1 ** step)
                v_hat = v[key] / (1 - beta2 ** step)
                params[key] = params[key] - hyper.lr * m_hat / (np.sqrt(v_hat) + eps)

    return NeuralModel(
        W1=params["W1"], b1=params["b1"], W2=params["W2"], b2=float(params["b2"][0]),
        dropout_p=hyper.dropout, hyper=hyper, target=target_name(target),
    )


def nn_score(model: NeuralModel, x: np.ndarray) -> float | np.ndarray:
    """Evaluation-mode probability sigmoid(W2.relu(W1 x + b1) + b2)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise ValueError(f"dim mismatch: vector {x.shape[-1]} vs model {model.dim}")
    h = np.maximum(x @ model.W1.T + model.b1, 0.0)
    logits = h @ model.W2 + model.b2
    probs = _sigmoid(np.atleast_1d(np.asarray(logits, dtype=np.float64)))
    return float(probs[0]) if np.ndim(logits) == 0 else probs


@dataclass(frozen=True)
class Calibration:
    """Score calibration stored with each head.

    kind "raw" passes scores through (decision threshold defaults to 0);
    kind "sigmoid" applies p = sigmoid(slope * score + intercept) fitted on
    validation data (threshold defaults to 0.5). Both maps are strictly
    increasing, so ranking metrics are unaffected.
    """

    kind: str = "raw"
    slope: float = 1.0
    intercept: float = 0.0

    def apply(self, scores: np.ndarray | float):
        if self.kind == "raw":
            return scores
        z = self.slope * np.asarray(scores, dtype=np.float64) + self.intercept
        out = _sigmoid(np.atleast_1d(z))
        return float(out[0]) if np.ndim(scores) == 0 else out

    @property
    def default_threshold(self) -> float:
        return 0.0 if self.kind == "raw" else 0.5


def fit_sigmoid_calibration(scores: np.ndarray, y: np.ndarray, max_iter: int = 100) -> Calibration:
    """Fit p = sigmoid(a*s + c) by Newton iteration on the logistic loss.

    y takes values in {0, 1}. The slope is constrained positive so the map
    stays rank-preserving even on degenerate validation sets.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if s.shape != y.shape or s.size == 0:
        raise ValueError("scores and labels must align and be non-empty")
    a, c = 1.0, 0.0
    for _ in range(max_iter):
        z = np.clip(a * s + c, -35.0, 35.0)
        p = _sigmoid(z)
        r = p - y
        grad = np.array([np.dot(r, s), r.sum()])
        w = p * (1.0 - p)
        h_aa = np.dot(w, s * s)
        h_ac = np.dot(w, s)
        h_cc = w.sum()
        hess = np.array([[h_aa, h_ac], [h_ac, h_cc]]) + 1e-10 * np.eye(2)
        delta = np.linalg.solve(hess, grad)
        a, c = a - delta[0], c - delta[1]
        if np.abs(delta).max() < 1e-10:
            break
    if a <= 0:
        a = 1e-6
    return Calibration(kind="sigmoid", slope=float(a), intercept=float(c))
