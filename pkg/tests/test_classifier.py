import numpy as np
import pytest

from textguard.classifier import (
    Calibration,
    NnHyper,
    NeuralModel,
    fit_sigmoid_calibration,
    nn_loss_and_grads,
    nn_score,
    ridge_residual_gradient,
    ridge_score,
    train_nn,
    train_ridge,
)


def toy_blobs(n=60, dim=5, seed=0, margin=2.0):
    rng = np.random.Generator(np.random.PCG64(seed))
    half = n // 2
    X = rng.normal(size=(n, dim))
    X[:half, 0] += margin
    X[half:, 0] -= margin
    y = np.concatenate([np.ones(half), -np.ones(n - half)])
    return X, y


def gd_ridge(X, y, alpha, steps=200_000, lr=None):
    """Plain gradient descent on the centered ridge objective (oracle)."""
    X = np.asarray(X, float)
    y = np.asarray(y, float).ravel()
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    w = np.zeros(X.shape[1])
    if lr is None:
        lipschitz = 2 * (np.linalg.norm(Xc, 2) ** 2 + alpha)
        lr = 1.0 / lipschitz
    for _ in range(steps):
        grad = 2 * Xc.T @ (Xc @ w - yc) + 2 * alpha * w
        w -= lr * grad
    bias = y.mean() - X.mean(axis=0) @ w
    return w, bias


class TestRidge:
    def test_one_dimensional_closed_form(self):
        """X=[[2],[-2]], y=(1,-1), alpha=1: w = 4/9 exactly, b = 0."""
        model = train_ridge(np.array([[2.0], [-2.0]]), np.array([1.0, -1.0]),
                            alpha=1.0)
        assert model.weights[0] == pytest.approx(4 / 9, abs=1e-12)
        assert model.bias == pytest.approx(0.0, abs=1e-12)

    def test_matches_gradient_descent_oracle(self):
        X, y = toy_blobs(n=40, dim=3, seed=1)
        model = train_ridge(X, y, alpha=1.0)
        w_gd, b_gd = gd_ridge(X, y, alpha=1.0)
        assert np.allclose(model.weights, w_gd, rtol=1e-4, atol=1e-6)
        assert model.bias == pytest.approx(b_gd, rel=1e-4, abs=1e-6)

    def test_first_order_residual_vanishes(self):
        X, y = toy_blobs(n=80, dim=6, seed=2)
        model = train_ridge(X, y, alpha=1.0)
        residual = ridge_residual_gradient(model, X, y)
        assert np.max(np.abs(residual)) <= 1e-6

    def test_shrinkage_monotone_in_alpha(self):
        X, y = toy_blobs(n=50, dim=4, seed=3)
        norms = [
            float(np.linalg.norm(train_ridge(X, y, alpha=a).weights))
            for a in (0.1, 1.0, 10.0, 100.0)
        ]
        assert norms == sorted(norms, reverse=True)

    def test_mean_centering_invariance(self):
        """Shifting all features moves only the bias, not the weights."""
        X, y = toy_blobs(n=50, dim=4, seed=4)
        shifted = train_ridge(X + 100.0, y, alpha=1.0)
        base = train_ridge(X, y, alpha=1.0)
        assert np.allclose(shifted.weights, base.weights, atol=1e-8)
        x = X[7]
        assert ridge_score(shifted, x + 100.0) == pytest.approx(
            ridge_score(base, x), abs=1e-6)

    def test_batch_equals_per_row_scoring(self):
        X, y = toy_blobs(n=30, dim=4, seed=5)
        model = train_ridge(X, y)
        batch = ridge_score(model, X)
        singles = np.array([ridge_score(model, row) for row in X])
        assert np.allclose(batch, singles, atol=0)

    def test_input_validation(self):
        X, y = toy_blobs(n=10, dim=2)
        with pytest.raises(ValueError, match="single-class"):
            train_ridge(X, np.ones(10))
        with pytest.raises(ValueError, match="alpha"):
            train_ridge(X, y, alpha=0.0)
        with pytest.raises(ValueError, match="shape"):
            train_ridge(X, y[:-1])
        bad = X.copy()
        bad[0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            train_ridge(bad, y)
        with pytest.raises(ValueError, match="dim mismatch"):
            ridge_score(train_ridge(X, y), np.zeros(3))


class TestNnGradients:
    def test_gradient_check_against_central_differences(self, nn_toy_model):
        rng = np.random.Generator(np.random.PCG64(11))
        X = rng.normal(size=(6, 3))
        y = rng.integers(0, 2, size=6).astype(float)
        params = nn_toy_model.params()
        _, grads = nn_loss_and_grads(params, X, y)
        eps = 1e-6
        for name in ("W1", "b1", "W2", "b2"):
            flat = params[name].ravel()
            for idx in range(flat.size):
                original = flat[idx]
                flat[idx] = original + eps
                up, _ = nn_loss_and_grads(params, X, y)
                flat[idx] = original - eps
                down, _ = nn_loss_and_grads(params, X, y)
                flat[idx] = original
                numeric = (up - down) / (2 * eps)
                assert grads[name].ravel()[idx] == pytest.approx(
                    numeric, abs=1e-4), name

    def test_gradient_check_with_dropout_mask(self, nn_toy_model):
        rng = np.random.Generator(np.random.PCG64(13))
        X = rng.normal(size=(5, 3))
        y = rng.integers(0, 2, size=5).astype(float)
        mask = rng.integers(0, 2, size=(5, 4)).astype(float)
        params = nn_toy_model.params()
        _, grads = nn_loss_and_grads(params, X, y, dropout_mask=mask,
                                     keep_scale=1.25)
        eps = 1e-6
        for name in ("W1", "W2"):
            flat = params[name].ravel()
            for idx in range(flat.size):
                original = flat[idx]
                flat[idx] = original + eps
                up, _ = nn_loss_and_grads(params, X, y, dropout_mask=mask,
                                          keep_scale=1.25)
                flat[idx] = original - eps
                down, _ = nn_loss_and_grads(params, X, y, dropout_mask=mask,
                                            keep_scale=1.25)
                flat[idx] = original
                assert grads[name].ravel()[idx] == pytest.approx(
                    (up - down) / (2 * eps), abs=1e-4)


class TestNnTraining:
    def test_zero_params_score_half(self):
        hyper = NnHyper(hidden=4, dropout=0.0)
        model = NeuralModel(W1=np.zeros((4, 3)), b1=np.zeros(4),
                            W2=np.zeros(4), b2=0.0, dropout_p=0.0, hyper=hyper)
        assert nn_score(model, np.ones(3)) == pytest.approx(0.5)

    def test_training_is_deterministic(self):
        X, y = toy_blobs(n=48, dim=4, seed=6)
        y01 = (y > 0).astype(float)
        hyper = NnHyper(epochs=5, hidden=8, seed=9)
        a = train_nn(X, y01, hyper)
        b = train_nn(X, y01, hyper)
        assert np.array_equal(a.W1, b.W1) and np.array_equal(a.W2, b.W2)
        assert a.b2 == b.b2
        c = train_nn(X, y01, NnHyper(epochs=5, hidden=8, seed=10))
        assert not np.array_equal(a.W1, c.W1)

    def test_learns_separable_toy_problem(self):
        X, y = toy_blobs(n=64, dim=4, seed=7, margin=3.0)
        y01 = (y > 0).astype(float)
        model = train_nn(X, y01, NnHyper(epochs=30, hidden=16, seed=0))
        scores = nn_score(model, X)
        assert np.mean((scores >= 0.5) == (y01 == 1.0)) == 1.0

    def test_batch_equals_per_row_scoring(self):
        X, y = toy_blobs(n=16, dim=4, seed=8)
        model = train_nn(X, (y > 0).astype(float), NnHyper(epochs=2, hidden=4))
        batch = nn_score(model, X)
        singles = np.array([nn_score(model, row) for row in X])
        assert np.allclose(batch, singles, atol=0)

    def test_hyper_validation(self):
        with pytest.raises(ValueError):
            NnHyper(dropout=1.0)
        with pytest.raises(ValueError):
            NnHyper(epochs=0)
        with pytest.raises(ValueError):
            NnHyper(lr=-1.0)

    def test_torch_cross_check(self):
        """One manual-SGD step in torch matches our analytic gradients."""
        torch = pytest.importorskip("torch")
        rng = np.random.Generator(np.random.PCG64(21))
        X = rng.normal(size=(8, 5))
        y = rng.integers(0, 2, size=8).astype(float)
        W1 = rng.normal(size=(6, 5))
        b1 = rng.normal(size=6)
        W2 = rng.normal(size=6)
        b2 = float(rng.normal())

        params = {"W1": W1.copy(), "b1": b1.copy(), "W2": W2.copy(),
                  "b2": np.array([b2])}
        _, ours = nn_loss_and_grads(params, X, y)

        tW1 = torch.tensor(W1, requires_grad=True)
        tb1 = torch.tensor(b1, requires_grad=True)
        tW2 = torch.tensor(W2, requires_grad=True)
        tb2 = torch.tensor([b2], requires_grad=True, dtype=torch.float64)
        tX = torch.tensor(X)
        ty = torch.tensor(y)
        logits = torch.relu(tX @ tW1.T + tb1) @ tW2 + tb2
        loss = torch.nn.functional.binary_cross_entropy_with_logits(logits, ty)
        loss.backward()
        assert np.allclose(ours["W1"], tW1.grad.numpy(), atol=1e-10)
        assert np.allclose(ours["b1"], tb1.grad.numpy(), atol=1e-10)
        assert np.allclose(ours["W2"], tW2.grad.numpy(), atol=1e-10)
        assert ours["b2"][0] == pytest.approx(float(tb2.grad[0]), abs=1e-10)


class TestCalibration:
    def test_raw_passthrough(self):
        calib = Calibration()
        assert calib.apply(1.5) == 1.5
        assert calib.default_threshold == 0.0

    def test_sigmoid_fit_recovers_probabilities(self):
        rng = np.random.Generator(np.random.PCG64(3))
        scores = rng.normal(size=400)
        true = 1 / (1 + np.exp(-(2.0 * scores - 0.5)))
        y = (rng.random(400) < true).astype(float)
        calib = fit_sigmoid_calibration(scores, y)
        assert calib.kind == "sigmoid"
        assert calib.slope == pytest.approx(2.0, abs=0.5)
        assert calib.intercept == pytest.approx(-0.5, abs=0.4)
        assert calib.default_threshold == 0.5

    def test_sigmoid_is_rank_preserving(self):
        calib = Calibration(kind="sigmoid", slope=3.0, intercept=-1.0)
        scores = np.linspace(-2, 2, 9)
        out = calib.apply(scores)
        assert np.all(np.diff(out) > 0)

    def test_fit_validation(self):
        with pytest.raises(ValueError):
            fit_sigmoid_calibration(np.array([]), np.array([]))
        with pytest.raises(ValueError):
            fit_sigmoid_calibration(np.array([1.0, 2.0]), np.array([1.0]))
