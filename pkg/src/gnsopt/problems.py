"""Objectives with per-sample gradient access and known noise statistics.

Two synthetic families (``NoisyQuadratic``, ``MatrixQuadratic``) expose
their exact expected gradients and exact noise statistics, so estimators
and bound checks can be tested against ground truth.  Two small data
problems (``Logistic``, ``TinyMlp``) provide finite train/held-out sets
where the full-batch gradient is the exact expected gradient.

Per-sample draws are addressed by ``(seed, step, sample index)`` through
the counter streams in :mod:`gnsopt.rng`, so a sample's gradient never
depends on the batch size or rank count it is computed under.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from . import rng
from .geometry import GeometryKind, dual_norm
from .params import leaf_items, map_leaves

PROBLEM_KINDS = ("noisy_quadratic", "matrix_quadratic", "logistic", "tiny_mlp")


class NoisyQuadratic:
    """Diagonal quadratic with additive per-sample gradient noise.

    The per-sample gradient at ``x`` is ``a * x - b + sigma * z`` with
    ``z`` drawn zero-mean, unit-variance per coordinate.  The loss is
    reported as the gap above the minimum, so its optimal value is 0.
    """

    kind = "noisy_quadratic"
    synthetic = True

    def __init__(self, curvature, linear, noise_var, noise="gaussian", noise_df=5.0):
        a = np.asarray(curvature, dtype=float)
        if a.ndim != 1 or a.size == 0 or np.any(a <= 0):
            raise ValueError("curvature must be a positive vector")
        b = np.asarray(linear, dtype=float)
        var = np.asarray(noise_var, dtype=float)
        if b.shape != a.shape or var.shape != a.shape:
            raise ValueError("curvature, linear, and noise_var shapes must match")
        if np.any(var < 0):
            raise ValueError("noise variances must be nonnegative")
        if noise not in rng.DISTRIBUTIONS:
            raise ValueError(f"unknown noise distribution {noise!r}")
        self.curvature = a
        self.linear = b
        self.noise_var = var
        self.sigma = np.sqrt(var)
        self.noise = noise
        self.noise_df = float(noise_df)
        self.dim = a.size
        self.minimizer = b / a
        # Descent constants in the sign geometry: the l1 gradient map is
        # sum(a)-Lipschitz in the sup norm, and the squared l1 gradient
        # norm dominates 2 * min(a) times the loss gap.
        self.smoothness = float(a.sum())
        self.strong_convexity = float(a.min())

    @classmethod
    def standard(cls, dim, curvature_min=0.5, curvature_max=2.0, noise_scale=1.0,
                 noise="gaussian", noise_df=5.0):
        a = np.linspace(curvature_min, curvature_max, dim)
        return cls(a, np.zeros(dim), np.full(dim, noise_scale ** 2), noise, noise_df)

    def init_params(self, seed=0, scale=1.0):
        z = rng.sample_table(seed, rng.INIT_STREAM, 0, 1, self.dim)[0]
        return self.minimizer + scale * z

    def loss(self, x):
        d = np.asarray(x, dtype=float) - self.minimizer
        return 0.5 * float(self.curvature @ (d * d))

    eval_loss = loss

    def true_gradient(self, x):
        return self.curvature * np.asarray(x, dtype=float) - self.linear

    def sample_gradients(self, x, seed, step, start, count):
        z = rng.sample_table(seed, step, start, count, self.dim,
                             self.noise, self.noise_df)
        return self.true_gradient(x) + z * self.sigma

    def true_noise_stats(self, x=None):
        return self.sigma.copy()

    def exact_noise_scalar(self, geometry: GeometryKind) -> float:
        if geometry is GeometryKind.SIGN_LINF:
            return float(self.sigma.sum()) ** 2
        if geometry is GeometryKind.EUCLIDEAN:
            return float(self.noise_var.sum())
        raise ValueError("nuclear noise scale undefined for vector parameters")

    def oracle_scalars(self, x, geometry: GeometryKind):
        g = self.true_gradient(x)
        return self.exact_noise_scalar(geometry), dual_norm(g, geometry) ** 2


class MatrixQuadratic:
    """Matrix quadratic ``0.5 * ||X - X*||_F^2`` with structured noise.

    Per-sample gradients are ``(X - X*) + S @ Z / sqrt(n)`` where
    ``S = row_cov^{1/2}`` and ``Z`` has i.i.d. zero-mean unit-variance
    entries, so the single-sample error has row covariance exactly
    ``row_cov``.
    """

    kind = "matrix_quadratic"
    synthetic = True

    def __init__(self, target, row_cov, noise="gaussian", noise_df=5.0):
        x_star = np.asarray(target, dtype=float)
        if x_star.ndim != 2:
            raise ValueError("target must be a matrix")
        C = np.asarray(row_cov, dtype=float)
        m, n = x_star.shape
        if C.shape != (m, m):
            raise ValueError("row covariance must be (rows, rows)")
        if np.abs(C - C.T).max() > 1e-10 * max(1.0, np.abs(C).max()):
            raise ValueError("row covariance must be symmetric")
        if noise not in rng.DISTRIBUTIONS:
            raise ValueError(f"unknown noise distribution {noise!r}")
        w, v = np.linalg.eigh(0.5 * (C + C.T))
        if w.min() < -1e-10 * max(1.0, np.abs(w).max()):
            raise ValueError("row covariance must be positive semidefinite")
        w = np.clip(w, 0.0, None)
        self.target = x_star
        self.row_cov = 0.5 * (C + C.T)
        self.noise = noise
        self.noise_df = float(noise_df)
        self.shape = (m, n)
        self.sqrt_nuclear = float(np.sqrt(w).sum())
        self._mixer = (v * np.sqrt(w)) @ v.T / math.sqrt(n)
        # Descent constant for the spectral geometry: a unit-spectral-norm
        # step of rank r has squared Frobenius norm up to r = min(m, n).
        self.smoothness = float(min(m, n))
        self.strong_convexity = 1.0

    @classmethod
    def standard(cls, rows, cols, noise_scale=1.0, target_scale=1.0,
                 noise="gaussian", noise_df=5.0, data_seed=0):
        z = rng.sample_table(data_seed, rng.DATA_STREAM, 0, 1, rows * cols)[0]
        target = target_scale * z.reshape(rows, cols)
        return cls(target, noise_scale ** 2 * np.eye(rows), noise, noise_df)

    def init_params(self, seed=0, scale=1.0):
        m, n = self.shape
        z = rng.sample_table(seed, rng.INIT_STREAM, 0, 1, m * n)[0]
        return self.target + scale * z.reshape(m, n)

    def loss(self, x):
        d = np.asarray(x, dtype=float) - self.target
        return 0.5 * float((d * d).sum())

    eval_loss = loss

    def true_gradient(self, x):
        return np.asarray(x, dtype=float) - self.target

    def sample_gradients(self, x, seed, step, start, count):
        m, n = self.shape
        z = rng.sample_table(seed, step, start, count, m * n,
                             self.noise, self.noise_df).reshape(count, m, n)
        return self.true_gradient(x) + np.einsum("ij,sjk->sik", self._mixer, z)

    def true_noise_stats(self, x=None):
        return self.row_cov.copy()

    def exact_noise_scalar(self, geometry: GeometryKind) -> float:
        m, n = self.shape
        if geometry is GeometryKind.SPECTRAL_SINF:
            return self.sqrt_nuclear ** 2
        if geometry is GeometryKind.EUCLIDEAN:
            return float(np.trace(self.row_cov))
        if geometry is GeometryKind.SIGN_LINF:
            # elementwise std is sqrt(C_ii / n), constant across each row
            return (math.sqrt(n) * float(np.sqrt(np.diag(self.row_cov)).sum())) ** 2
        raise ValueError(f"unknown geometry {geometry!r}")

    def oracle_scalars(self, x, geometry: GeometryKind):
        g = self.true_gradient(x)
        return self.exact_noise_scalar(geometry), dual_norm(g, geometry) ** 2


class Logistic:
    """Binary logistic regression on two fixed Gaussian clusters.

    The dataset (2048 train / 512 held-out by default) is generated once
    from ``data_seed`` and never resampled; per-step batches draw row
    indices i.i.d. with replacement from the train split.
    """

    kind = "logistic"
    synthetic = False

    def __init__(self, features=8, train_size=2048, eval_size=512,
                 separation=2.0, data_seed=0):
        total = train_size + eval_size
        f = features
        labels = np.where(np.arange(total) % 2 == 0, 1.0, -1.0)
        z = rng.sample_table(data_seed, rng.DATA_STREAM, 0, total, f)
        mu = separation / math.sqrt(f) * np.ones(f)
        raw = z + labels[:, None] * mu
        design = np.concatenate([raw, np.ones((total, 1))], axis=1)
        self.dim = f + 1
        self.train_x, self.train_y = design[:train_size], labels[:train_size]
        self.eval_x, self.eval_y = design[train_size:], labels[train_size:]
        self.train_size = train_size

    def init_params(self, seed=0, scale=0.0):
        if scale == 0.0:
            return np.zeros(self.dim)
        z = rng.sample_table(seed, rng.INIT_STREAM, 0, 1, self.dim)[0]
        return scale * z

    def _mean_loss(self, w, x, y):
        margins = -y * (x @ w)
        return float(np.logaddexp(0.0, margins).mean())

    def loss(self, w):
        return self._mean_loss(w, self.train_x, self.train_y)

    def eval_loss(self, w):
        return self._mean_loss(w, self.eval_x, self.eval_y)

    def true_gradient(self, w):
        s = special.expit(-self.train_y * (self.train_x @ w))
        return -(self.train_x * (self.train_y * s)[:, None]).mean(axis=0)

    def _batch_rows(self, seed, step, start, count):
        idx = rng.sample_indices(seed, step, start, count, self.train_size)
        return self.train_x[idx], self.train_y[idx]

    def sample_gradients(self, w, seed, step, start, count):
        x, y = self._batch_rows(seed, step, start, count)
        s = special.expit(-y * (x @ w))
        return -x * (y * s)[:, None]

    def batch_loss(self, w, seed, step, count):
        x, y = self._batch_rows(seed, step, 0, count)
        return self._mean_loss(w, x, y)


class TinyMlp:
    """One-hidden-layer tanh regressor with squared loss.

    Parameters form a dict with a matrix group ``w1`` and vector groups
    ``b1`` and ``w2``, matching a teacher network of the same shape.
    Training targets are teacher outputs plus label noise (the gradient
    noise source); held-out targets are the noise-free teacher outputs,
    so the held-out loss measures excess risk directly.  Small enough
    that finite differences over every coordinate stay cheap.
    """

    kind = "tiny_mlp"
    synthetic = False

    def __init__(self, features=8, hidden=16, train_size=2048, eval_size=512,
                 label_noise=0.25, data_seed=0):
        if hidden > 64:
            raise ValueError("hidden width is limited to 64 units")
        f, h = features, hidden
        total = train_size + eval_size
        teacher_words = h * f + 2 * h
        cursor = 0

        def take(n):
            nonlocal cursor
            block = rng.sample_table(data_seed, rng.DATA_STREAM, cursor, n, 1)[:, 0]
            cursor += n
            return block

        tw1 = take(h * f).reshape(h, f) / math.sqrt(f)
        tb1 = 0.5 * take(h)
        tw2 = take(h) / math.sqrt(h)
        noise = take(total)
        x = take(total * f).reshape(total, f)
        assert cursor == teacher_words + total + total * f
        clean = np.tanh(x @ tw1.T + tb1) @ tw2

        self.features, self.hidden = f, h
        self.train_x = x[:train_size]
        self.train_y = clean[:train_size] + label_noise * noise[:train_size]
        self.eval_x, self.eval_y = x[train_size:], clean[train_size:]
        self.train_size = train_size

    def init_params(self, seed=0):
        f, h = self.features, self.hidden
        z = rng.sample_table(seed, rng.INIT_STREAM, 0, 1, h * f + h)[0]
        return {
            "w1": z[: h * f].reshape(h, f) / math.sqrt(f),
            "b1": np.zeros(h),
            "w2": z[h * f:] / math.sqrt(h),
        }

    def _forward(self, p, x):
        a = np.tanh(x @ p["w1"].T + p["b1"])
        return a, a @ p["w2"]

    def _mean_loss(self, p, x, y):
        _, yhat = self._forward(p, x)
        return 0.5 * float(((yhat - y) ** 2).mean())

    def loss(self, p):
        return self._mean_loss(p, self.train_x, self.train_y)

    def eval_loss(self, p):
        return self._mean_loss(p, self.eval_x, self.eval_y)

    def _per_sample_grads(self, p, x, y):
        a, yhat = self._forward(p, x)
        r = yhat - y
        dz = (r[:, None] * p["w2"][None, :]) * (1.0 - a * a)
        return {
            "w1": dz[:, :, None] * x[:, None, :],
            "b1": dz,
            "w2": a * r[:, None],
        }

    def true_gradient(self, p):
        grads = self._per_sample_grads(p, self.train_x, self.train_y)
        return {name: g.mean(axis=0) for name, g in grads.items()}

    def _batch_rows(self, seed, step, start, count):
        idx = rng.sample_indices(seed, step, start, count, self.train_size)
        return self.train_x[idx], self.train_y[idx]

    def sample_gradients(self, p, seed, step, start, count):
        x, y = self._batch_rows(seed, step, start, count)
        return self._per_sample_grads(p, x, y)

    def batch_loss(self, p, seed, step, count):
        x, y = self._batch_rows(seed, step, 0, count)
        return self._mean_loss(p, x, y)


def per_sample_gradient(problem, params, sample_id, seed, step=0):
    """Gradient of the loss on one addressed sample; deterministic per address."""
    if sample_id < 0:
        raise ValueError("sample_id must be nonnegative")
    grads = problem.sample_gradients(params, seed, step, sample_id, 1)
    return map_leaves(lambda g: g[0], grads)


def true_noise_stats(problem, params=None):
    """Exact noise statistics; only synthetic problems carry them."""
    if not problem.synthetic:
        raise ValueError(f"{problem.kind} has no closed-form noise statistics")
    return problem.true_noise_stats(params)


def train_loss(problem, params, seed, step, batch):
    """Loss value recorded per step: exact for synthetic, batch mean otherwise."""
    if problem.synthetic:
        return problem.loss(params)
    return problem.batch_loss(params, seed, step, batch)


def finite_difference_check(problem, params, rel_step=1e-6):
    """Max central-difference error of ``true_gradient`` against ``loss``.

    The error is measured relative to the largest gradient magnitude, so
    the result is scale-free.  Covers every coordinate of every group.
    """
    grad = problem.true_gradient(params)
    scale = max(float(np.abs(g).max()) for _, g in leaf_items(grad))
    scale = max(scale, 1e-12)
    worst = 0.0
    for name, leaf in leaf_items(params):
        leaf = np.asarray(leaf, dtype=float)
        g = grad[name] if name else grad
        flat = leaf.ravel()
        for i in range(flat.size):
            h = rel_step * max(1.0, abs(flat[i]))
            for sign_, out in ((1.0, "hi"), (-1.0, "lo")):
                bumped = flat.copy()
                bumped[i] += sign_ * h
                candidate = bumped.reshape(leaf.shape)
                if name:
                    trial = dict(params)
                    trial[name] = candidate
                else:
                    trial = candidate
                if out == "hi":
                    hi = problem.loss(trial)
                else:
                    lo = problem.loss(trial)
            fd = (hi - lo) / (2.0 * h)
            worst = max(worst, abs(fd - g.ravel()[i]) / scale)
    return worst


def build_problem(kind, **kwargs):
    builders = {
        "noisy_quadratic": NoisyQuadratic.standard,
        "matrix_quadratic": MatrixQuadratic.standard,
        "logistic": Logistic,
        "tiny_mlp": TinyMlp,
    }
    if kind not in builders:
        raise ValueError(f"unknown problem kind {kind!r}")
    return builders[kind](**kwargs)
