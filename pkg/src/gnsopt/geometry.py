"""Norm geometries for steepest descent: Euclidean, sign, and spectral.

Each geometry pairs a primal norm, which constrains the update direction,
with its dual norm, which is the natural scale for gradients and gradient
noise.  Every direction function returns a maximizer of ``<v, p>`` over the
primal unit ball, so ``<v, direction(v)>`` equals the dual norm of ``v``.
All computation is double precision.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class GeometryKind(enum.Enum):
    """Primal/dual norm pair; the value is the dual-norm name used in configs."""

    EUCLIDEAN = "l2"
    SIGN_LINF = "l1"
    SPECTRAL_SINF = "nuclear"

    @classmethod
    def from_name(cls, name: str) -> "GeometryKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown geometry {name!r}; expected one of "
                         f"{[k.value for k in cls]}")


@dataclass(frozen=True)
class Direction:
    """A steepest-descent direction and its primal norm (at most 1)."""

    values: np.ndarray
    primal_norm: float


def _require_finite(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("input contains non-finite values")
    return v


def dual_norm(v, geometry: GeometryKind) -> float:
    """Dual norm of ``v``: l2 / Frobenius, l1, or nuclear by geometry."""
    v = _require_finite(v)
    if geometry is GeometryKind.EUCLIDEAN:
        return float(np.linalg.norm(v.ravel()))
    if geometry is GeometryKind.SIGN_LINF:
        return float(np.abs(v).sum())
    if geometry is GeometryKind.SPECTRAL_SINF:
        if v.ndim != 2:
            raise ValueError("spectral geometry applies to matrices only")
        return float(np.linalg.svd(v, compute_uv=False).sum())
    raise ValueError(f"unknown geometry {geometry!r}")


def sign_direction(g) -> Direction:
    """Elementwise sign of ``g``; components that are exactly 0 stay 0."""
    g = _require_finite(g)
    p = np.sign(g)
    return Direction(p, float(np.max(np.abs(p))) if p.size else 0.0)


def normalized_direction(g) -> Direction:
    """Unit Euclidean vector aligned with ``g``."""
    g = _require_finite(g)
    norm = float(np.linalg.norm(g.ravel()))
    if norm == 0.0:
        raise ValueError("direction undefined for the zero vector")
    return Direction(g / norm, 1.0)


def _svd_rank_threshold(s: np.ndarray, shape) -> float:
    return max(shape) * np.finfo(float).eps * float(s[0])


def matsign_exact(G) -> Direction:
    """Semi-orthogonal polar factor of ``G`` via the reduced SVD.

    Singular values at or below ``max(m, n) * eps * s_max`` are treated as
    zero and their subspaces dropped, so the output has numerical rank
    equal to the input's and every retained singular value equal to 1.
    """
    G = _require_finite(G)
    if G.ndim != 2:
        raise ValueError("matrix sign requires a 2-d array")
    if not np.any(G):
        raise ValueError("matrix sign undefined for the zero matrix")
    u, s, vt = np.linalg.svd(G, full_matrices=False)
    keep = s > _svd_rank_threshold(s, G.shape)
    p = u[:, keep] @ vt[keep]
    return Direction(p, 1.0)


def matsign_newton_schulz(G, iterations: int = 5) -> Direction:
    """Approximate the polar factor with the cubic Newton-Schulz iteration.

    Starts from ``G`` scaled to unit Frobenius norm, so every singular
    value lies in (0, 1] and the iterates converge monotonically toward
    the exact matrix sign for full-rank inputs.
    """
    G = _require_finite(G)
    if G.ndim != 2:
        raise ValueError("matrix sign requires a 2-d array")
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    scale = float(np.linalg.norm(G))
    if scale == 0.0:
        raise ValueError("matrix sign undefined for the zero matrix")
    x = G / scale
    m, n = x.shape
    for _ in range(iterations):
        if m <= n:
            x = 1.5 * x - 0.5 * (x @ x.T) @ x
        else:
            x = 1.5 * x - 0.5 * x @ (x.T @ x)
    return Direction(x, float(np.linalg.norm(x, 2)))


def steepest_direction(v, geometry: GeometryKind) -> Direction:
    """Dispatcher: the unit-primal-norm maximizer of ``<v, p>``."""
    if geometry is GeometryKind.EUCLIDEAN:
        return normalized_direction(v)
    if geometry is GeometryKind.SIGN_LINF:
        return sign_direction(v)
    if geometry is GeometryKind.SPECTRAL_SINF:
        return matsign_exact(v)
    raise ValueError(f"unknown geometry {geometry!r}")


def covariance_sqrt_nuclear(C, tol: float = 1e-10) -> float:
    """Sum of square roots of the eigenvalues of a symmetric PSD matrix.

    Eigenvalues in ``[-tol * scale, 0)`` are clamped to zero; asymmetry or
    indefiniteness beyond that tolerance is an error.
    """
    C = _require_finite(C)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("covariance must be a square matrix")
    scale = max(1.0, float(np.abs(C).max()) if C.size else 0.0)
    if float(np.abs(C - C.T).max()) > tol * scale:
        raise ValueError("covariance matrix is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (C + C.T))
    if w.size and float(w.min()) < -tol * scale:
        raise ValueError(f"covariance has eigenvalue {w.min():.3e} below -tol")
    return float(np.sqrt(np.clip(w, 0.0, None)).sum())
