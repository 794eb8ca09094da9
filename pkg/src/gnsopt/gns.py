"""Gradient-noise-scale estimation from rank-level statistics.

The estimators convert the spread of local rank gradients into unbiased
single-sample noise statistics: the ``B / (R - 1)`` factor combines the
Bessel correction across ranks with the rescaling from local-mean variance
to single-sample variance.  Each geometry then measures noise and signal
in its own dual norm:

* sign geometry: ``||sigma_hat||_1^2`` against ``||g||_1^2``
* Euclidean: ``sum(sigma_hat^2)`` against ``||g||_2^2``
* spectral: squared sqrt-nuclear norm of the row covariance against
  ``||G||_nuclear^2``
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import GeometryKind, covariance_sqrt_nuclear, dual_norm
from .parallel import GradientBundle, LeafMoments, RankLayout
from .params import leaf_items


@dataclass(frozen=True)
class NoiseEstimate:
    """Noise and signal scalars for one parameter group and geometry."""

    geometry: GeometryKind
    noise_scalar: float
    signal_scalar: float
    sigma_hat: np.ndarray | None = None
    cov: np.ndarray | None = None

    @property
    def gns(self) -> float:
        if self.signal_scalar <= 0.0:
            raise ValueError("noise scale undefined for a zero gradient")
        return self.noise_scalar / self.signal_scalar


@dataclass(frozen=True)
class EmaPair:
    """Exponentially smoothed noise and signal scalars.

    The first observation initializes both averages directly, so early
    measurements are not dragged toward zero.
    """

    beta_noise: float
    beta_signal: float
    noise: float = 0.0
    signal: float = 0.0
    initialized: bool = False

    def __post_init__(self):
        for beta in (self.beta_noise, self.beta_signal):
            if not 0.0 <= beta < 1.0:
                raise ValueError("EMA decay factors must lie in [0, 1)")

    @property
    def ratio(self) -> float:
        if not self.initialized or self.signal <= 0.0:
            return float("nan")
        return self.noise / self.signal


def ema_update(pair: EmaPair, noise: float, signal: float) -> EmaPair:
    """Fold one (noise, signal) observation into the moving averages."""
    if noise < 0.0 or signal < 0.0:
        raise ValueError("noise and signal scalars must be nonnegative")
    if not pair.initialized:
        return replace(pair, noise=float(noise), signal=float(signal),
                       initialized=True)
    return replace(
        pair,
        noise=pair.beta_noise * pair.noise + (1.0 - pair.beta_noise) * noise,
        signal=pair.beta_signal * pair.signal + (1.0 - pair.beta_signal) * signal,
    )


def _require_ranks(layout: RankLayout):
    if layout.ranks < 2:
        raise ValueError("noise estimation needs at least 2 ranks")


def coord_variance(layout: RankLayout, global_grad, squares_mean) -> np.ndarray:
    """Unbiased per-coordinate single-sample variance from rank statistics.

    Tiny negative values from floating-point cancellation are clamped to
    zero; the exact-arithmetic quantity is nonnegative.
    """
    _require_ranks(layout)
    scale = layout.global_batch / (layout.ranks - 1)
    raw = scale * (np.asarray(squares_mean, dtype=float)
                   - np.asarray(global_grad, dtype=float) ** 2)
    return np.clip(raw, 0.0, None)


def row_covariance(layout: RankLayout, global_grad, gram_mean,
                   side: str = "row") -> np.ndarray:
    """Unbiased single-sample covariance on the chosen matrix side."""
    _require_ranks(layout)
    g = np.asarray(global_grad, dtype=float)
    outer = g @ g.T if side == "row" else g.T @ g
    scale = layout.global_batch / (layout.ranks - 1)
    raw = scale * (np.asarray(gram_mean, dtype=float) - outer)
    return 0.5 * (raw + raw.T)


def leaf_scalars(layout: RankLayout, global_grad, moments: LeafMoments,
                 geometry: GeometryKind):
    """(noise_scalar, signal_scalar) for one parameter group."""
    g = np.asarray(global_grad, dtype=float)
    if geometry is GeometryKind.SIGN_LINF:
        sigma = np.sqrt(coord_variance(layout, g, moments.squares_mean))
        return float(sigma.sum()) ** 2, dual_norm(g, geometry) ** 2
    if geometry is GeometryKind.EUCLIDEAN:
        var = coord_variance(layout, g, moments.squares_mean)
        return float(var.sum()), dual_norm(g, geometry) ** 2
    if geometry is GeometryKind.SPECTRAL_SINF:
        if moments.gram_mean is None:
            raise ValueError("spectral noise scale needs Gram statistics")
        cov = row_covariance(layout, g, moments.gram_mean, moments.gram_side)
        return covariance_sqrt_nuclear(cov) ** 2, dual_norm(g, geometry) ** 2
    raise ValueError(f"unknown geometry {geometry!r}")


def gns_value(layout: RankLayout, global_grad, moments: LeafMoments,
              geometry: GeometryKind) -> NoiseEstimate:
    """Full noise estimate for one parameter group.

    Raises if the global gradient is zero: the noise-to-signal ratio is
    undefined there, and the caller's monotone batch rule plus batch cap
    absorb transient spikes instead.
    """
    g = np.asarray(global_grad, dtype=float)
    noise, signal = leaf_scalars(layout, g, moments, geometry)
    if signal <= 0.0:
        raise ValueError("noise scale undefined for a zero gradient")
    sigma_hat = cov = None
    if geometry is GeometryKind.SPECTRAL_SINF:
        cov = row_covariance(layout, g, moments.gram_mean, moments.gram_side)
    else:
        sigma_hat = np.sqrt(coord_variance(layout, g, moments.squares_mean))
    return NoiseEstimate(geometry, noise, signal, sigma_hat=sigma_hat, cov=cov)


def measure(bundle: GradientBundle, moments, geometry: GeometryKind,
            only_2d: bool = False):
    """Aggregate (noise, signal) scalars over eligible parameter groups.

    With ``only_2d`` set, only matrix-shaped groups contribute; it is an
    error if no group qualifies.
    """
    global_leaves = dict(leaf_items(bundle.global_grad))
    moment_leaves = moments if isinstance(moments, dict) else {"": moments}
    noise_total = signal_total = 0.0
    eligible = 0
    for name, g in global_leaves.items():
        if only_2d and np.asarray(g).ndim != 2:
            continue
        eligible += 1
        noise, signal = leaf_scalars(bundle.layout, g, moment_leaves[name], geometry)
        noise_total += noise
        signal_total += signal
    if eligible == 0:
        raise ValueError("no parameter group is eligible for noise measurement")
    return noise_total, signal_total


def oracle_measure(problem, params, geometry: GeometryKind, only_2d: bool = False):
    """Exact (noise, signal) scalars from a synthetic problem's ground truth."""
    if not getattr(problem, "synthetic", False):
        raise ValueError("oracle measurement needs a synthetic problem")
    del only_2d  # synthetic problems have a single parameter group
    return problem.oracle_scalars(params, geometry)
