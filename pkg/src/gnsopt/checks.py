"""Fast invariant suites behind the ``check`` CLI verb.

Each check is a trimmed-down version of a property the test suite covers
in full; together they give a seconds-long smoke screen for an install.
"""

from __future__ import annotations

import numpy as np

from .analysis import ImprovementParams, cbs_fraction, expected_improvement
from .geometry import (GeometryKind, dual_norm, matsign_exact,
                       matsign_newton_schulz, steepest_direction)
from .gns import gns_value
from .parallel import RankLayout, simulate_step
from .problems import NoisyQuadratic
from .scheduler import (ScheduleConfig, controller_step, initial_state)


def _check_direction_identities() -> bool:
    rng = np.random.default_rng(1)
    for geometry in GeometryKind:
        for _ in range(200):
            v = rng.standard_normal((6, 9)) if geometry is GeometryKind.SPECTRAL_SINF \
                else rng.standard_normal(24)
            p = steepest_direction(v, geometry).values
            target = dual_norm(v, geometry)
            if abs(float((v * p).sum()) - target) > 1e-10 * max(1.0, target):
                return False
    return True


def _check_newton_schulz() -> bool:
    rng = np.random.default_rng(2)
    for _ in range(5):
        u, _ = np.linalg.qr(rng.standard_normal((32, 16)))
        v, _ = np.linalg.qr(rng.standard_normal((16, 16)))
        s = np.linspace(0.1, 1.0, 16)
        g = (u * s) @ v.T
        err = np.linalg.norm(matsign_newton_schulz(g, 30).values
                             - matsign_exact(g).values) / np.sqrt(16)
        if err > 1e-6:
            return False
    return True


def _check_controller_replay() -> bool:
    config = ScheduleConfig(initial_batch=16, theta=0.5, frequency=2,
                            warmup_steps=2, beta_noise=0.5, beta_signal=0.5)
    state = initial_state(config)
    script = {0: (64.0, 4.0), 2: (32.0, 4.0), 4: (12.0, 12.0)}
    for k in range(6):
        state = controller_step(state, config, script.get(k))
    return state.batch == 48 and abs(state.lr_multiplier - np.sqrt(3.0)) < 1e-12


def _check_estimator() -> bool:
    problem = NoisyQuadratic.standard(dim=4, noise_scale=0.7)
    x = problem.init_params(0)
    layout = RankLayout(4, 32)
    total = np.zeros(4)
    trials = 2000
    for t in range(trials):
        bundle, moments = simulate_step(problem, x, layout, 7, t, want_stats=True)
        est = gns_value(layout, bundle.global_grad, moments, GeometryKind.SIGN_LINF)
        total += est.sigma_hat ** 2
    rel = np.abs(total / trials - problem.noise_var) / problem.noise_var
    return float(rel.max()) < 0.1


def _check_cbs_identity() -> bool:
    params = ImprovementParams(GeometryKind.SIGN_LINF, 2.0, 3.0, dimension=8)
    sat = params.grad_dual_norm ** 2 / (2.0 * params.dimension)
    for kappa in (0.1, 0.5, 0.9):
        b = cbs_fraction(kappa, params.gns, params.geometry).value
        if abs(expected_improvement(params, b) - kappa * sat) > 1e-12:
            return False
    return True


CHECKS = (
    ("direction/dual-norm identities", _check_direction_identities),
    ("newton-schulz vs svd", _check_newton_schulz),
    ("controller scripted replay", _check_controller_replay),
    ("noise estimator unbiasedness", _check_estimator),
    ("critical-batch identity", _check_cbs_identity),
)


def run_all(quiet: bool = False) -> int:
    """Run every check; returns the number of failures."""
    failures = 0
    for label, fn in CHECKS:
        ok = fn()
        if not ok:
            failures += 1
        if not quiet or not ok:
            print(f"{'ok  ' if ok else 'FAIL'} {label}")
    return failures
