"""Parameter update rules sharing one functional interface.

Every optimizer takes ``(params, grads, lr)`` and returns new parameters,
where ``lr`` is the fully scaled step size (base schedule times any
batch-coupled multiplier).  Decoupled weight decay shrinks parameters by
``lr * weight_decay`` before the geometric update.  Params and grads are
either bare arrays or flat dicts of named arrays.
"""

from __future__ import annotations

import numpy as np

from .geometry import matsign_exact, matsign_newton_schulz
from .params import leaf_items


class _LeafOptimizer:
    """Base for rules applied leaf by leaf with per-leaf state."""

    weight_decay = 0.0

    def __init__(self):
        self._state = {}
        self.step_count = 0

    def step(self, params, grads, lr):
        self.step_count += 1
        grad_leaves = dict(leaf_items(grads))

        def update(name, x):
            g = np.asarray(grad_leaves[name], dtype=float)
            x = np.asarray(x, dtype=float)
            if g.shape != x.shape:
                raise ValueError(f"gradient shape {g.shape} does not match "
                                 f"parameter shape {x.shape}")
            if self.weight_decay:
                x = x * (1.0 - lr * self.weight_decay)
            return x - lr * self._direction(name, g)

        if isinstance(params, dict):
            return {name: update(name, x) for name, x in params.items()}
        return update("", params)

    def _buffer(self, name, like):
        if name not in self._state:
            self._state[name] = np.zeros_like(like)
        return self._state[name]

    def _direction(self, name, g):
        raise NotImplementedError


class Sgd(_LeafOptimizer):
    """SGD with optional heavy-ball momentum (``m <- beta m + g``)."""

    def __init__(self, momentum=0.0, weight_decay=0.0):
        super().__init__()
        self.momentum = momentum
        self.weight_decay = weight_decay

    def _direction(self, name, g):
        if self.momentum == 0.0:
            return g
        m = self.momentum * self._buffer(name, g) + g
        self._state[name] = m
        return m


class SignSgd(_LeafOptimizer):
    """Steepest descent in the sign geometry: step by sign(g)."""

    def __init__(self, weight_decay=0.0):
        super().__init__()
        self.weight_decay = weight_decay

    def _direction(self, name, g):
        return np.sign(g)


class Signum(_LeafOptimizer):
    """Sign descent on a dampened gradient average ``m <- beta m + (1-beta) g``."""

    def __init__(self, beta=0.9, weight_decay=0.0):
        super().__init__()
        self.beta = beta
        self.weight_decay = weight_decay

    def _direction(self, name, g):
        m = self.beta * self._buffer(name, g) + (1.0 - self.beta) * g
        self._state[name] = m
        return np.sign(m)


class SpecSgd(_LeafOptimizer):
    """Steepest descent in the spectral geometry: step by the polar factor."""

    def __init__(self, weight_decay=0.0):
        super().__init__()
        self.weight_decay = weight_decay

    def _direction(self, name, g):
        if g.ndim != 2:
            raise ValueError("spectral descent applies to matrix parameters only")
        return matsign_exact(g).values


class Muon(_LeafOptimizer):
    """Spectral descent on a dampened gradient average, orthogonalized by
    Newton-Schulz iterations instead of an exact SVD."""

    def __init__(self, beta=0.95, ns_iterations=5, weight_decay=0.0):
        super().__init__()
        self.beta = beta
        self.ns_iterations = ns_iterations
        self.weight_decay = weight_decay

    def _direction(self, name, g):
        if g.ndim != 2:
            raise ValueError("spectral descent applies to matrix parameters only")
        m = self.beta * self._buffer(name, g) + (1.0 - self.beta) * g
        self._state[name] = m
        return matsign_newton_schulz(m, self.ns_iterations).values


class AdamW(_LeafOptimizer):
    """Adam with bias correction and decoupled weight decay."""

    def __init__(self, beta1=0.9, beta2=0.999, epsilon=1e-8, weight_decay=0.0):
        super().__init__()
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.weight_decay = weight_decay

    def _direction(self, name, g):
        if name + "/m" not in self._state:
            self._state[name + "/m"] = np.zeros_like(g)
            self._state[name + "/v"] = np.zeros_like(g)
        m = self.beta1 * self._state[name + "/m"] + (1.0 - self.beta1) * g
        v = self.beta2 * self._state[name + "/v"] + (1.0 - self.beta2) * g * g
        self._state[name + "/m"] = m
        self._state[name + "/v"] = v
        t = self.step_count
        m_hat = m / (1.0 - self.beta1 ** t)
        v_hat = v / (1.0 - self.beta2 ** t)
        return m_hat / (np.sqrt(v_hat) + self.epsilon)


class Composite:
    """Routes matrix groups to one rule and vector groups to another.

    Each sub-rule steps once per composite step on all the groups it owns,
    so stateful rules keep per-group buffers and correct step counters.
    """

    def __init__(self, matrix_opt, vector_opt):
        self.matrix_opt = matrix_opt
        self.vector_opt = vector_opt
        self.step_count = 0

    def step(self, params, grads, lr):
        self.step_count += 1
        bare = not isinstance(params, dict)
        param_leaves = dict(leaf_items(params))
        grad_leaves = dict(leaf_items(grads))
        routed = {True: {}, False: {}}
        for name, x in param_leaves.items():
            routed[np.asarray(x).ndim == 2][name] = x
        out = {}
        for is_matrix, opt in ((True, self.matrix_opt), (False, self.vector_opt)):
            subset = routed[is_matrix]
            if not subset:
                continue
            if opt is None:
                label = "matrix" if is_matrix else "vector"
                raise ValueError(f"no optimizer assigned for {label} groups "
                                 f"{sorted(subset)}")
            out.update(opt.step(subset, {n: grad_leaves[n] for n in subset}, lr))
        ordered = {name: out[name] for name in param_leaves}
        return ordered[""] if bare else ordered


def build_optimizer(name, beta=0.9, beta1=0.9, beta2=0.999,
                    epsilon=1e-8, weight_decay=0.0, ns_iterations=5):
    """Factory keyed by the config-facing optimizer name.

    The step size is not part of optimizer state; the harness passes the
    scheduled value to ``step`` every iteration.
    """
    if name == "sgd":
        return Sgd(momentum=0.0, weight_decay=weight_decay)
    if name == "msgd":
        return Sgd(momentum=beta, weight_decay=weight_decay)
    if name == "signsgd":
        return SignSgd(weight_decay=weight_decay)
    if name == "signum":
        return Signum(beta=beta, weight_decay=weight_decay)
    if name == "specsgd":
        return SpecSgd(weight_decay=weight_decay)
    if name == "muon":
        return Muon(beta=beta, ns_iterations=ns_iterations,
                    weight_decay=weight_decay)
    if name == "adamw":
        return AdamW(beta1=beta1, beta2=beta2, epsilon=epsilon,
                     weight_decay=weight_decay)
    if name == "composite":
        return Composite(
            Muon(beta=beta, ns_iterations=ns_iterations, weight_decay=weight_decay),
            AdamW(beta1=beta1, beta2=beta2, epsilon=epsilon,
                  weight_decay=weight_decay),
        )
    raise ValueError(f"unknown optimizer {name!r}")


OPTIMIZER_NAMES = ("sgd", "msgd", "signsgd", "signum", "specsgd", "muon",
                   "adamw", "composite")
