"""Helpers for parameter collections.

A parameter set is either a single ndarray or a flat dict mapping group
names to ndarrays.  These helpers let the simulator, optimizers, and
statistics code treat both uniformly.
"""

from __future__ import annotations

import numpy as np


def is_grouped(params) -> bool:
    return isinstance(params, dict)


def leaf_items(params):
    """(name, array) pairs; a bare array gets the empty name."""
    if is_grouped(params):
        return list(params.items())
    return [("", params)]


def map_leaves(fn, *trees):
    """Apply ``fn`` leafwise across parallel trees, preserving structure."""
    first = trees[0]
    if is_grouped(first):
        return {name: fn(*(t[name] for t in trees)) for name in first}
    return fn(*trees)


def total_size(params) -> int:
    return sum(int(np.asarray(leaf).size) for _, leaf in leaf_items(params))


def all_finite(params) -> bool:
    return all(np.all(np.isfinite(leaf)) for _, leaf in leaf_items(params))
