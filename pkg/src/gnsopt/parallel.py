"""In-process simulation of data-parallel gradient computation.

A step shards one global batch across R ranks, computes each rank's local
mean gradient, and reduces them (plus optional second-moment statistics)
in a fixed ascending-rank order so results are bit-reproducible.  Because
samples are addressed by their global index, the union of draws, and
therefore the reduced gradient, does not depend on the rank count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import leaf_items, map_leaves


@dataclass(frozen=True)
class RankLayout:
    """Rank count and global batch; the batch must shard evenly."""

    ranks: int
    global_batch: int

    def __post_init__(self):
        if self.ranks < 1:
            raise ValueError("need at least one rank")
        if self.global_batch < 1:
            raise ValueError("global batch must be positive")
        if self.global_batch % self.ranks != 0:
            raise ValueError(
                f"batch {self.global_batch} does not divide across {self.ranks} ranks"
            )

    @property
    def local_batch(self) -> int:
        return self.global_batch // self.ranks


@dataclass
class GradientBundle:
    """Per-rank local mean gradients and their reduced global mean."""

    local_grads: list
    global_grad: object
    layout: RankLayout
    step: int


@dataclass
class LeafMoments:
    """Reduced second moments for one parameter group.

    ``squares_mean`` is the rank mean of elementwise squared local
    gradients; ``gram_mean`` (matrix groups only) is the rank mean of the
    local Gram matrix taken on the smaller matrix side.
    """

    squares_mean: np.ndarray
    gram_mean: np.ndarray | None = None
    gram_side: str | None = None


def partition_batch(sample_ids, layout: RankLayout):
    """Split ordered sample ids into R contiguous equal shards."""
    ids = np.asarray(sample_ids)
    if ids.shape[0] != layout.global_batch:
        raise ValueError("sample id count must equal the global batch")
    size = layout.local_batch
    return [ids[j * size:(j + 1) * size] for j in range(layout.ranks)]


def all_reduce_mean(tensors):
    """Elementwise mean, summed in ascending rank order for determinism."""
    if not tensors:
        raise ValueError("nothing to reduce")
    first = np.asarray(tensors[0], dtype=float)
    acc = first.copy()
    for t in tensors[1:]:
        t = np.asarray(t, dtype=float)
        if t.shape != first.shape:
            raise ValueError("tensor shapes must match for reduction")
        acc += t
    return acc / len(tensors)


def gram_mean(local_grads, side: str):
    """Rank mean of local Gram matrices on the requested matrix side."""
    if side == "row":
        grams = [g @ g.T for g in local_grads]
    elif side == "col":
        grams = [g.T @ g for g in local_grads]
    else:
        raise ValueError("side must be 'row' or 'col'")
    return all_reduce_mean(grams)


def smaller_side(shape) -> str:
    m, n = shape
    return "row" if m <= n else "col"


def simulate_step(problem, params, layout: RankLayout, seed, step,
                  want_stats=False):
    """One simulated data-parallel step.

    Draws the global batch addressed by ``(seed, step)``, computes local
    rank gradients and the reduced global gradient, and, when requested,
    the reduced second moments each noise estimator needs.  Returns a
    :class:`GradientBundle` and a moments structure (or ``None``).
    """
    grads = problem.sample_gradients(params, seed, step, 0, layout.global_batch)
    size = layout.local_batch

    def rank_mean(leaf, j):
        return leaf[j * size:(j + 1) * size].mean(axis=0)

    local_grads = [map_leaves(lambda leaf: rank_mean(leaf, j), grads)
                   for j in range(layout.ranks)]
    global_grad = map_leaves(lambda *locals_: all_reduce_mean(list(locals_)),
                             *local_grads)
    bundle = GradientBundle(local_grads, global_grad, layout, step)
    if not want_stats:
        return bundle, None

    def leaf_moments(name):
        locals_ = [lg[name] if name else lg for lg in local_grads]
        squares = all_reduce_mean([g * g for g in locals_])
        if locals_[0].ndim == 2:
            side = smaller_side(locals_[0].shape)
            return LeafMoments(squares, gram_mean(locals_, side), side)
        return LeafMoments(squares)

    names = [name for name, _ in leaf_items(params)]
    if isinstance(params, dict):
        moments = {name: leaf_moments(name) for name in names}
    else:
        moments = leaf_moments("")
    return bundle, moments
