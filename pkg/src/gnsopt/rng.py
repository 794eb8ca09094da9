"""Deterministic counter-based random streams.

All randomness in this package flows through Philox counter streams
addressed by ``(seed, stream, position)``.  A draw at a given address never
depends on how many draws were made before it, which keeps sampled
gradients reproducible and lets the rank simulator shard one global sample
stream without the result depending on the number of ranks.

A stream is a flat sequence of 64-bit words, one uniform per word.
Consumers reserve a fixed number of words per sample, so sample ``i``
always reads words ``[i * words, (i + 1) * words)`` of its stream.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

MASK64 = (1 << 64) - 1

# Streams reserved for draws not tied to an optimizer step.  Step-indexed
# streams count up from 0 and never reach these values in practice.
INIT_STREAM = MASK64
DATA_STREAM = MASK64 - 1

_WORDS_PER_BLOCK = 4  # Philox-4x64 emits four words per counter tick
_U53 = 2.0 ** -53

DISTRIBUTIONS = ("gaussian", "student_t")


def stream_key(seed: int, stream: int) -> int:
    """128-bit Philox key for one (seed, stream) pair."""
    return ((seed & MASK64) << 64) | (stream & MASK64)


def raw_words(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Words ``[start, start + count)`` of the (seed, stream) counter stream."""
    if start < 0 or count < 0:
        raise ValueError("start and count must be nonnegative")
    bit_gen = np.random.Philox(key=stream_key(seed, stream))
    blocks, offset = divmod(start, _WORDS_PER_BLOCK)
    if blocks:
        bit_gen.advance(blocks)  # advance() skips whole 4-word blocks
    words = bit_gen.random_raw(offset + count)
    return words[offset:] if offset else words


def uniforms(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Uniform draws on the open interval (0, 1), one per stream word."""
    z = raw_words(seed, stream, start, count)
    # (z >> 11) * 2^-53 lies in [0, 1); lift exact zeros so inverse-CDF
    # transforms stay finite.
    return np.maximum((z >> np.uint64(11)) * _U53, _U53)


def standardized(dist: str, u: np.ndarray, df: float = 5.0) -> np.ndarray:
    """Map uniforms to zero-mean, unit-variance variates via inverse CDF.

    ``gaussian`` uses the normal quantile function; ``student_t`` uses the
    Student-t quantile rescaled to unit variance (requires ``df > 2``).
    """
    if dist == "gaussian":
        return special.ndtri(u)
    if dist == "student_t":
        if df <= 2:
            raise ValueError("student_t requires df > 2 for finite variance")
        return special.stdtrit(df, u) * math.sqrt((df - 2.0) / df)
    raise ValueError(f"unknown noise distribution {dist!r}")


def sample_table(
    seed: int,
    stream: int,
    first_sample: int,
    count: int,
    words_per_sample: int,
    dist: str = "gaussian",
    df: float = 5.0,
) -> np.ndarray:
    """Standardized variates for a contiguous run of samples.

    Returns an array of shape ``(count, words_per_sample)`` whose row ``i``
    depends only on ``(seed, stream, first_sample + i)``.
    """
    u = uniforms(seed, stream, first_sample * words_per_sample, count * words_per_sample)
    return standardized(dist, u, df).reshape(count, words_per_sample)


def sample_indices(
    seed: int, stream: int, first_sample: int, count: int, population: int
) -> np.ndarray:
    """Draw i.i.d. indices into ``range(population)``, one word per sample."""
    if population <= 0:
        raise ValueError("population must be positive")
    u = uniforms(seed, stream, first_sample, count)
    return np.minimum((u * population).astype(np.int64), population - 1)
