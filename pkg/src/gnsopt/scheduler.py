"""Adaptive batch-size controller.

Measurements arrive every ``frequency`` steps and update the noise/signal
moving averages; past the warmup, the batch is proposed as
``ceil(noise / (theta^2 * signal))``, floored at the current batch so the
schedule only grows, capped, and rounded up to a rank multiple.  When
learning-rate scaling is on, the multiplier tracks ``sqrt(B_k / B_0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .gns import EmaPair, ema_update


@dataclass(frozen=True)
class ScheduleConfig:
    initial_batch: int
    theta: float = 0.6
    frequency: int = 100
    warmup_steps: int = 0
    beta_noise: float = 0.9
    beta_signal: float = 0.9
    batch_cap: int = 4096
    lr_scaling: bool = True

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie strictly between 0 and 1")
        if self.frequency < 1:
            raise ValueError("measurement frequency must be at least 1")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be nonnegative")
        if self.initial_batch < 1:
            raise ValueError("initial batch must be positive")
        if self.batch_cap < self.initial_batch:
            raise ValueError("batch cap must be at least the initial batch")


@dataclass(frozen=True)
class ScheduleState:
    ema: EmaPair
    batch: int
    lr_multiplier: float
    step: int


def initial_state(config: ScheduleConfig) -> ScheduleState:
    ema = EmaPair(config.beta_noise, config.beta_signal)
    return ScheduleState(ema, config.initial_batch, 1.0, 0)


def should_measure(step: int, config: ScheduleConfig) -> bool:
    return step % config.frequency == 0


def _snap(value: float) -> float:
    # Guard ceil() against float dust at integer boundaries, e.g.
    # 9 / 0.36 evaluating to 25.000000000000004.
    nearest = round(value)
    if abs(value - nearest) <= 1e-9 * max(1.0, abs(value)):
        return float(nearest)
    return value


def propose_batch(noise: float, signal: float, theta: float,
                  current_batch: int) -> int:
    """Monotone batch proposal ``max(ceil(N / (theta^2 M)), B)``."""
    if signal <= 0.0:
        raise ValueError("batch proposal needs a positive signal scalar")
    target = _snap(noise / (theta * theta * signal))
    return max(math.ceil(target), current_batch)


def lr_multiplier_update(multiplier: float, new_batch: int, old_batch: int) -> float:
    """Square-root learning-rate scaling for a monotone batch increase."""
    if old_batch < 1 or new_batch < old_batch:
        raise ValueError("batch must not decrease")
    return multiplier * math.sqrt(new_batch / old_batch)


def _round_up(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


def controller_step(state: ScheduleState, config: ScheduleConfig,
                    measurement=None, round_to: int = 1) -> ScheduleState:
    """Advance the controller by one step.

    ``measurement`` is an optional (noise, signal) pair; it only takes
    effect on measurement steps.  During warmup the averages update but
    the batch and multiplier hold still.  Pure: returns a new state.
    """
    new = replace(state, step=state.step + 1)
    if measurement is None or not should_measure(state.step, config):
        return new
    noise, signal = measurement
    ema = ema_update(state.ema, noise, signal)
    new = replace(new, ema=ema)
    if state.step < config.warmup_steps:
        return new
    proposed = propose_batch(ema.noise, ema.signal, config.theta, state.batch)
    capped = min(proposed, max(config.batch_cap, state.batch))
    batch = max(_round_up(capped, round_to), state.batch)
    multiplier = state.lr_multiplier
    if config.lr_scaling:
        multiplier = lr_multiplier_update(multiplier, batch, state.batch)
    return replace(new, batch=batch, lr_multiplier=multiplier)
