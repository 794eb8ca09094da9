"""Experiment driver: wires problems, optimizers, the rank simulator, noise
estimation, and the batch controller into reproducible runs.

A run consumes a fixed sample budget (not a step budget), so adaptive and
constant-batch runs see comparable data.  The base learning-rate schedule
is likewise defined over consumed samples.  Traces are written as CSV with
a fixed column order and shortest round-trip float formatting, so the same
config and seed always produce byte-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gns, problems
from .config import RunConfig
from .geometry import dual_norm
from .parallel import RankLayout, simulate_step
from .params import all_finite, leaf_items
from .scheduler import controller_step, initial_state, should_measure

TRACE_COLUMNS = ("step", "samples", "train_loss", "eval_loss", "batch_size",
                 "gns_ema", "lr", "lr_multiplier", "grad_dual_norm")
_INT_COLUMNS = {"step", "samples", "batch_size"}


class NumericalFailure(RuntimeError):
    """A run produced a non-finite quantity; carries the offending step."""

    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


def _format(column: str, value) -> str:
    if column in _INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


@dataclass
class RunTrace:
    """Per-step records of one run, in trace-column order."""

    rows: list = field(default_factory=list)

    def append(self, record: dict):
        self.rows.append(tuple(record[c] for c in TRACE_COLUMNS))

    def column(self, name: str) -> list:
        idx = TRACE_COLUMNS.index(name)
        return [row[idx] for row in self.rows]

    @property
    def final_eval_loss(self) -> float:
        return self.rows[-1][TRACE_COLUMNS.index("eval_loss")]

    @property
    def min_eval_loss(self) -> float:
        return min(self.column("eval_loss"))

    def to_csv_text(self) -> str:
        lines = [",".join(TRACE_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_format(c, v) for c, v in zip(TRACE_COLUMNS, row)))
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def from_csv(cls, path: str) -> "RunTrace":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"unexpected trace header in {path!r}")
            trace = cls()
            for line in fh:
                if not line.strip():
                    continue
                parts = line.strip().split(",")
                trace.rows.append(tuple(
                    int(p) if c in _INT_COLUMNS else float(p)
                    for c, p in zip(TRACE_COLUMNS, parts)))
            return trace


def schedule_multiplier(kind: str, progress: float, warmup_frac: float,
                        min_frac: float) -> float:
    """Base-lr multiplier at a given fraction of the sample budget."""
    if kind == "constant":
        return 1.0
    p = min(max(progress, 0.0), 1.0)
    if warmup_frac > 0.0 and p < warmup_frac:
        return p / warmup_frac
    span = 1.0 - warmup_frac
    t = (p - warmup_frac) / span if span > 0 else 1.0
    return min_frac + (1.0 - min_frac) * 0.5 * (1.0 + math.cos(math.pi * t))


def _signal_dual_norm(bundle, geometry, only_2d: bool) -> float:
    # trace column; falls back to all groups when the 2d filter empties it
    leaves = [g for _, g in leaf_items(bundle.global_grad)
              if not only_2d or np.asarray(g).ndim == 2]
    if not leaves:
        leaves = [g for _, g in leaf_items(bundle.global_grad)]
    return math.sqrt(sum(dual_norm(g, geometry) ** 2 for g in leaves))


def run_experiment(config: RunConfig, out_path: str | None = None,
                   quiet: bool = True) -> RunTrace:
    """Execute one run to its sample budget and return the trace.

    Loop per step: simulate the sharded batch, measure the noise scale on
    schedule, advance the controller, then apply the optimizer update with
    the pre-update learning-rate multiplier.  Non-finite losses, gradients,
    or parameters abort with :class:`NumericalFailure`.
    """
    problem = config.build_problem()
    x = config.init_params(problem)
    optimizer = config.build_optimizer()
    sched_cfg = config.schedule_config()
    state = initial_state(sched_cfg)
    geometry, oracle = config.resolved_geometry()

    trace = RunTrace()
    out_file = open(out_path, "w", encoding="utf-8", newline="\n") if out_path else None
    try:
        if out_file:
            out_file.write(",".join(TRACE_COLUMNS) + "\n")
        samples_used = 0
        step = 0
        next_eval = 0
        last_eval = math.nan
        while samples_used < config.sample_budget:
            batch = state.batch
            layout = RankLayout(config.ranks, batch)
            measure_now = config.adaptive and should_measure(step, sched_cfg)
            bundle, moments = simulate_step(
                problem, x, layout, config.seed, step,
                want_stats=measure_now and not oracle)

            if samples_used >= next_eval:
                last_eval = problem.eval_loss(x)
                while next_eval <= samples_used:
                    next_eval += config.eval_every

            train = problems.train_loss(problem, x, config.seed, step, batch)
            grad_dual = _signal_dual_norm(bundle, geometry, config.gns_2d_only)
            if not (math.isfinite(train) and math.isfinite(grad_dual)):
                raise NumericalFailure(step, "loss or gradient")

            measurement = None
            if measure_now:
                if oracle:
                    measurement = gns.oracle_measure(problem, x, geometry,
                                                     config.gns_2d_only)
                else:
                    measurement = gns.measure(bundle, moments, geometry,
                                              config.gns_2d_only)
            new_state = controller_step(state, sched_cfg, measurement,
                                        round_to=config.ranks)

            omega = state.lr_multiplier
            progress = (samples_used + batch) / config.sample_budget
            lr = config.lr * schedule_multiplier(
                config.lr_schedule, progress, config.warmup_frac,
                config.min_lr_frac) * omega
            x = optimizer.step(x, bundle.global_grad, lr)
            if not all_finite(x):
                raise NumericalFailure(step, "parameters")

            samples_used += batch
            record = {
                "step": step, "samples": samples_used, "train_loss": train,
                "eval_loss": last_eval, "batch_size": batch,
                "gns_ema": new_state.ema.ratio, "lr": lr,
                "lr_multiplier": omega, "grad_dual_norm": grad_dual,
            }
            trace.append(record)
            if out_file:
                out_file.write(",".join(
                    _format(c, record[c]) for c in TRACE_COLUMNS) + "\n")
            if not quiet and step % 100 == 0:
                print(f"step {step}: batch {batch}, train {train:.6g}, "
                      f"eval {last_eval:.6g}")
            state = new_state
            step += 1
    finally:
        if out_file:
            out_file.close()
    return trace


def steps_to_target(trace: RunTrace, target: float):
    """First step whose recorded held-out loss reaches ``target``, if any."""
    if not trace.rows:
        raise ValueError("empty trace")
    eval_idx = TRACE_COLUMNS.index("eval_loss")
    step_idx = TRACE_COLUMNS.index("step")
    for row in trace.rows:
        if row[eval_idx] <= target:
            return row[step_idx]
    return None


@dataclass
class ComparisonSummary:
    """Seed-paired comparison of candidate runs against baselines."""

    baseline_mean: float
    baseline_std: float
    candidate_mean: float
    candidate_std: float
    median_reduction_pct: float | None
    per_seed: list

    def reduction_label(self) -> str:
        if self.median_reduction_pct is None:
            return "-"
        return f"{self.median_reduction_pct:.2f}"

    def table_text(self) -> str:
        lines = [
            "final eval loss:",
            f"  baseline  {self.baseline_mean:.6g} +/- {self.baseline_std:.3g}",
            f"  candidate {self.candidate_mean:.6g} +/- {self.candidate_std:.3g}",
            f"steps reduction (median %): {self.reduction_label()}",
        ]
        return "\n".join(lines)

    def to_csv_text(self) -> str:
        lines = ["seed_index,target_loss,baseline_steps,candidate_steps,reduction_pct"]
        for i, (target, base, cand, red) in enumerate(self.per_seed):
            lines.append(",".join([
                str(i), repr(float(target)), str(base),
                "" if cand is None else str(cand),
                "" if red is None else repr(float(red)),
            ]))
        return "\n".join(lines) + "\n"


def compare_runs(baselines, candidates) -> ComparisonSummary:
    """Per-seed steps-to-baseline-minimum comparison.

    Seeds pair by position.  For each pair the target is the baseline's
    minimum held-out loss; the reduction is the percent fewer steps the
    candidate needs to reach it.  The median is reported only when every
    candidate reaches its target, matching the convention of printing a
    dash for methods that never match the baseline.
    """
    if not baselines or not candidates:
        raise ValueError("need at least one trace per side")
    if len(baselines) != len(candidates):
        raise ValueError("baseline and candidate seed counts must match")
    per_seed = []
    reductions = []
    for base, cand in zip(baselines, candidates):
        target = base.min_eval_loss
        base_steps = steps_to_target(base, target)
        cand_steps = steps_to_target(cand, target)
        if cand_steps is None or base_steps == 0:
            per_seed.append((target, base_steps, None, None))
            reductions.append(None)
        else:
            red = 100.0 * (1.0 - cand_steps / base_steps)
            per_seed.append((target, base_steps, cand_steps, red))
            reductions.append(red)
    median = None
    if all(r is not None for r in reductions):
        median = float(np.median(reductions))
    base_finals = [t.final_eval_loss for t in baselines]
    cand_finals = [t.final_eval_loss for t in candidates]
    ddof = 1 if len(base_finals) > 1 else 0
    return ComparisonSummary(
        baseline_mean=float(np.mean(base_finals)),
        baseline_std=float(np.std(base_finals, ddof=ddof)),
        candidate_mean=float(np.mean(cand_finals)),
        candidate_std=float(np.std(cand_finals, ddof=ddof)),
        median_reduction_pct=median,
        per_seed=per_seed,
    )
