"""Flat key=value run configuration.

Config files are UTF-8 text, one ``key = value`` per line, with ``#``
starting a comment.  Every key must appear in the registry below; unknown
keys are fatal so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import GeometryKind
from .optimizers import OPTIMIZER_NAMES, build_optimizer
from .problems import PROBLEM_KINDS, build_problem
from .scheduler import ScheduleConfig


class ConfigError(ValueError):
    """Raised for malformed files, unknown keys, or invalid values."""


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text
    return parse


@dataclass(frozen=True)
class _Key:
    parse: callable
    default: object
    help: str


GEOMETRY_CHOICES = ("l1", "l2", "nuclear", "oracle", "auto")

REGISTRY = {
    # problem selection and shape
    "problem": _Key(_choice(*PROBLEM_KINDS), "noisy_quadratic", "objective kind"),
    "dim": _Key(int, 16, "vector dimension (noisy_quadratic)"),
    "rows": _Key(int, 8, "matrix rows (matrix_quadratic)"),
    "cols": _Key(int, 8, "matrix cols (matrix_quadratic)"),
    "noise": _Key(_choice("gaussian", "student_t"), "gaussian",
                  "per-sample noise distribution (synthetic problems)"),
    "noise_df": _Key(float, 5.0, "degrees of freedom for student_t noise"),
    "noise_scale": _Key(float, 1.0, "per-coordinate noise std (synthetic)"),
    "curvature_min": _Key(float, 0.5, "smallest diagonal curvature"),
    "curvature_max": _Key(float, 2.0, "largest diagonal curvature"),
    "target_scale": _Key(float, 1.0, "target magnitude (matrix_quadratic)"),
    "init_scale": _Key(float, 1.0, "initial offset from the optimum (synthetic)"),
    "features": _Key(int, 8, "input features (logistic / tiny_mlp)"),
    "hidden": _Key(int, 16, "hidden units (tiny_mlp)"),
    "train_size": _Key(int, 2048, "training rows (logistic / tiny_mlp)"),
    "eval_size": _Key(int, 512, "held-out rows (logistic / tiny_mlp)"),
    "label_noise": _Key(float, 0.25, "target noise std (tiny_mlp)"),
    "separation": _Key(float, 2.0, "cluster separation (logistic)"),
    "data_seed": _Key(int, 0, "seed for dataset and target generation"),
    # optimizer
    "optimizer": _Key(_choice(*OPTIMIZER_NAMES), "signsgd", "update rule"),
    "lr": _Key(float, 0.01, "base learning rate"),
    "beta": _Key(float, 0.9, "momentum / averaging factor (msgd, signum, muon)"),
    "beta1": _Key(float, 0.9, "adamw first-moment decay"),
    "beta2": _Key(float, 0.999, "adamw second-moment decay"),
    "epsilon": _Key(float, 1e-8, "adamw denominator floor"),
    "weight_decay": _Key(float, 0.0, "decoupled weight decay"),
    "ns_iterations": _Key(int, 5, "Newton-Schulz iterations (muon)"),
    # adaptive batch controller
    "adaptive": _Key(_parse_bool, False, "enable the batch-size controller"),
    "theta": _Key(float, 0.6, "noise-to-signal tolerance"),
    "frequency": _Key(int, 100, "steps between noise measurements"),
    "warmup_steps": _Key(int, 0, "steps before the batch may grow"),
    "beta_n": _Key(float, 0.9, "noise EMA decay"),
    "beta_m": _Key(float, 0.9, "signal EMA decay"),
    "initial_batch": _Key(int, 64, "starting global batch"),
    "batch_cap": _Key(int, 4096, "upper bound on proposed batches"),
    "lr_scaling": _Key(_parse_bool, True, "scale lr by sqrt(batch growth)"),
    "sample_budget": _Key(int, 0, "total samples to consume (required)"),
    "gns_geometry": _Key(_choice(*GEOMETRY_CHOICES), "auto",
                         "noise-scale geometry; auto follows the optimizer"),
    "gns_2d_only": _Key(_parse_bool, False,
                        "restrict noise measurement to matrix groups"),
    # execution
    "ranks": _Key(int, 2, "simulated data-parallel ranks"),
    "seed": _Key(int, 0, "run seed"),
    "eval_every": _Key(int, 0, "samples between held-out evals (0: per batch)"),
    "lr_schedule": _Key(_choice("cosine", "constant"), "cosine",
                        "base learning-rate schedule over the sample budget"),
    "warmup_frac": _Key(float, 0.15, "linear lr warmup fraction of the budget"),
    "min_lr_frac": _Key(float, 0.0, "final lr as a fraction of the base lr"),
    "out": _Key(str, "", "trace CSV path"),
}


def parse_config_text(text: str) -> dict:
    """Parse config text into typed values; unknown or duplicate keys fail."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, raw = body.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = key.strip(), raw.strip()
        if key not in REGISTRY:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = REGISTRY[key].parse(raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return values


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None


_AUTO_GEOMETRY = {
    "signsgd": "l1", "signum": "l1",
    "specsgd": "nuclear", "muon": "nuclear", "composite": "nuclear",
}


class RunConfig:
    """Validated settings for one experiment run."""

    def __init__(self, values: dict):
        for key in values:
            if key not in REGISTRY:
                raise ConfigError(f"unknown config key {key!r}")
        resolved = {key: entry.default for key, entry in REGISTRY.items()}
        resolved.update(values)
        self.__dict__.update(resolved)
        if self.eval_every == 0:
            self.eval_every = self.initial_batch
        self._validate()

    @classmethod
    def from_file(cls, path: str, seed=None, out=None) -> "RunConfig":
        values = load_config_file(path)
        if seed is not None:
            values["seed"] = int(seed)
        if out is not None:
            values["out"] = out
        return cls(values)

    def _validate(self):
        if self.sample_budget <= 0:
            raise ConfigError("sample_budget must be a positive sample count")
        if self.ranks < 1:
            raise ConfigError("ranks must be at least 1")
        if self.initial_batch % self.ranks != 0:
            raise ConfigError("initial_batch must be a multiple of ranks")
        if self.batch_cap % self.ranks != 0:
            raise ConfigError("batch_cap must be a multiple of ranks")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ConfigError("warmup_frac must lie in [0, 1)")
        if not 0.0 <= self.min_lr_frac <= 1.0:
            raise ConfigError("min_lr_frac must lie in [0, 1]")
        try:
            self.schedule_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        kind, oracle = self.resolved_geometry()
        if self.adaptive:
            if oracle:
                if self.problem not in ("noisy_quadratic", "matrix_quadratic"):
                    raise ConfigError("oracle noise geometry needs a synthetic problem")
            elif self.ranks < 2:
                raise ConfigError("estimated noise scales need at least 2 ranks")
            if kind is GeometryKind.SPECTRAL_SINF and self.problem in (
                    "noisy_quadratic", "logistic"):
                raise ConfigError("nuclear geometry needs matrix parameters")
            if self.gns_2d_only and self.problem in ("noisy_quadratic",
                                                     "logistic"):
                raise ConfigError("gns_2d_only needs matrix parameter groups")

    def resolved_geometry(self):
        """(GeometryKind, is_oracle) with 'auto' following the optimizer."""
        name = self.gns_geometry
        if name == "oracle":
            auto = _AUTO_GEOMETRY.get(self.optimizer, "l2")
            return GeometryKind.from_name(auto), True
        if name == "auto":
            name = _AUTO_GEOMETRY.get(self.optimizer, "l2")
        return GeometryKind.from_name(name), False

    def build_problem(self):
        kind = self.problem
        if kind == "noisy_quadratic":
            return build_problem(kind, dim=self.dim,
                                 curvature_min=self.curvature_min,
                                 curvature_max=self.curvature_max,
                                 noise_scale=self.noise_scale,
                                 noise=self.noise, noise_df=self.noise_df)
        if kind == "matrix_quadratic":
            return build_problem(kind, rows=self.rows, cols=self.cols,
                                 noise_scale=self.noise_scale,
                                 target_scale=self.target_scale,
                                 noise=self.noise, noise_df=self.noise_df,
                                 data_seed=self.data_seed)
        if kind == "logistic":
            return build_problem(kind, features=self.features,
                                 train_size=self.train_size,
                                 eval_size=self.eval_size,
                                 separation=self.separation,
                                 data_seed=self.data_seed)
        return build_problem(kind, features=self.features, hidden=self.hidden,
                             train_size=self.train_size, eval_size=self.eval_size,
                             label_noise=self.label_noise, data_seed=self.data_seed)

    def init_params(self, problem):
        if self.problem in ("noisy_quadratic", "matrix_quadratic"):
            return problem.init_params(self.seed, scale=self.init_scale)
        return problem.init_params(self.seed)

    def build_optimizer(self):
        return build_optimizer(self.optimizer, beta=self.beta, beta1=self.beta1,
                               beta2=self.beta2, epsilon=self.epsilon,
                               weight_decay=self.weight_decay,
                               ns_iterations=self.ns_iterations)

    def schedule_config(self) -> ScheduleConfig:
        return ScheduleConfig(
            initial_batch=self.initial_batch,
            theta=self.theta,
            frequency=self.frequency,
            warmup_steps=self.warmup_steps,
            beta_noise=self.beta_n,
            beta_signal=self.beta_m,
            batch_cap=self.batch_cap,
            lr_scaling=self.lr_scaling,
        )
