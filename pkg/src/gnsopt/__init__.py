"""Adaptive batch sizing from geometry-matched gradient noise scales.

The package implements stochastic steepest descent under Euclidean, sign,
and spectral geometries, estimates the matching gradient noise scale from
simulated data-parallel ranks, and grows the batch size so the noise stays
a fixed fraction of the signal.
"""

from .analysis import (CbsResult, ImprovementParams, cbs_fraction,
                       cbs_inflection, cbs_max_efficiency,
                       expected_improvement, lemma_error_ratio,
                       linear_rate_factor, optimal_lr, oracle_rate_experiment,
                       sublinear_gradient_bound, theta_to_kappa)
from .config import ConfigError, RunConfig, parse_config_text
from .geometry import (Direction, GeometryKind, covariance_sqrt_nuclear,
                       dual_norm, matsign_exact, matsign_newton_schulz,
                       normalized_direction, sign_direction,
                       steepest_direction)
from .gns import (EmaPair, NoiseEstimate, coord_variance, ema_update,
                  gns_value, measure, oracle_measure, row_covariance)
from .harness import (ComparisonSummary, NumericalFailure, RunTrace,
                      compare_runs, run_experiment, steps_to_target)
from .optimizers import (AdamW, Composite, Muon, Sgd, SignSgd, Signum,
                         SpecSgd, build_optimizer)
from .parallel import (GradientBundle, RankLayout, all_reduce_mean,
                       partition_batch, simulate_step)
from .problems import (Logistic, MatrixQuadratic, NoisyQuadratic, TinyMlp,
                       build_problem, finite_difference_check,
                       per_sample_gradient, true_noise_stats)
from .scheduler import (ScheduleConfig, ScheduleState, controller_step,
                        initial_state, lr_multiplier_update, propose_batch,
                        should_measure)

__version__ = "0.1.0"
