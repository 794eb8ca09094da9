import pytest

from gnsopt.config import ConfigError, RunConfig, parse_config_text
from gnsopt.geometry import GeometryKind
from gnsopt.problems import Logistic, NoisyQuadratic


def test_parse_basic_file():
    text = """
    # a comment
    problem = noisy_quadratic
    dim = 4            # inline comment
    adaptive = true
    sample_budget = 1000

    lr = 0.05
    """
    values = parse_config_text(text)
    assert values == {"problem": "noisy_quadratic", "dim": 4, "adaptive": True,
                      "sample_budget": 1000, "lr": 0.05}


def test_unknown_key_is_fatal():
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config_text("batchsize = 3")


def test_duplicate_key_is_fatal():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("dim = 3\ndim = 4")


def test_malformed_line_is_fatal():
    with pytest.raises(ConfigError, match="key = value"):
        parse_config_text("just some words")


def test_bad_value_reports_line():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("dim = not_a_number")
    with pytest.raises(ConfigError, match="boolean"):
        parse_config_text("adaptive = maybe")
    with pytest.raises(ConfigError, match="one of"):
        parse_config_text("optimizer = lbfgs")


def test_run_config_defaults_and_validation():
    config = RunConfig({"sample_budget": 512})
    assert config.problem == "noisy_quadratic"
    assert config.eval_every == config.initial_batch
    with pytest.raises(ConfigError, match="sample_budget"):
        RunConfig({})
    with pytest.raises(ConfigError, match="multiple of ranks"):
        RunConfig({"sample_budget": 512, "initial_batch": 10, "ranks": 4})
    with pytest.raises(ConfigError, match="multiple of ranks"):
        RunConfig({"sample_budget": 512, "batch_cap": 100, "ranks": 8,
                   "initial_batch": 8})
    with pytest.raises(ConfigError, match="theta"):
        RunConfig({"sample_budget": 512, "theta": 1.5})


def test_adaptive_estimation_needs_two_ranks():
    with pytest.raises(ConfigError, match="2 ranks"):
        RunConfig({"sample_budget": 512, "adaptive": True, "ranks": 1,
                   "initial_batch": 8})
    RunConfig({"sample_budget": 512, "adaptive": True, "ranks": 1,
               "initial_batch": 8, "gns_geometry": "oracle"})  # oracle is fine


def test_geometry_resolution():
    base = {"sample_budget": 512}
    assert RunConfig({**base, "optimizer": "signsgd"}).resolved_geometry() == (
        GeometryKind.SIGN_LINF, False)
    assert RunConfig({**base, "optimizer": "adamw"}).resolved_geometry() == (
        GeometryKind.EUCLIDEAN, False)
    config = RunConfig({**base, "problem": "matrix_quadratic",
                        "optimizer": "muon"})
    assert config.resolved_geometry() == (GeometryKind.SPECTRAL_SINF, False)
    config = RunConfig({**base, "optimizer": "signsgd",
                        "gns_geometry": "oracle"})
    assert config.resolved_geometry() == (GeometryKind.SIGN_LINF, True)


def test_nuclear_geometry_requires_matrix_problem():
    with pytest.raises(ConfigError, match="matrix"):
        RunConfig({"sample_budget": 512, "adaptive": True,
                   "problem": "noisy_quadratic", "optimizer": "signsgd",
                   "gns_geometry": "nuclear"})


def test_oracle_geometry_requires_synthetic_problem():
    with pytest.raises(ConfigError, match="synthetic"):
        RunConfig({"sample_budget": 512, "adaptive": True,
                   "problem": "tiny_mlp", "gns_geometry": "oracle"})


def test_builders_produce_consistent_objects():
    config = RunConfig({"sample_budget": 512, "problem": "logistic",
                        "features": 4, "train_size": 64, "eval_size": 16,
                        "optimizer": "adamw", "beta1": 0.8})
    problem = config.build_problem()
    assert isinstance(problem, Logistic)
    assert problem.train_size == 64
    assert config.build_optimizer().beta1 == 0.8
    sched = config.schedule_config()
    assert sched.initial_batch == config.initial_batch


def test_from_file_with_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("sample_budget = 256\nseed = 3\n", encoding="utf-8")
    config = RunConfig.from_file(str(path), seed=9, out="trace.csv")
    assert config.seed == 9
    assert config.out == "trace.csv"
    with pytest.raises(ConfigError, match="cannot read"):
        RunConfig.from_file(str(tmp_path / "missing.cfg"))


def test_problem_defaults_round_trip():
    config = RunConfig({"sample_budget": 128, "dim": 3, "noise_scale": 0.5})
    problem = config.build_problem()
    assert isinstance(problem, NoisyQuadratic)
    assert problem.dim == 3
    assert problem.sigma[0] == 0.5
