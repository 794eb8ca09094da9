import os

import pytest

from gnsopt.cli import main

BASE_CONFIG = """
problem = noisy_quadratic
dim = 4
noise_scale = 1.0
optimizer = signsgd
lr = 0.05
adaptive = true
theta = 0.5
frequency = 5
warmup_steps = 5
initial_batch = 8
batch_cap = 64
ranks = 4
sample_budget = 400
eval_every = 8
seed = 3
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(BASE_CONFIG, encoding="utf-8")
    return str(path)


def test_run_writes_trace(config_path, tmp_path, capsys):
    out = str(tmp_path / "out")
    assert main(["run", "--config", config_path, "--out", out]) == 0
    trace_path = os.path.join(out, "trace.csv")
    assert os.path.exists(trace_path)
    text = open(trace_path, encoding="utf-8").read()
    assert text.startswith("step,samples,train_loss,eval_loss,batch_size,"
                           "gns_ema,lr,lr_multiplier,grad_dual_norm")
    assert "finished after" in capsys.readouterr().out


def test_seed_override_changes_output(config_path, tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    main(["run", "--config", config_path, "--out", out1, "--quiet"])
    main(["run", "--config", config_path, "--out", out2, "--quiet",
          "--seed", "17"])
    a = open(os.path.join(out1, "trace.csv"), "rb").read()
    b = open(os.path.join(out2, "trace.csv"), "rb").read()
    assert a != b


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 1\n", encoding="utf-8")
    assert main(["run", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "diverge.cfg"
    cfg.write_text(BASE_CONFIG.replace("optimizer = signsgd", "optimizer = sgd")
                   .replace("lr = 0.05", "lr = 1e9"), encoding="utf-8")
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert main(["run", "--config", str(cfg), "--quiet"]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_compare_command(config_path, tmp_path, capsys):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    main(["run", "--config", config_path, "--out", out1, "--quiet"])
    main(["run", "--config", config_path, "--out", out2, "--quiet"])
    t1 = os.path.join(out1, "trace.csv")
    t2 = os.path.join(out2, "trace.csv")
    assert main(["compare", "--baseline", t1, "--candidate", t2,
                 "--out", str(tmp_path / "cmp")]) == 0
    captured = capsys.readouterr().out
    assert "steps reduction (median %): 0.00" in captured
    assert os.path.exists(tmp_path / "cmp" / "comparison.csv")


def test_analyze_command(tmp_path, capsys):
    assert main(["analyze", "--geometry", "l1", "--grad-norm", "2.0",
                 "--noise-dual", "2.0", "--dim", "4",
                 "--out", str(tmp_path)]) == 0
    captured = capsys.readouterr().out
    assert "max-efficiency: 4" in captured
    assert os.path.exists(tmp_path / "improvement_l1.csv")
    header = open(tmp_path / "improvement_l1.csv", encoding="utf-8").readline()
    assert header.strip() == "B,delta_star,delta_per_sample,geometry"


def test_analyze_euclidean_marks_ill_defined(capsys):
    assert main(["analyze", "--geometry", "l2", "--grad-norm", "1.0",
                 "--noise-dual", "1.0"]) == 0
    captured = capsys.readouterr().out
    assert "inflection: ill-defined" in captured
    assert "max-efficiency: ill-defined" in captured


def test_check_command(capsys):
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert "ok" in out and "FAIL" not in out


def test_plot_command(config_path, tmp_path):
    pytest.importorskip("matplotlib")
    out = str(tmp_path / "run")
    main(["run", "--config", config_path, "--out", out, "--quiet"])
    trace = os.path.join(out, "trace.csv")
    assert main(["plot", "--trace", trace, "--out", str(tmp_path / "fig")]) == 0
    assert os.path.exists(tmp_path / "fig" / "trace.svg")
