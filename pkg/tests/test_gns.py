import numpy as np
import pytest

from gnsopt.geometry import GeometryKind, covariance_sqrt_nuclear
from gnsopt.gns import (EmaPair, coord_variance, ema_update, gns_value,
                        leaf_scalars, measure, oracle_measure, row_covariance)
from gnsopt.parallel import LeafMoments, RankLayout, gram_mean, simulate_step
from gnsopt.problems import MatrixQuadratic, NoisyQuadratic, TinyMlp

L1 = GeometryKind.SIGN_LINF
L2 = GeometryKind.EUCLIDEAN
NUC = GeometryKind.SPECTRAL_SINF


def _bundle_stats(locals_):
    """Rank-mean second moments computed directly from local gradients."""
    locals_ = [np.asarray(g, dtype=float) for g in locals_]
    global_grad = sum(locals_) / len(locals_)
    squares = sum(g * g for g in locals_) / len(locals_)
    return global_grad, squares


def test_coord_variance_two_rank_example():
    # locals [1] and [3] with B=2: Bessel variance of {1, 3} is 2
    g, sq = _bundle_stats([[1.0], [3.0]])
    np.testing.assert_allclose(coord_variance(RankLayout(2, 2), g, sq), [2.0])


def test_coord_variance_equal_locals_is_zero():
    g, sq = _bundle_stats([[2.5, -1.0]] * 4)
    np.testing.assert_allclose(coord_variance(RankLayout(4, 8), g, sq), 0.0,
                               atol=1e-15)


def test_coord_variance_four_rank_example():
    g, sq = _bundle_stats([[0.0], [0.0], [2.0], [2.0]])
    np.testing.assert_allclose(coord_variance(RankLayout(4, 4), g, sq), [4.0 / 3.0])


def test_coord_variance_needs_two_ranks():
    with pytest.raises(ValueError):
        coord_variance(RankLayout(1, 4), np.zeros(2), np.zeros(2))


def test_row_covariance_scalar_case_matches_coord_variance():
    locals_ = [np.array([[1.0]]), np.array([[3.0]])]
    layout = RankLayout(2, 2)
    g, sq = _bundle_stats(locals_)
    grams = gram_mean(locals_, "row")
    cov = row_covariance(layout, g, grams, "row")
    np.testing.assert_allclose(cov, [[2.0]])
    np.testing.assert_allclose(cov, coord_variance(layout, g, sq))


def test_row_covariance_diagonal_example():
    locals_ = [np.diag([1.0, 0.0]), np.diag([3.0, 0.0])]
    layout = RankLayout(2, 2)
    g = sum(locals_) / 2
    cov = row_covariance(layout, g, gram_mean(locals_, "row"), "row")
    np.testing.assert_allclose(cov, np.diag([2.0, 0.0]), atol=1e-14)


def test_row_covariance_equal_locals_is_zero():
    locals_ = [np.ones((3, 2))] * 4
    g = np.ones((3, 2))
    cov = row_covariance(RankLayout(4, 8), g, gram_mean(locals_, "col"), "col")
    np.testing.assert_allclose(cov, 0.0, atol=1e-14)


def test_gns_value_sign_hand_example():
    # sigma_hat = [3, 4], g = [2, -3]: (3+4)^2 / (2+3)^2 = 1.96
    layout = RankLayout(2, 2)
    g = np.array([2.0, -3.0])
    squares = g ** 2 + np.array([9.0, 16.0]) / 2.0  # inverts the B/(R-1) scale
    est = gns_value(layout, g, LeafMoments(squares), L1)
    np.testing.assert_allclose(est.sigma_hat, [3.0, 4.0])
    assert est.gns == pytest.approx(1.96, rel=1e-12)


def test_gns_value_zero_noise():
    layout = RankLayout(2, 8)
    g = np.array([1.0, -2.0])
    est = gns_value(layout, g, LeafMoments(g ** 2), L1)
    assert est.gns == 0.0


def test_gns_value_spectral_hand_example():
    # cov = diag(4, 9) has sqrt-nuclear 5; a gradient with nuclear norm 5
    # gives a noise scale of exactly 1
    layout = RankLayout(2, 2)
    g = np.diag([5.0, 0.0])
    grams = g @ g.T + np.diag([4.0, 9.0]) / 2.0
    est = gns_value(layout, g, LeafMoments(g ** 2, grams, "row"), NUC)
    np.testing.assert_allclose(est.cov, np.diag([4.0, 9.0]), atol=1e-12)
    assert est.gns == pytest.approx(1.0, rel=1e-12)


def test_gns_value_rejects_zero_gradient():
    layout = RankLayout(2, 2)
    with pytest.raises(ValueError):
        gns_value(layout, np.zeros(3), LeafMoments(np.ones(3)), L1)


def test_euclidean_scalars_use_variance_trace():
    layout = RankLayout(2, 2)
    g = np.array([3.0, 4.0])
    squares = g ** 2 + np.array([2.0, 6.0]) / 2.0
    noise, signal = leaf_scalars(layout, g, LeafMoments(squares), L2)
    assert noise == pytest.approx(8.0)
    assert signal == pytest.approx(25.0)


def test_ema_first_observation_initializes():
    pair = ema_update(EmaPair(0.9, 0.9), 5.0, 7.0)
    assert (pair.noise, pair.signal) == (5.0, 7.0)


def test_ema_zero_beta_passes_through():
    pair = ema_update(EmaPair(0.0, 0.0), 5.0, 7.0)
    pair = ema_update(pair, 2.0, 3.0)
    assert (pair.noise, pair.signal) == (2.0, 3.0)


def test_ema_decay_hand_value():
    pair = ema_update(EmaPair(0.9, 0.9), 10.0, 10.0)
    pair = ema_update(pair, 20.0, 10.0)
    assert pair.noise == pytest.approx(11.0)
    assert pair.signal == pytest.approx(10.0)


def test_ema_rejects_negative_inputs():
    with pytest.raises(ValueError):
        ema_update(EmaPair(0.9, 0.9), -1.0, 1.0)


def test_estimator_unbiased_on_known_noise():
    problem = NoisyQuadratic(np.ones(4), np.zeros(4),
                             np.array([0.25, 1.0, 2.25, 4.0]))
    x = problem.init_params(1)
    layout = RankLayout(4, 32)
    trials = 5000
    acc = np.zeros(4)
    for t in range(trials):
        bundle, moments = simulate_step(problem, x, layout, 13, t,
                                        want_stats=True)
        est = gns_value(layout, bundle.global_grad, moments, L1)
        acc += est.sigma_hat ** 2
    rel = np.abs(acc / trials - problem.noise_var) / problem.noise_var
    assert rel.max() < 0.05


def test_row_covariance_psd_across_draws():
    problem = MatrixQuadratic(np.zeros((4, 4)), 0.25 * np.eye(4))
    x = problem.init_params(2)
    layout = RankLayout(4, 16)
    worst = 0.0
    for t in range(300):
        bundle, moments = simulate_step(problem, x, layout, 17, t,
                                        want_stats=True)
        cov = row_covariance(layout, bundle.global_grad, moments.gram_mean,
                             moments.gram_side)
        worst = min(worst, float(np.linalg.eigvalsh(cov).min()))
    assert worst >= -1e-10


def test_scale_equivariance_exact_for_power_of_two():
    layout = RankLayout(4, 8)
    rng = np.random.default_rng(3)
    locals_ = [rng.standard_normal(6) for _ in range(4)]
    g, sq = _bundle_stats(locals_)
    base = gns_value(layout, g, LeafMoments(sq), L1)
    g2, sq2 = _bundle_stats([2.0 * l for l in locals_])
    scaled = gns_value(layout, g2, LeafMoments(sq2), L1)
    np.testing.assert_array_equal(scaled.sigma_hat, 2.0 * base.sigma_hat)
    assert scaled.gns == base.gns  # numerator and denominator scale by c^2


def test_scale_equivariance_general_factor():
    layout = RankLayout(4, 8)
    rng = np.random.default_rng(4)
    locals_ = [rng.standard_normal((3, 3)) for _ in range(4)]
    g = sum(locals_) / 4
    base = gns_value(layout, g, LeafMoments(g ** 2, gram_mean(locals_, "row"),
                                            "row"), NUC)
    c = 3.0
    g2 = sum(c * l for l in locals_) / 4
    scaled = gns_value(layout, g2,
                       LeafMoments(g2 ** 2,
                                   gram_mean([c * l for l in locals_], "row"),
                                   "row"), NUC)
    np.testing.assert_allclose(scaled.cov, c ** 2 * base.cov, rtol=1e-12)
    assert scaled.gns == pytest.approx(base.gns, rel=1e-12)


def test_row_and_column_sides_agree_in_expectation():
    # isotropic square noise makes the two aggregation sides exchangeable
    problem = MatrixQuadratic(np.zeros((5, 5)), 0.49 * np.eye(5))
    x = problem.init_params(5)
    layout = RankLayout(4, 16)
    rows, cols = [], []
    for t in range(500):
        bundle, _ = simulate_step(problem, x, layout, 19, t)
        g = bundle.global_grad
        row_cov = row_covariance(layout, g, gram_mean(bundle.local_grads, "row"),
                                 "row")
        col_cov = row_covariance(layout, g, gram_mean(bundle.local_grads, "col"),
                                 "col")
        rows.append(covariance_sqrt_nuclear(row_cov, tol=1e-8))
        cols.append(covariance_sqrt_nuclear(col_cov, tol=1e-8))
    assert abs(np.mean(rows) - np.mean(cols)) / np.mean(rows) < 0.05


def test_measure_aggregates_groups_and_honors_2d_flag():
    problem = TinyMlp(features=3, hidden=4, train_size=128, eval_size=32)
    params = problem.init_params(0)
    layout = RankLayout(4, 16)
    bundle, moments = simulate_step(problem, params, layout, 23, 0,
                                    want_stats=True)
    noise_all, signal_all = measure(bundle, moments, L1)
    by_leaf = {name: leaf_scalars(layout, bundle.global_grad[name],
                                  moments[name], L1)
               for name in ("w1", "b1", "w2")}
    assert noise_all == pytest.approx(sum(v[0] for v in by_leaf.values()))
    assert signal_all == pytest.approx(sum(v[1] for v in by_leaf.values()))
    noise_2d, signal_2d = measure(bundle, moments, L1, only_2d=True)
    assert noise_2d == pytest.approx(by_leaf["w1"][0])
    assert signal_2d == pytest.approx(by_leaf["w1"][1])


def test_measure_errors_when_no_group_qualifies():
    problem = NoisyQuadratic.standard(4)
    x = problem.init_params(0)
    layout = RankLayout(2, 8)
    bundle, moments = simulate_step(problem, x, layout, 29, 0, want_stats=True)
    with pytest.raises(ValueError):
        measure(bundle, moments, L1, only_2d=True)


def test_oracle_measure_matches_problem_truth():
    problem = NoisyQuadratic(np.ones(3), np.zeros(3), np.array([1.0, 4.0, 9.0]))
    x = np.array([1.0, -1.0, 2.0])
    noise, signal = oracle_measure(problem, x, L1)
    assert noise == pytest.approx((1.0 + 2.0 + 3.0) ** 2)
    assert signal == pytest.approx(4.0 ** 2)
    with pytest.raises(ValueError):
        oracle_measure(TinyMlp(features=2, hidden=2, train_size=8, eval_size=4),
                       None, L1)
