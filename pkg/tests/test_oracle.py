import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from coordsim import oracle
from coordsim.graph import Network, SizeError, build_topology, phi, enumerate_configurations
from coordsim.objective import QuadCost, a1_bounds, builtin_objective, custom_objective

LINE_REFERENCE = np.array([0.5, 0.5, 0.4085, 0.5, 0.4085])


def one_node():
    net = Network(1, ())
    return net, custom_objective(net, [QuadCost(2.0)], [])


def edge2():
    return Network(2, ((0, 1),))


def brute_marginals(net, theta):
    """Independent oracle: explicit loop over configurations."""
    w = np.array([math.exp(phi(net, c) @ theta) for c in enumerate_configurations(net)])
    p = w / w.sum()
    return sum(pi * phi(net, c) for pi, c in zip(p, enumerate_configurations(net)))


def test_log_partition_examples():
    assert oracle.log_partition(build_topology("line", 3), np.zeros(5)) == pytest.approx(math.log(8))
    assert oracle.log_partition(Network(1, ()), np.array([2.0])) == pytest.approx(math.log(1 + math.e ** 2))
    e = math.e
    assert oracle.log_partition(edge2(), np.ones(3)) == pytest.approx(math.log(1 + e + e + e ** 3))


def test_log_partition_is_overflow_safe():
    assert oracle.log_partition(edge2(), np.array([0, 0, 1000.0])) == pytest.approx(1000.0)


def test_stationary_distribution_examples():
    net = build_topology("line", 3)
    np.testing.assert_allclose(oracle.stationary_distribution(net, np.zeros(5)), 1 / 8)
    assert oracle.stationary_distribution(Network(1, ()), np.array([50.0]))[1] == pytest.approx(1.0)
    p = oracle.stationary_distribution(edge2(), np.array([0, 0, 50.0]))
    assert p[3] == pytest.approx(1 / (1 + 3 * math.exp(-50)))


def test_marginals_examples():
    net = build_topology("star", 5)
    s = oracle.marginals(net, np.zeros(net.size))
    np.testing.assert_allclose(s[:5], 0.5)
    np.testing.assert_allclose(s[5:], 0.25)
    s2 = oracle.marginals(edge2(), np.array([0, 0, 50.0]))
    np.testing.assert_allclose(s2, 1 / (1 + 3 * math.exp(-50)))


def test_self_gradient_examples():
    net = build_topology("line", 3)
    assert oracle.marginal_self_gradient(net, np.zeros(5))[0] == pytest.approx(0.25)
    assert oracle.marginal_self_gradient(Network(1, ()), np.array([40.0]))[0] < 1e-15


def test_cap_is_enforced():
    with pytest.raises(SizeError):
        oracle.marginals(Network(21, ()), np.zeros(21))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_marginals_match_brute_force(theta):
    net = build_topology("line", 3)
    theta = np.array(theta)
    s = oracle.marginals(net, theta)
    np.testing.assert_allclose(s, brute_marginals(net, theta), rtol=1e-10)
    assert np.all((s > 0) & (s < 1))
    assert oracle.stationary_distribution(net, theta).sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_self_gradient_identity(theta):
    net = build_topology("line", 3)
    theta = np.array(theta)
    h = 1e-5
    for k in range(5):
        e = np.zeros(5)
        e[k] = h
        fd = (oracle.marginals(net, theta + e)[k] - oracle.marginals(net, theta - e)[k]) / (2 * h)
        assert oracle.marginal_self_gradient(net, theta)[k] == pytest.approx(fd, rel=1e-6)


def test_dual_value_one_node():
    net, spec = one_node()
    assert oracle.dual_value(net, spec, 1.0, np.array([0.0])) == pytest.approx(math.log(2))


def test_dual_gradient_one_node():
    net, spec = one_node()
    g = oracle.dual_gradient(net, spec, 1.0, np.array([-2.0]))
    assert g[0] == pytest.approx(expit(-2) - 0.5, abs=1e-12)
    assert g[0] == pytest.approx(-0.3808, abs=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.5, 1.0, 5.0]))
def test_dual_gradient_and_hessian_by_finite_differences(seed, beta):
    net = build_topology("line", 3)
    spec = builtin_objective("line-example", net)
    b = a1_bounds(spec, beta)
    theta = np.random.default_rng(seed).uniform(b.theta_min / 2, b.theta_max / 2, 5)
    h = 1e-5
    fd = np.empty(5)
    hess = np.empty((5, 5))
    for k in range(5):
        e = np.zeros(5)
        e[k] = h
        fd[k] = (oracle.dual_value(net, spec, beta, theta + e) - oracle.dual_value(net, spec, beta, theta - e)) / (2 * h)
        hess[:, k] = (oracle.dual_gradient(net, spec, beta, theta + e)
                      - oracle.dual_gradient(net, spec, beta, theta - e)) / (2 * h)
    g = oracle.dual_gradient(net, spec, beta, theta)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(oracle.dual_hessian(net, spec, beta, theta), hess, rtol=1e-4, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_dual_is_convex_on_segments(seed):
    net = build_topology("star", 4)
    spec = builtin_objective("C1", net)
    b = a1_bounds(spec, 2.0)
    r = np.random.default_rng(seed)
    t1, t2 = (r.uniform(b.theta_min, b.theta_max, net.size) for _ in range(2))
    mid = oracle.dual_value(net, spec, 2.0, (t1 + t2) / 2)
    assert mid <= (oracle.dual_value(net, spec, 2.0, t1) + oracle.dual_value(net, spec, 2.0, t2)) / 2 + 1e-9


def test_gain_examples():
    star = build_topology("star", 5)
    spec = builtin_objective("C1", star)
    assert oracle.gain(star, spec, np.full(9, 0.447)) == pytest.approx(-5.218, abs=2e-3)
    lam = np.full(9, 0.447)
    lam[6] = 0.0
    assert oracle.gain(star, spec, lam) == -math.inf
    with pytest.raises(oracle.EvaluationError):
        oracle.gain(star, spec, np.full(9, 1.5))
    line = build_topology("line", 3)
    assert oracle.gain(line, builtin_objective("line-example", line), LINE_REFERENCE) == pytest.approx(-2.589, abs=1e-3)


def test_line_example_optimum(line3):
    net, spec = line3
    sol = oracle.solve_a_cg_opt(net, spec, 100.0)
    np.testing.assert_allclose(sol.lambda_star, LINE_REFERENCE, atol=0.01)
    assert sol.residual <= 1e-8


def test_star_optimum(star5):
    net, spec = star5
    sol = oracle.solve_a_cg_opt(net, spec, 100.0)
    assert sol.lambda_star[0] == pytest.approx(0.447, abs=0.005)
    assert sol.gain == pytest.approx(-5.218, abs=0.02)


def test_complete_optimum(comp4):
    net, spec = comp4
    sol = oracle.solve_a_cg_opt(net, spec, 100.0)
    np.testing.assert_allclose(sol.lambda_star[:4], 0.6125, atol=0.005)
    assert sol.gain == pytest.approx(-5.942, abs=0.02)


@pytest.mark.parametrize("beta", [0.5, 1.0, 5.0, 50.0])
def test_fixed_point_properties(star5, beta):
    net, spec = star5
    sol = oracle.solve_a_cg_opt(net, spec, beta)
    s = oracle.marginals(net, sol.theta_star)
    np.testing.assert_allclose(sol.theta_star, spec.target(beta, s), atol=1e-7)
    assert np.max(np.abs(oracle.dual_gradient(net, spec, beta, sol.theta_star))) < 1e-8
    primal = oracle.primal_value(net, spec, beta, sol.theta_star)
    assert abs(primal - sol.dual_value) < 1e-5
    # A1 consistency
    lo, hi = sol.lambda_star.min(), sol.lambda_star.max()
    eps = min(lo, 1 - hi) * 0.999
    if 0 < eps < 0.5:
        b = a1_bounds(spec, beta, eps)
        assert np.all(sol.theta_star >= b.theta_min - 1e-9) and np.all(sol.theta_star <= b.theta_max + 1e-9)


def test_cg_schedule_is_monotone_and_within_bound(line3):
    net, spec = line3
    sols = oracle.solve_cg_opt(net, spec, (1, 10, 100, 1000))
    gains = [s.gain for s in sols]
    assert all(b >= a - 1e-9 for a, b in zip(gains, gains[1:]))
    best = -2.5890
    # analytic optimum: first two nodes and first edge at 1/2, the rest at 1/sqrt(6)
    lam = np.array([0.5, 0.5, 1 / math.sqrt(6), 0.5, 1 / math.sqrt(6)])
    analytic = oracle.gain(net, spec, lam)
    assert analytic == pytest.approx(best, abs=1e-3)
    assert sols[-1].gain >= analytic - 3 * math.log(2) / 1000 - 1e-8
    assert sols[-1].gap_bound == pytest.approx(3 * math.log(2) / 1000)


def test_schedule_validation(line3):
    net, spec = line3
    with pytest.raises(ValueError):
        oracle.solve_cg_opt(net, spec, (10, 1))


def test_nonconvergence_carries_best_iterate(star5):
    net, spec = star5
    with pytest.raises(oracle.NonConvergenceError) as info:
        oracle.solve_a_cg_opt(net, spec, 5.0, tol=1e-300, max_iter=3)
    assert info.value.best is not None


def test_dual_descent_reaches_fixed_point(line3):
    net, spec = line3
    sol = oracle.solve_a_cg_opt(net, spec, 1.0)
    theta = oracle.dual_descent(net, spec, 1.0, np.zeros(5), 1.0, 3000)
    np.testing.assert_allclose(theta, sol.theta_star, atol=1e-5)


def test_json_round_trip(line3):
    net, spec = line3
    js = oracle.solve_a_cg_opt(net, spec, 10.0).to_json()
    assert set(js) >= {"beta", "theta", "lambda", "gain", "dual_value", "residual", "iterations"}
    assert list(js["lambda"]) == list(net.labels)


@pytest.mark.slow
def test_continuation_recovers_from_stalled_warm_start():
    # the rescaled β=5 start stalls at β=100 under the barrier cost C2
    from coordsim import harness

    sc = harness.load_scenario("RAND-C2")
    net = sc.network()
    sols = oracle.solve_cg_opt(net, sc.objective_spec(net), [1, 5, 100])
    assert all(s.residual <= 1e-8 for s in sols)
    assert sols[-1].gain >= sols[0].gain
