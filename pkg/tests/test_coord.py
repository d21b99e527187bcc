import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coordsim import cdm, coord, oracle
from coordsim.graph import Network, build_topology
from coordsim.objective import ClampBounds, QuadCost, LogUtility, a1_bounds, builtin_objective, custom_objective

WIDE = ClampBounds(-1e3, 1e3, 1e-4)


def node_edge():
    net = Network(2, ((0, 1),))
    return net, custom_objective(net, [QuadCost(2.0), QuadCost(2.0)], [LogUtility()])


def state(net, alg, theta, beta, frame=0, s_bar=None, alpha=0.5, bounds=WIDE):
    return coord.CoordState(theta=np.asarray(theta, float), s_bar=net.zeros() if s_bar is None else np.asarray(s_bar, float),
                            frame=frame, cdm=cdm.CdmState.initial(net, 0), algorithm=alg, beta=beta,
                            bounds=bounds, alpha=alpha)


def test_update_cumulative_examples():
    assert coord.update_cumulative(np.array([0.5]), np.array([0.5]), 7)[0] == 0.5
    assert coord.update_cumulative(np.array([0.9]), np.array([0.3]), 0)[0] == 0.3
    sb = np.zeros(1)
    for t, x in enumerate([0.2, 0.4, 0.6]):
        sb = coord.update_cumulative(sb, np.array([x]), t)
    assert sb[0] == pytest.approx(0.4)
    with pytest.raises(ValueError):
        coord.update_cumulative(sb, sb, -1)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_update_cumulative_is_the_mean(xs):
    sb = np.zeros(1)
    for t, x in enumerate(xs):
        sb = coord.update_cumulative(sb, np.array([x]), t)
    assert sb[0] == pytest.approx(np.mean(xs), abs=1e-12)


def test_dual_examples():
    net, spec = node_edge()
    st0 = state(net, "dual", [0.0, 0.0, 2.0], 1.0, frame=0)
    assert np.array_equal(coord.step_dual(st0, np.array([0.5, 0.5, 0.5]), spec).theta, st0.theta)
    # a[t] = 0.1 at t = 30 with step_scale 3
    st30 = state(net, "dual", [0.0, 0.0, 2.0], 1.0, frame=30)
    new = coord.step_dual(st30, np.array([0.5, 0.5, 0.5]), spec)
    assert new.theta[0] == pytest.approx(-0.05)
    assert new.theta[2] == pytest.approx(2.0)
    assert new.frame == 31


def test_steep_examples():
    net, spec = node_edge()
    sb = np.array([0.3, 0.3, 0.3])
    one = coord.step_steep(state(net, "steep", [1.0, 1.0, 1.0], 5.0, frame=0, alpha=1.0), sb, spec)
    np.testing.assert_allclose(one.theta, spec.target(5.0, sb))
    still = coord.step_steep(state(net, "steep", [-8.94, -8.94, 10.0], 5.0, frame=0),
                             np.array([0.447, 0.447, 0.5]), spec)
    np.testing.assert_allclose(still.theta, [-8.94, -8.94, 10.0], atol=1e-12)


def test_ind_examples():
    net, spec = node_edge()
    new = coord.step_ind(state(net, "ind", [0.0, 0.0, 10.0], 5.0, frame=0), np.array([0.5, 0.5, 0.5]), spec)
    assert new.theta[0] == pytest.approx(-0.25)
    assert new.theta[2] == pytest.approx(10.0)
    # vanishing gradient at the rate floor
    tiny = coord.step_ind(state(net, "ind", [0.0, 0.0, 0.0], 5.0, frame=0), np.zeros(3), spec)
    full = 0.5 / 5 * (spec.target(5.0, np.full(3, 1e-4)))
    np.testing.assert_allclose(tiny.theta, full * 1e-4 * (1 - 1e-4), rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(coord.ALGORITHMS), st.lists(st.floats(0, 1), min_size=3, max_size=3),
       st.lists(st.floats(-30, 30), min_size=3, max_size=3), st.integers(0, 50))
def test_updates_stay_inside_bounds(alg, s_hat, theta, frame):
    net, spec = node_edge()
    b = ClampBounds(-10.0, 10.0, 1e-4)
    st_ = state(net, alg, np.clip(theta, -10, 10), 2.0, frame=frame, s_bar=np.full(3, 0.5), bounds=b)
    new = coord.STEPS[alg](st_, np.array(s_hat), spec)
    assert np.all(new.theta >= -10) and np.all(new.theta <= 10)
    assert np.all((new.s_bar >= 0) & (new.s_bar <= 1))


@given(st.lists(st.floats(0.01, 0.99), min_size=3, max_size=3))
def test_steep_and_ind_share_the_zero_drift_point(rates):
    net, spec = node_edge()
    r = np.array(rates)
    theta = spec.target(3.0, r)
    for alg in ("steep", "ind"):
        st_ = state(net, alg, theta, 3.0, frame=1, s_bar=r)
        new = coord.STEPS[alg](st_, r, spec)
        np.testing.assert_allclose(new.theta, theta, rtol=1e-12, atol=1e-12)


def test_wrong_algorithm_state_is_rejected():
    net, spec = node_edge()
    with pytest.raises(ValueError):
        coord.step_dual(state(net, "steep", np.zeros(3), 1.0), np.zeros(3), spec)
    with pytest.raises(ValueError):
        state(net, "newton", np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        state(net, "steep", np.zeros(3), 1.0, alpha=0.0)


def test_step_size_is_admissible():
    net, _ = node_edge()
    a = [coord.step_size(state(net, "dual", np.zeros(3), 1.0, frame=t)) for t in range(1, 200_001)]
    a = np.array(a)
    # harmonic partial sums grow without bound while the squares converge to c^2 pi^2/6
    assert a[:100].sum() < a.sum() - 3 * np.log(1000) * 0.9
    assert (a ** 2).sum() == pytest.approx(9 * np.pi ** 2 / 6, rel=1e-4)
    assert coord.step_size(state(net, "dual", np.zeros(3), 1.0, frame=0)) == 0.0


def test_single_frame_run(star5):
    net, spec = star5
    tr = coord.run(net, spec, "steep", 5.0, 1, seed=1)
    assert len(tr) == 1
    b = a1_bounds(spec, 5.0)
    assert np.all(tr.theta_final >= b.theta_min) and np.all(tr.theta_final <= b.theta_max)
    with pytest.raises(ValueError):
        coord.run(net, spec, "steep", 5.0, 0)


@pytest.mark.parametrize("alg", coord.ALGORITHMS)
def test_locality_audit_passes(alg, line3):
    net, spec = line3
    coord.run(net, spec, alg, 2.0, 40, seed=2, audit=True)


def test_locality_audit_blocks_remote_reads(star5):
    net, _ = star5
    view = coord.LocalView(net, 1, net.zeros(), net.zeros(), net.zeros())
    view.theta(1)
    view.theta(net.n_nodes + net.edge_index[(0, 1)])
    with pytest.raises(PermissionError):
        view.theta(2)
    with pytest.raises(PermissionError):
        view.s_hat(net.n_nodes + net.edge_index[(0, 2)])


def test_trace_shape_and_reproducibility(line3):
    net, spec = line3
    a = coord.run(net, spec, "ind", 2.0, 50, seed=7)
    b = coord.run(net, spec, "ind", 2.0, 50, seed=7)
    assert len(a) == 50 and np.all(np.diff(a.t) == 1)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.s_hat, b.s_hat)
    np.testing.assert_array_equal(a.theta[0], 0.0)
    thin = coord.run(net, spec, "ind", 2.0, 50, seed=7, record_every=10)
    assert len(thin) == 5
    np.testing.assert_array_equal(thin.theta_final, a.theta_final)


def test_alternative_sequence_identity(line3):
    net, spec = line3
    tr = coord.run(net, spec, "steep", 2.0, 100, seed=3)
    assert not tr.clamped.any()
    assert coord.alternative_sequence_check(tr, 0.5, spec, 2.0) < 1e-8


def test_alternative_sequence_alpha_one(line3):
    net, spec = line3
    start = oracle.solve_a_cg_opt(net, spec, 2.0).theta_star
    tr = coord.run(net, spec, "steep", 2.0, 30, T=50.0, seed=3, alpha=1.0, theta0=start)
    rho = tr.theta[1:] / 1.0 + 0.0 * tr.theta[:-1]
    np.testing.assert_array_equal(rho, tr.theta[1:])
    assert coord.alternative_sequence_check(tr, 1.0, spec, 2.0) < 1e-8


def test_alternative_sequence_skips_clamped_runs(line3):
    net, spec = line3
    tr = coord.run(net, spec, "steep", 2.0, 30, seed=3, bounds=ClampBounds(-0.5, 0.5, 1e-4))
    assert tr.clamped.any()
    with pytest.raises(coord.ClampingDetected):
        coord.alternative_sequence_check(tr, 0.5, spec, 2.0)


@pytest.mark.slow
@pytest.mark.parametrize("alg", coord.ALGORITHMS)
def test_short_run_heads_to_the_oracle(alg, line3):
    net, spec = line3
    lam = oracle.solve_a_cg_opt(net, spec, 2.0).lambda_star
    tr = coord.run(net, spec, alg, 2.0, 5000, seed=1)
    assert np.max(np.abs(tr.final_sbar - lam)) < 0.05
