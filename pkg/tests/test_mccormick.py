import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parampc.condense import condense_model
from parampc.mccormick import (build_lifted_sensitivities, build_method1_qp, envelope_interval,
                               mccormick_rows, solve_method1)
from parampc.model import ParametricMatrix, ParametricModel
from parampc.sim import ExactController
from parampc.tracking import tracking_weights


def _rows_residual(blk, theta, u, v):
    return blk.g_u @ u + blk.g_v @ v - blk.b - blk.e_theta * theta


def _forced_interval(theta, u, t_b, u_b):
    lo, hi = envelope_interval(theta, u, t_b, u_b)
    return lo, hi


@pytest.mark.parametrize("theta", [0.0, 1.0])
@pytest.mark.parametrize("u", [-5.0, -1.3, 0.0, 2.0, 5.0])
def test_exact_at_parameter_bounds(theta, u):
    lo, hi = _forced_interval(theta, u, (0.0, 1.0), (-5.0, 5.0))
    assert abs(lo - theta * u) <= 1e-9 and abs(hi - theta * u) <= 1e-9


def test_interior_interval_is_hull():
    lo, hi = envelope_interval(0.5, 2.0, (0.0, 1.0), (-5.0, 5.0))
    assert lo <= 1.0 <= hi
    # hull of theta*u over the box at (0.5, 2): lower max(-2.5, -0.5), upper min(4.5, 2.5)
    assert lo == pytest.approx(-0.5) and hi == pytest.approx(2.5)


def test_rows_match_interval():
    blk = mccormick_rows((0.0, 1.0), [(-5.0, 5.0)], 1)
    for v in np.linspace(-6, 6, 49):
        lo, hi = envelope_interval(0.3, 1.7, (0.0, 1.0), (-5.0, 5.0))
        ok = np.all(_rows_residual(blk, 0.3, np.array([1.7]), np.array([v])) <= 1e-12)
        assert ok == (lo - 1e-12 <= v <= hi + 1e-12)


def test_unbounded_rejected():
    with pytest.raises(ValueError):
        mccormick_rows((0.0, np.inf), [(-1.0, 1.0)], 2)
    with pytest.raises(ValueError):
        mccormick_rows((1.0, 0.0), [(-1.0, 1.0)], 2)


@given(theta=st.sampled_from([0.0, 1.0]), u=st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_rows_force_product_at_bounds(theta, u):
    blk = mccormick_rows((0.0, 1.0), [(-5.0, 5.0), (-5.0, 5.0)], 3)
    u = np.array(u)
    res = _rows_residual(blk, theta, u, theta * u)
    assert np.all(res <= 1e-9)
    for j in range(6):
        lo, hi = envelope_interval(theta, u[j], (0.0, 1.0), (-5.0, 5.0))
        assert hi - lo <= 1e-9


def test_hull_property_random_interior():
    rng = np.random.default_rng(0)
    blk = mccormick_rows((0.2, 1.5), [(-3.0, 4.0)], 1)
    th = rng.uniform(0.2, 1.5, 10_000)
    u = rng.uniform(-3.0, 4.0, 10_000)
    res = (blk.g_u[:, :1] * u + blk.g_v[:, :1] * (th * u) - blk.b[:, None]
           - blk.e_theta[:, None] * th)
    assert res.max() <= 1e-12


def test_lifted_sensitivities(msd):
    cs = condense_model(msd, 4, sensitivities=True)
    ((s_px, s_pu),) = build_lifted_sensitivities(cs, msd)
    delta = msd.a.deltas[0]
    assert np.allclose(s_px[:2], delta)
    assert not s_pu[:2, :1].any()
    eps = 1e-7
    up = condense_model(msd, 4, theta=[eps])
    assert np.allclose((up.s_u - cs.s_u) / eps, s_pu, atol=1e-5)
    with pytest.raises(ValueError):
        build_lifted_sensitivities(condense_model(msd, 4), msd)


def test_structure(msd, msd_weights):
    aqp = build_method1_qp(msd, 4, msd_weights)
    assert aqp.selector.shape == (4, 8) and np.array_equal(aqp.selector[:, :4], np.eye(4))
    cs = condense_model(msd, 4, sensitivities=True)
    assert np.allclose(aqp.gamma, np.hstack([cs.s_u, cs.delta_s_u[0]]))
    phi_track = aqp.phi.copy()
    phi_track[:, -4:] -= msd_weights.ref_lift
    assert np.allclose(aqp.f_map, 2 * aqp.gamma.T @ msd_weights.q_bar @ phi_track)


def test_reduction_at_theta_zero(msd, msd_weights):
    aqp = build_method1_qp(msd, 4, msd_weights)
    x0 = np.array([0.01, -0.1])
    ref = np.full(4, 0.003)
    f = aqp.f(aqp.xi(x0, 0.0, ref))
    cs = condense_model(msd, 4)
    nominal = 2 * cs.s_u.T @ msd_weights.q_bar @ (cs.s_x @ x0 - msd_weights.lift(ref))
    assert np.allclose(f[:4], nominal, atol=1e-12)


def test_matches_exact_at_theta_zero(msd, msd_weights):
    aqp = build_method1_qp(msd, 4, msd_weights)
    ctrl = ExactController(msd, 4, msd_weights)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x0 = rng.uniform(msd.state_box[:, 0], msd.state_box[:, 1])
        ref = np.full((4, 1), rng.uniform(-0.01, 0.01))
        u0, _, _ = solve_method1(aqp, x0, 0.0, ref)
        assert np.allclose(u0, ctrl(x0, 0.0, ref), atol=1e-6)


def test_origin_is_optimal(msd, msd_weights):
    aqp = build_method1_qp(msd, 4, msd_weights)
    for theta in (0.0, 0.4, 1.0):
        _, u, sol = solve_method1(aqp, np.zeros(2), theta, np.zeros((4, 1)))
        assert np.allclose(sol.z_opt, 0.0, atol=1e-12)


def test_saturates_for_large_displacement(msd, msd_weights):
    aqp = build_method1_qp(msd, 4, msd_weights)
    u0, _, _ = solve_method1(aqp, np.array([0.1, 0.0]), 0.5, np.zeros((4, 1)))
    assert u0[0] == pytest.approx(-5.0)
    exact = ExactController(msd, 4, msd_weights)(np.array([0.1, 0.0]), 0.5, np.zeros((4, 1)))
    assert exact[0] == pytest.approx(-5.0)


def test_zero_delta_consistency():
    pm = ParametricMatrix([[1.0, 0.1], [-0.2, 0.95]], (np.zeros((2, 2)),))
    model = ParametricModel(a=pm, b=[[0.0], [0.1]], c=[[1.0, 0.0]], d=[[0.0]], e=np.zeros((2, 0)),
                            ts=0.1, theta_box=[[0, 1]], state_box=[[-1, 1], [-1, 1]],
                            input_box=[[-1, 1]])
    w = tracking_weights(model, 3, 10.0, 0.1)
    aqp = build_method1_qp(model, 3, w)
    exact = ExactController(model, 3, w)
    for theta in (0.0, 0.5, 1.0):
        x0 = np.array([0.5, -0.2])
        ref = np.full((3, 1), 0.1)
        u0, u_seq, sol = solve_method1(aqp, x0, theta, ref)
        assert np.allclose(u0, exact(x0, theta, ref), atol=1e-6)


def test_hex_theta_half_close_to_exact(hex_model, hex_weights):
    aqp = build_method1_qp(hex_model, 4, hex_weights)
    ctrl = ExactController(hex_model, 4, hex_weights)
    x0 = np.array([60.0, 30.0])
    ref = np.full((4, 1), 42.0)
    u0, _, _ = solve_method1(aqp, x0, 0.5, ref)
    assert abs(u0[0] - ctrl(x0, 0.5, ref)[0]) < 1.0
