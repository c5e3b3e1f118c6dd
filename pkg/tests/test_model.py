import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expected_values import (HEX_A0_11, HEX_ALPHA, HEX_B_C, HEX_E_C, MSD_A0, MSD_A1_21, MSD_B,
                             MSD_DELTA_21)
from parampc.model import (HexParams, MsdParams, ParametricMatrix, ParametricModel, build_hex,
                           build_msd, decompose_from_endpoints, discretize_euler, eval_a)

finite = st.floats(-10, 10, allow_nan=False)


def test_eval_at_zero_returns_base(msd):
    assert np.array_equal(eval_a(msd, 0.0), msd.a.base)


def test_eval_affine_formula():
    pm = ParametricMatrix(np.eye(2), (np.array([[0.0, 1.0], [0.0, 0.0]]),))
    assert np.array_equal(pm(0.5), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_eval_wrong_theta_length(msd):
    with pytest.raises(ValueError):
        eval_a(msd, [0.1, 0.2])


def test_eval_extrapolates_outside_box(msd):
    assert np.allclose(eval_a(msd, 2.0), msd.a.base + 2.0 * msd.a.deltas[0])


def test_msd_constants(msd):
    assert np.allclose(eval_a(msd, 0.0), MSD_A0, atol=1e-15)
    assert eval_a(msd, 1.0)[1, 0] == pytest.approx(MSD_A1_21, abs=1e-12)
    assert np.allclose(msd.b.ravel(), MSD_B, atol=1e-15)
    assert np.allclose(msd.c, [[1.0, 0.0]])


def test_msd_delta_single_entry(msd):
    delta = msd.a.deltas[0]
    assert np.count_nonzero(delta) == 1
    assert delta[1, 0] == pytest.approx(MSD_DELTA_21)


def test_hex_constants(hex_model):
    p = HexParams()
    assert p.alpha(0.0) == pytest.approx(HEX_ALPHA[0])
    assert p.alpha(1.0) == pytest.approx(HEX_ALPHA[1])
    assert eval_a(hex_model, 0.0)[0, 0] == pytest.approx(HEX_A0_11, abs=1e-14)
    assert np.allclose(hex_model.b.ravel() / p.ts, HEX_B_C)
    assert np.allclose(hex_model.e.ravel() / p.ts, HEX_E_C)
    assert np.allclose(hex_model.c, [[0.0, 1.0]])
    assert hex_model.disturbance.tolist() == [25.0]


def test_decompose_degenerate_and_scalar():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    pm = decompose_from_endpoints(m, m)
    assert np.array_equal(pm.deltas[0], np.zeros((2, 2)))
    pm = decompose_from_endpoints([[2.0]], [[5.0]])
    assert pm.base[0, 0] == 2.0 and pm.deltas[0][0, 0] == 3.0
    assert pm(1.0 / 3.0)[0, 0] == pytest.approx(3.0)


def test_decompose_shape_mismatch():
    with pytest.raises(ValueError):
        decompose_from_endpoints(np.eye(2), np.eye(3))


def test_discretize_scalar_and_limit():
    a, b, _ = discretize_euler(ParametricMatrix([[-1.0]], ([[0.0]],)), [[1.0]], [], 0.1)
    assert a.base[0, 0] == pytest.approx(0.9)
    a, b, _ = discretize_euler(ParametricMatrix([[-1.0]], ([[0.0]],)), [[1.0]], [], 1e-12)
    assert a.base[0, 0] == pytest.approx(1.0) and abs(b[0, 0]) < 1e-11
    with pytest.raises(ValueError):
        discretize_euler(ParametricMatrix([[-1.0]], ([[0.0]],)), [[1.0]], [], 0.0)


def test_model_invariants_rejected():
    pm = ParametricMatrix(np.eye(2), (np.zeros((2, 2)),))
    good = dict(a=pm, b=np.ones((2, 1)), c=np.ones((1, 2)), d=np.zeros((1, 1)),
                e=np.zeros((2, 0)), ts=0.1, theta_box=[[0, 1]], state_box=[[-1, 1]] * 2,
                input_box=[[-1, 1]])
    ParametricModel(**good)
    for key, bad in [("b", np.ones((3, 1))), ("c", np.ones((1, 3))), ("ts", 0.0),
                     ("input_box", [[1, -1]]), ("state_box", [[-1, 1]])]:
        with pytest.raises(ValueError):
            ParametricModel(**dict(good, **{key: bad}))
    with pytest.raises(ValueError):
        ParametricMatrix(np.eye(2), (np.zeros((3, 3)),))
    with pytest.raises(ValueError):
        ParametricMatrix(np.eye(2), ())


def test_param_invariants_rejected():
    with pytest.raises(ValueError):
        HexParams(area_min=5.0, area_max=2.0)
    with pytest.raises(ValueError):
        MsdParams(k_min=2000.0, k_max=500.0)
    with pytest.raises(ValueError):
        MsdParams(mass=0.0)


def test_model_dict_round_trip(hex_model):
    again = ParametricModel.from_dict(hex_model.to_dict())
    for name in ("b", "c", "d", "e", "theta_box", "state_box", "input_box", "disturbance"):
        assert np.array_equal(getattr(again, name), getattr(hex_model, name))
    assert np.array_equal(again.a.base, hex_model.a.base)
    with pytest.raises(ValueError):
        ParametricModel.from_dict({"a": {"base": [[1.0]], "deltas": [[[0.0]]]}})


@given(t1=st.floats(0, 1), t2=st.floats(0, 1), lam=st.floats(0, 1))
def test_affinity_property(t1, t2, lam):
    model = build_msd()
    lhs = eval_a(model, lam * t1 + (1 - lam) * t2)
    rhs = lam * eval_a(model, t1) + (1 - lam) * eval_a(model, t2)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-13)


@given(lo=st.lists(finite, min_size=4, max_size=4), hi=st.lists(finite, min_size=4, max_size=4))
def test_endpoint_consistency(lo, hi):
    a_lo, a_hi = np.reshape(lo, (2, 2)), np.reshape(hi, (2, 2))
    pm = decompose_from_endpoints(a_lo, a_hi)
    assert np.array_equal(pm(0.0), a_lo)
    assert np.allclose(pm(1.0), a_hi, rtol=0, atol=1e-13)


@given(theta=st.floats(0, 1), ts=st.floats(1e-3, 20))
def test_euler_consistency(theta, ts):
    p = HexParams(ts=ts)
    model = build_hex(p)
    a_c = np.array([[-p.flow_hot / p.volume - p.alpha(theta), p.alpha(theta)],
                    [p.alpha(theta), -p.flow_cold / p.volume - p.alpha(theta)]])
    assert np.allclose(eval_a(model, theta), np.eye(2) + ts * a_c, rtol=0, atol=1e-12)


def test_plant_step_includes_disturbance(hex_model):
    x = np.array([60.0, 30.0])
    u = np.array([70.0])
    expect = eval_a(hex_model, 0.3) @ x + hex_model.b @ u + hex_model.e @ [25.0]
    assert np.allclose(hex_model.step(x, u, 0.3), expect)
