import numpy as np
import pytest

from expected_values import MSD_NOMINAL_REGIONS, ONE_D_REGIONS
from oracles import scalar_clip_qp
from parampc import qp as qpmod
from parampc.cases import CASES
from parampc.condense import condense_model
from parampc.empc import (PwaLaw, chebyshev_ball, coverage_report, enumerate_regions,
                          point_locate, point_locate_many)
from parampc.frechet import build_method2_constraints, build_parametric_cost, method2_mpqp
from parampc.mccormick import build_method1_qp
from parampc.tracking import condensed_mpqp


def one_d_law():
    return enumerate_regions([[1.0]], [[-1.0]], [[1.0], [-1.0]], [1.0, 1.0], np.zeros((2, 1)),
                             [[-3.0, 3.0]])


def _ref(case):
    return np.full((4, 1), CASES[case].reference.segments[0][1][0])


def nominal_problem(model, weights, case):
    return condensed_mpqp(condense_model(model, 4, theta=[0.5]), weights, model, _ref(case))


@pytest.fixture(scope="module")
def msd_nominal(msd, msd_weights):
    prob = nominal_problem(msd, msd_weights, "msd")
    h, f_map, f_off, g, b, e, box = prob
    return prob, enumerate_regions(h, f_map, g, b, e, box, f_off=f_off)


@pytest.fixture(scope="module")
def msd_m1(msd, msd_weights):
    prob = build_method1_qp(msd, 4, msd_weights).mpqp(_ref("msd"))
    h, f_map, f_off, g, b, e, box = prob
    return prob, enumerate_regions(h, f_map, g, b, e, box, f_off=f_off)


@pytest.fixture(scope="module")
def hex_m2(hex_model, hex_weights):
    cs = condense_model(hex_model, 4, sensitivities=True)
    prob = method2_mpqp(build_parametric_cost(cs, hex_weights),
                        build_method2_constraints(hex_model, cs, 4), 1.0, hex_model.state_box,
                        hex_model.disturbance, _ref("hex"))
    h, f_map, f_off, g, b, e, box = prob
    return prob, enumerate_regions(h, f_map, g, b, e, box, f_off=f_off)


def _online(prob, xi):
    h, f_map, f_off, g, b, e, _ = prob
    return qpmod.solve(qpmod.DenseQp(h, f_map @ xi + f_off, g, b + e @ xi))


def _oracle_check(prob, law, samples, seed=0):
    h, f_map, f_off, *_ , box = prob
    rng = np.random.default_rng(seed)
    worst_z = worst_obj = 0.0
    located = 0
    for _ in range(samples):
        xi = rng.uniform(box[:, 0], box[:, 1])
        loc = point_locate(law, xi)
        if not loc.found:
            continue
        located += 1
        sol = _online(prob, xi)
        assert sol.ok
        obj = lambda z: 0.5 * z @ h @ z + (f_map @ xi + f_off) @ z  # noqa: E731
        worst_z = max(worst_z, np.abs(loc.z - sol.z_opt).max())
        worst_obj = max(worst_obj, abs(obj(loc.z) - obj(sol.z_opt)) / (1 + abs(obj(sol.z_opt))))
    return located, worst_z, worst_obj


def test_one_d_three_regions():
    law = one_d_law()
    assert len(law) == ONE_D_REGIONS
    for x in np.linspace(-3, 3, 61):
        loc = point_locate(law, [x])
        assert loc.found and loc.z[0] == pytest.approx(scalar_clip_qp(x), abs=1e-12)
    gains = sorted(float(r.gain[0, 0]) for r in law.regions)
    assert gains == pytest.approx([0.0, 0.0, 1.0])


def test_unconstrained_single_region():
    h = np.array([[2.0, 0.3], [0.3, 1.0]])
    f_map = np.array([[1.0, 0.0, 2.0], [0.5, -1.0, 0.0]])
    law = enumerate_regions(h, f_map, None, None, None, [[-1, 1]] * 3)
    assert len(law) == 1
    assert np.allclose(law.regions[0].gain, -np.linalg.solve(h, f_map))
    assert coverage_report(law, 200).hit_fraction == 1.0


def test_shared_facet_tie_break():
    law = one_d_law()
    for x in (-1.0, 1.0):
        containing = [i for i, r in enumerate(law.regions) if r.contains([x])]
        assert len(containing) == 2
        assert point_locate(law, [x]).region == min(containing)


def test_chebyshev_center_locates_its_region(msd_nominal):
    _, law = msd_nominal
    for i, r in enumerate(law.regions):
        assert point_locate(law, r.center).region == i
        assert r.radius > 1e-9


def test_msd_nominal_oracle(msd_nominal):
    prob, law = msd_nominal
    assert len(law) == MSD_NOMINAL_REGIONS
    located, err_z, err_obj = _oracle_check(prob, law, 1000)
    assert located == 1000
    assert err_z <= 1e-6 and err_obj <= 1e-6


def test_region_invariant(msd_nominal, hex_m2):
    for prob, law in (msd_nominal, hex_m2):
        rng = np.random.default_rng(7)
        for r in law.regions:
            for _ in range(20):
                d = rng.standard_normal(r.center.size)
                xi = r.center + 0.99 * r.radius * rng.uniform() * d / np.linalg.norm(d)
                sol = _online(prob, xi)
                assert np.abs(sol.z_opt - r.evaluate(xi)).max() <= 1e-7
                # weakly active rows may join, strictly active ones may not leave
                strict = {i for i in r.active_set if sol.multipliers[i] > 1e-6}
                assert strict <= set(sol.active_set) | set(r.active_set)


def test_disjoint_interiors(msd_nominal, msd_m1):
    for prob, law in (msd_nominal, msd_m1):
        box = law.parameter_box
        xs = np.random.default_rng(3).uniform(box[:, 0], box[:, 1], size=(2000, box.shape[0]))
        for x in xs:
            inside = sum(np.all(r.region_a @ x < r.region_b - 1e-9) for r in law.regions)
            assert inside <= 1


def test_continuity_across_facets(msd_nominal, hex_m2):
    rng = np.random.default_rng(11)
    for _, law in (msd_nominal, hex_m2):
        assert law.adjacency
        for adj in law.adjacency:
            first, second = law.regions[adj.first], law.regions[adj.second]
            pts = [adj.point]
            normal = adj.normal / np.linalg.norm(adj.normal)
            while len(pts) < 10:
                d = rng.standard_normal(normal.size)
                d -= (d @ normal) * normal
                if np.linalg.norm(d) == 0:
                    break
                pts.append(adj.point + 0.9 * adj.radius * rng.uniform() * d / np.linalg.norm(d))
            for p in pts:
                if second.contains(p, 1e-7):
                    assert np.abs(first.evaluate(p) - second.evaluate(p)).max() <= 1e-6


def test_method1_coverage(msd_m1):
    prob, law = msd_m1
    cov = coverage_report(law, 1000)
    assert cov.miss_fraction <= 0.01
    assert cov.hit_fraction + cov.infeasible_fraction + cov.miss_fraction == pytest.approx(1.0)
    located, err_z, err_obj = _oracle_check(prob, law, 300)
    assert located >= 297 and err_obj <= 1e-6


def test_half_infeasible_coverage():
    # min 1/2 u^2 s.t. 0 <= u <= xi, xi in [-1, 1]: infeasible for xi < 0
    law = enumerate_regions([[1.0]], [[0.0]], [[1.0], [-1.0]], [0.0, 0.0], [[1.0], [0.0]],
                            [[-1.0, 1.0]])
    cov = coverage_report(law, 2000)
    assert abs(cov.infeasible_fraction - 0.5) < 0.05
    assert cov.miss_fraction == 0.0


def test_region_cap_gives_partial(msd, msd_weights):
    h, f_map, f_off, g, b, e, box = nominal_problem(msd, msd_weights, "msd")
    law = enumerate_regions(h, f_map, g, b, e, box, f_off=f_off, max_regions=3)
    assert law.partial and len(law) == 3


def test_determinism(msd, msd_weights):
    h, f_map, f_off, g, b, e, box = nominal_problem(msd, msd_weights, "msd")
    a = enumerate_regions(h, f_map, g, b, e, box, f_off=f_off)
    c = enumerate_regions(h, f_map, g, b, e, box, f_off=f_off)
    assert [r.active_set for r in a.regions] == [r.active_set for r in c.regions]
    assert a.to_json() == c.to_json()


def test_json_round_trip(msd_nominal):
    _, law = msd_nominal
    again = PwaLaw.from_json(law.to_json())
    assert len(again) == len(law)
    xs = np.random.default_rng(0).uniform(law.parameter_box[:, 0], law.parameter_box[:, 1],
                                          size=(200, 2))
    assert np.array_equal(point_locate_many(again, xs), point_locate_many(law, xs))
    with pytest.raises(ValueError):
        PwaLaw.from_json('{"schema": "other"}')


def test_miss_is_a_value():
    law = one_d_law()
    assert not point_locate(law, [10.0]).found


def test_bad_box():
    with pytest.raises(ValueError):
        enumerate_regions([[1.0]], [[1.0]], None, None, None, [[-np.inf, 1.0]])


def test_chebyshev_ball_square():
    a = np.vstack([np.eye(2), -np.eye(2)])
    c, r = chebyshev_ball(a, np.ones(4))
    assert np.allclose(c, 0.0, atol=1e-9) and r == pytest.approx(1.0)


def test_exact_controller_matches_law(msd, msd_weights):
    from parampc.sim import ExactController
    prob = nominal_problem(msd, msd_weights, "msd")
    h, f_map, f_off, g, b, e, box = prob
    law = enumerate_regions(h, f_map, g, b, e, box, f_off=f_off)
    ctrl = ExactController(msd, 4, msd_weights)
    rng = np.random.default_rng(5)
    for _ in range(200):
        x0 = rng.uniform(box[:, 0], box[:, 1])
        loc = point_locate(law, x0)
        assert loc.found
        assert np.abs(loc.z[:1] - ctrl(x0, 0.5, _ref("msd"))).max() <= 1e-6
