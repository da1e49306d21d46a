import io
import math

import numpy as np
import pytest

from berwald.errors import LeftChart, NotAutoparallel, NotTimelike, SingularHit, StepUnderflow
from berwald.geodesics import (
    CSV_COLUMNS,
    CurveSpec,
    GeodesicTrajectory,
    build_normal_chart,
    el_residual,
    exp_map,
    integrate_geodesic,
    proper_time,
)
from berwald.metrics import FundamentalTensor, Minkowski, RobertsonWalker, ScaleFactor, deformed_rw, flat_deformed


def straight_worldline(tau_factor=1.0):
    return CurveSpec(lambda s: [s, 0, 0, 0], lambda s: [1, 0, 0, 0], 0.0, 5.0)


def test_minkowski_straight_line():
    F = FundamentalTensor(Minkowski())
    x0, v0 = np.array([0.0, 1, 2, 3]), np.array([1.0, 0.3, -0.2, 0.1])
    tr = integrate_geodesic(F, x0, v0, 10.0)
    for t, x in zip(tr.t, tr.x):
        assert np.abs(x - (x0 + t * v0)).max() <= 1e-12
    assert tr.lagrangian_drift == 0.0


def test_flat_deformed_same_lines(flat):
    x0, v0 = [0.0, 0, 0, 0], [1.0, 0.3, 0.1, 0.05]
    a = integrate_geodesic(flat, x0, v0, 10.0)
    b = integrate_geodesic(FundamentalTensor(Minkowski()), x0, v0, 10.0)
    assert np.abs(a.x - b.x).max() <= 1e-12
    assert a.lagrangian_drift <= a.drift_bound


def test_self_convergence_order():
    # Minkowski in spherical coordinates: straight lines are curved in the chart
    F = FundamentalTensor(RobertsonWalker(0.0, ScaleFactor("constant", 1.0)))
    x0, v0 = [0, 1.0, 1.2, 0.3], [1, 0.3, 0.1, 0.05]
    ends = [integrate_geodesic(F, x0, v0, 10.0, step=h, tol=None).x[-1] for h in (0.2, 0.1, 0.05)]
    ratio = np.abs(ends[0] - ends[1]).max() / np.abs(ends[1] - ends[2]).max()
    assert 3.5 <= math.log2(ratio) <= 4.5


def test_drift_tightens_with_step():
    F = FundamentalTensor(RobertsonWalker(0.1, ScaleFactor("power", 1.0)))
    x0, v0 = [1.0, 0.3, math.pi / 2, 0.0], [1.2, 0.3, 0.1, 0.05]
    d1 = integrate_geodesic(F, x0, v0, 5.0, step=0.1, tol=None).lagrangian_drift
    d2 = integrate_geodesic(F, x0, v0, 5.0, step=0.05, tol=None).lagrangian_drift
    assert 8.0 <= d1 / d2 <= 32.0


def test_g_and_h_geodesics_coincide(rw):
    x0, v0 = [1.0, 0.3, math.pi / 2, 0.0], [1.2, 0.3, 0.1, 0.05]
    a = integrate_geodesic(rw, x0, v0, 10.0)
    b = integrate_geodesic(FundamentalTensor(rw.base), x0, v0, 10.0)
    assert np.abs(a.x - b.x).max() <= 1e-8
    assert np.abs(a.v - b.v).max() <= 1e-8


def test_deformed_rw_lagrangian_drift_is_real(rw):
    # h(v, v) is conserved but phi changes along the curve, so L drifts (see ledger)
    x0, v0 = [1.0, 0.3, math.pi / 2, 0.0], [1.2, 0.3, 0.1, 0.05]
    tr = integrate_geodesic(rw, x0, v0, 10.0)
    assert tr.lagrangian_drift > 1e-2
    h = FundamentalTensor(rw.base)
    hvv = [h.lagrangian(list(x), list(v)) for x, v in zip(tr.x, tr.v)]
    assert np.ptp(hvv) <= 1e-8 * (1 + abs(hvv[0]))


def test_autoparallel_homogeneity(rw):
    x0, v0 = [1.0, 0.3, math.pi / 2, 0.0], np.array([1.2, 0.3, 0.1, 0.05])
    lam = 2.0
    a = integrate_geodesic(rw, x0, v0, 4.0, step=0.05)
    b = integrate_geodesic(rw, x0, lam * v0, 2.0, step=0.025)
    assert np.abs(a.x - b.x).max() <= 1e-8


def test_exp_map_examples(rw):
    F = FundamentalTensor(Minkowski())
    assert np.allclose(exp_map(F, [0, 1, 2, 3], [1, 1, 0, 0]), [1, 2, 2, 3], atol=1e-14)
    assert np.array_equal(exp_map(rw, [1.0, 0.3, 1.0, 0.0], [0, 0, 0, 0]), [1.0, 0.3, 1.0, 0.0])
    x0, v = [1.0, 0.3, math.pi / 2, 0.0], np.array([1.2, 0.3, 0.1, 0.05])
    tr = integrate_geodesic(rw, x0, v, 1.0, step=1 / 16, tol=1e-11)
    for s, x in zip(tr.t[1:], tr.x[1:]):
        assert np.abs(exp_map(rw, x0, s * v) - x).max() <= 1e-8


def test_singular_hit_reports_location(rw):
    # tdot decreases along a spacelike RW geodesic and crosses thetaB = 0
    with pytest.raises(SingularHit) as ei:
        integrate_geodesic(rw, [1, 0.3, math.pi / 2, 0], [0.5, 1, 0, 0], 2.0)
    loc = ei.value.location()
    assert 0 < loc["t"] < 2 and len(loc["x"]) == 4


def test_left_chart(rw):
    with pytest.raises(LeftChart):
        integrate_geodesic(rw, [1.0, 3.3, 1.0, 0.0], [1, 0.5, 0, 0], 5.0)
    # static closed universe: the radial geodesic runs into 1 - eps r^2 = 0
    F = FundamentalTensor(RobertsonWalker(0.1, ScaleFactor("constant", 1.0)))
    with pytest.raises(LeftChart) as ei:
        integrate_geodesic(F, [1.0, 2.5, 1.0, 0.0], [2, 1, 0, 0], 10.0)
    assert ei.value.location()["x"][1] > 3.1


def test_step_underflow(rw):
    with pytest.raises(StepUnderflow):
        integrate_geodesic(rw, [1, 0.3, math.pi / 2, 0], [1.2, 0.3, 0.1, 0.05], 1.0, tol=1e-30, min_step=1e-3)


def test_csv_export(flat):
    tr = integrate_geodesic(flat, [0, 0, 0, 0], [1, 0.1, 0, 0], 1.0, step=0.25)
    text = tr.to_csv()
    rows = text.strip().split("\n")
    assert rows[0] == ",".join(CSV_COLUMNS) == "t,x0,x1,x2,x3,v0,v1,v2,v3,L,tau"
    assert len(rows) == 6
    last = [float(c) for c in rows[-1].split(",")]
    # tau equals coordinate time scaled by sqrt(-L)
    assert last[-1] == pytest.approx(math.sqrt(-last[-2]) * 1.0, rel=1e-12)


def test_spacelike_run_has_no_tau(flat):
    tr = integrate_geodesic(flat, [0, 0, 0, 0], [0.5, 1, 0, 0], 1.0)
    assert tr.tau is None
    assert tr.to_csv().split("\n")[1].endswith(",")
    with pytest.raises(NotTimelike):
        proper_time(flat, tr)


def test_proper_time_minkowski():
    assert proper_time(FundamentalTensor(Minkowski()), straight_worldline()) == pytest.approx(5.0, abs=1e-12)


def test_proper_time_constant_phi():
    F = flat_deformed("0.21", ())
    assert abs(proper_time(F, straight_worldline()) - 5.5) <= 1e-9


def test_proper_time_reparameterization():
    F = flat_deformed("0.21", ())
    # the worldline over t in [1, 6], once with s = t and once with s = t^2
    a = proper_time(F, CurveSpec(lambda s: [s, 0, 0, 0], lambda s: [1, 0, 0, 0], 1.0, 6.0))
    b = proper_time(F, CurveSpec(lambda s: [math.sqrt(s), 0, 0, 0],
                                 lambda s: [0.5 / math.sqrt(s), 0, 0, 0], 1.0, 36.0))
    assert abs(a - b) <= 1e-8 * a


def test_proper_time_additivity(rw):
    x0, v0 = [1.0, 0.3, math.pi / 2, 0.0], [1.2, 0.3, 0.1, 0.05]
    tr = integrate_geodesic(rw, x0, v0, 4.0, step=0.05)

    def span(i, j):
        return proper_time(rw, GeodesicTrajectory(tr.t[i:j + 1], tr.x[i:j + 1], tr.v[i:j + 1],
                                                 tr.L[i:j + 1], None, tr.chart, {}))

    whole, first, second = span(0, 80), span(0, 40), span(40, 80)
    assert abs(whole - first - second) <= 1e-10 * whole


def test_proper_time_refuses_lightlike():
    F = FundamentalTensor(Minkowski())
    with pytest.raises(NotTimelike):
        proper_time(F, CurveSpec(lambda s: [s, s, 0, 0], lambda s: [1, 1, 0, 0], 0.0, 1.0))


def test_el_residual_constant_phi():
    F = deformed_rw(phi_source="p0", params=(0.3,))
    tr = integrate_geodesic(F, [1.0, 0.3, math.pi / 2, 0.0], [1.2, 0.3, 0.1, 0.05], 2.0, step=0.01)
    assert el_residual(F, tr).max_residual <= 1e-8


def test_el_residual_flat_cartesian(flat):
    tr = integrate_geodesic(flat, [0, 0, 0, 0], [1.0, 0.3, 0.1, 0.05], 2.0, step=0.01)
    assert el_residual(flat, tr).max_residual <= 1e-8


def test_el_residual_polar_matches_transport(flat_polar):
    tr = integrate_geodesic(flat_polar, [0.0, 1.0, 1.0, 0.5], [1.0, 0.3, 0.1, 0.05], 2.0, step=0.01)
    res = el_residual(flat_polar, tr)
    assert res.max_residual > 1e-4  # the Cartan transport term is genuinely present
    assert res.transport_gap <= 1e-5
    assert np.abs(res.finsler_part).max() <= 1e-6


def test_el_residual_rejects_non_autoparallel(flat_polar):
    # a coordinate straight line in the polar chart is not an autoparallel
    t = np.arange(0, 1.0001, 0.01)
    x = np.array([[s, 1.0, 1.0 + 0.3 * s, 0.5] for s in t])
    v = np.tile([1.0, 0.0, 0.3, 0.0], (len(t), 1))
    L = np.array([flat_polar.lagrangian(list(a), list(b)) for a, b in zip(x, v)])
    with pytest.raises(NotAutoparallel):
        el_residual(flat_polar, GeodesicTrajectory(t, x, v, L, None, "spherical", {}))


def test_minkowski_normal_chart_is_affine():
    F = FundamentalTensor(Minkowski())
    nc = build_normal_chart(F, [0.0, 1, 2, 3], radii=(0.1, 0.5))
    assert nc.center_gamma <= 1e-9
    assert np.abs(nc.christoffel(np.array([0.2, 0.1, -0.1, 0.3]))).max() <= 1e-9
    assert np.allclose(nc.to_coords([1, 0, 0, 0]), [1, 1, 2, 3])
    assert nc.validity_radius == 0.5


def test_rw_normal_chart_linear_growth(rw_normal_chart):
    nc = rw_normal_chart
    assert nc.center_gamma <= 1e-6
    u = np.array([0.3, 0.5, -0.4, 0.2])
    u /= np.linalg.norm(u)
    g1 = np.abs(nc.christoffel(0.02 * u)).max()
    g2 = np.abs(nc.christoffel(0.04 * u)).max()
    # first-order Taylor behaviour: doubling the distance doubles Gamma
    assert 1.6 <= g2 / g1 <= 2.4
    assert math.isfinite(g1 / 0.02)


def test_normal_chart_round_trip(rw_normal_chart):
    nc = rw_normal_chart
    n = np.array([0.01, -0.02, 0.015, 0.005])
    assert np.abs(nc.from_coords(nc.to_coords(n)) - n).max() <= 1e-8
    assert nc.to_dict()["validity_radius"] == nc.validity_radius > 0
