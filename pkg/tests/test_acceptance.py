"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are repeated in the
terminal summary.  Run alone with ``pytest -m acceptance -s``.
"""
import json
import math
import re

import numpy as np
import pytest

from berwald.cli import main
from berwald.connection import (
    PLANCK_LENGTH,
    cartan,
    certify,
    curvature,
    lambda_series,
    theorem_c_check,
)
from berwald.dsl import VectorField
from berwald.geodesics import CurveSpec, build_normal_chart, el_residual, integrate_geodesic, proper_time
from berwald.metrics import (
    FundamentalTensor,
    Minkowski,
    RobertsonWalker,
    SamplingPlan,
    ScaleFactor,
    base_null_directions,
    deformed_rw,
    failure_reason,
    flat_deformed,
    regular_velocities,
    validate,
)

from conftest import RW_POINT, RW_VELOCITY, acceptance_line

pytestmark = pytest.mark.acceptance

RW_X0, RW_V0 = [1.0, 0.3, math.pi / 2, 0.0], [1.2, 0.3, 0.1, 0.05]


def families():
    return {"flat deformed": flat_deformed(), "deformed RW": deformed_rw()}


def theta_b(F, x, v):
    return F.singular_values(x, v)["thetaB"]


def test_01_definition_one_suite():
    ok, parts = True, []
    for name, F in families().items():
        plan = SamplingPlan(directions=500, points=20, scales=(0.5, 2.0, 10.0), max_entries=100000, seed=1)
        rep = validate(F, plan)
        c = rep.clauses
        homog = c["homogeneity"]["measured"]
        sig_ok = c["signature"]["measured"] == 0 and c["signature"]["min_abs_eigenvalue"] >= 1e-10
        dz = [e for e in rep.singular_locus.entries if e["reason"] == "denominator-zero"]
        # every denominator-zero direction lies on h(v, B) = 0, and reproduces on re-evaluation
        on_s = all(abs(theta_b(F, e["x"], e["v"])) <= 1e-12 * np.linalg.norm(e["v"]) for e in dz)
        reproduces = all(failure_reason(F, e["x"], e["v"]) == "denominator-zero" for e in dz)
        # every probe built inside S was caught
        caught = len(dz) == plan.points * plan.singular_probes
        # and a small step off S is regular again
        rng = np.random.default_rng(0)
        off = 0
        for e in dz[:20]:
            w = np.array(e["v"]) + 1e-3 * np.linalg.norm(e["v"]) * np.array([1.0, 0, 0, 0]) * rng.choice([-1, 1])
            off += failure_reason(F, e["x"], w) in (None, "non-real")
        exact = on_s and reproduces and caught and off == min(20, len(dz))
        part_ok = homog <= 1e-10 and sig_ok and c["bound"]["passed"] and exact
        ok &= part_ok
        parts.append(f"{name}: homogeneity {homog:.1e}, signature failures {c['signature']['measured']}, "
                     f"S hits {len(dz)} exact={exact}")
    assert acceptance_line(1, "Definition 1", ok, "; ".join(parts))


def test_02_berwald_and_cartan():
    ok, parts = True, []
    rng = np.random.default_rng(2)
    for name, F in families().items():
        worst = 0.0
        for x in F.base.sample_points(rng, 20):
            cert = certify(F, x, seed=int(rng.integers(2**31)), samples=8)
            ok &= cert.passed
            worst = max(worst, cert.variation / (1 + cert.norm))
        parts.append(f"{name} variation/(1+|gamma|) {worst:.1e}")
    rw = deformed_rw()
    control = FundamentalTensor(rw.base, rw.phi, rw.binding, phi_modulator=lambda x: 1.0 + 0.1 * x[0])
    neg = certify(control, RW_POINT, seed=2)
    ok &= (not neg.passed) and neg.variation >= 1e-3
    c = cartan(rw, RW_POINT, RW_VELOCITY)
    ok &= c.max_gap <= 1e-6 and np.abs(c.tensor).max() > 0
    const = cartan(deformed_rw(phi_source="p0", params=(0.3,)), RW_POINT, RW_VELOCITY)
    ok &= not np.any(const.tensor) and not np.any(const.closed_form)
    parts.append(f"x-dependent control variation {neg.variation:.2e} (fails as required)")
    parts.append(f"Cartan |C| {np.abs(c.tensor).max():.3f}, paths differ {c.max_gap:.1e}, constant phi C == 0")
    assert acceptance_line(2, "Berwald property and Cartan tensor", ok, "; ".join(parts))


def test_03_flatness():
    F = flat_deformed()
    rng = np.random.default_rng(3)
    worst = 0.0
    for x in F.base.sample_points(rng, 20):
        v = regular_velocities(F, x, 1, rng)[0]
        worst = max(worst, float(np.abs(curvature(F, x, v).riemann).max()))
    assert acceptance_line(3, "flat family curvature", worst <= 1e-8, f"max |R| {worst:.1e} at 20 points")


def test_04_theorem_c():
    F = deformed_rw()
    rng = np.random.default_rng(4)
    ratio, dev, rel, n = 0.0, 0.0, 0.0, 0
    for x in F.base.sample_points(rng, 50):
        v = regular_velocities(F, x, 1, rng)[0]
        r = theorem_c_check(F, x, v)
        ratio = max(ratio, r.deviation / r.tolerance)
        dev = max(dev, r.deviation)
        rel = max(rel, r.scalar_relation_error)
        n += 1
    ok = n == 50 and ratio <= 1.0 and rel <= 1e-6
    assert acceptance_line(4, "Theorem C", ok,
                           f"max |G[g]-G[h]| {dev:.1e} (worst ratio to tolerance {ratio:.2f}), "
                           f"scalar relation {rel:.1e}, {n} points")


def test_05_cone_coincidence():
    ok, parts = True, []
    rng = np.random.default_rng(5)
    for name, F in families().items():
        worst = 0.0
        pts = F.base.sample_points(rng, 20)
        for k in range(1000):
            x = pts[k % 20]
            v = base_null_directions(F.base, x, 1, rng)[0] * (1 if k % 2 == 0 else -1)
            worst = max(worst, abs(F.lagrangian(x, v)) / float(v @ v))
        ok &= worst <= 1e-10
        parts.append(f"{name} {worst:.1e}")
    assert acceptance_line(5, "null cone coincidence", ok, "max |L|/|v|^2: " + ", ".join(parts))


def test_06_geodesics():
    # self-convergence: Minkowski written in spherical coordinates
    mink_polar = FundamentalTensor(RobertsonWalker(0.0, ScaleFactor("constant", 1.0)))
    ends = [integrate_geodesic(mink_polar, [0, 1.0, 1.2, 0.3], [1, 0.3, 0.1, 0.05], 10.0, step=h, tol=None).x[-1]
            for h in (0.2, 0.1, 0.05)]
    order = math.log2(np.abs(ends[0] - ends[1]).max() / np.abs(ends[1] - ends[2]).max())
    # drift over t_end = 10 for tensors whose Lagrangian is conserved
    runs = {
        "Minkowski": (FundamentalTensor(Minkowski()), [0, 0, 0, 0], [1.0, 0.3, 0.1, 0.05]),
        "flat deformed": (flat_deformed(), [0, 0, 0, 0], [1.0, 0.3, 0.1, 0.05]),
        "RW phi=0": (FundamentalTensor(deformed_rw().base), RW_X0, RW_V0),
        "RW phi=0.3": (deformed_rw(phi_source="p0", params=(0.3,)), RW_X0, RW_V0),
    }
    drift_ok, worst = True, 0.0
    for F, x0, v0 in runs.values():
        tr = integrate_geodesic(F, x0, v0, 10.0)
        drift_ok &= tr.lagrangian_drift <= tr.drift_bound
        worst = max(worst, tr.lagrangian_drift / (1 + abs(tr.L[0])))
    # g- and h-geodesics coincide for Berwald-certified tensors
    gap = 0.0
    for F, x0, v0 in ((deformed_rw(), RW_X0, RW_V0), (flat_deformed(), [0] * 4, [1.0, 0.3, 0.1, 0.05])):
        a = integrate_geodesic(F, x0, v0, 10.0)
        b = integrate_geodesic(FundamentalTensor(F.base), x0, v0, 10.0)
        gap = max(gap, float(np.abs(a.x - b.x).max()))
    ok = 3.5 <= order <= 4.5 and drift_ok and gap <= 1e-8
    assert acceptance_line(6, "geodesics", ok,
                           f"convergence order {order:.2f}, drift/(1+|L0|) {worst:.1e} over {len(runs)} runs, "
                           f"g vs h geodesic gap {gap:.1e}")


@pytest.mark.xfail(strict=True, reason="phi changes along deformed RW autoparallels, so L = (1+phi) h(v,v) "
                                       "is not conserved; see the decisions ledger")
def test_06b_deformed_rw_lagrangian_conservation():
    tr = integrate_geodesic(deformed_rw(), RW_X0, RW_V0, 10.0)
    print(f"deformed RW drift {tr.lagrangian_drift:.3e} vs bound {tr.drift_bound:.1e}")
    assert tr.lagrangian_drift <= tr.drift_bound


def test_07_chronometry():
    F = flat_deformed("0.21", ())
    tau = proper_time(F, CurveSpec(lambda s: [s, 0, 0, 0], lambda s: [1, 0, 0, 0], 0.0, 5.0))
    a = proper_time(F, CurveSpec(lambda s: [s, 0, 0, 0], lambda s: [1, 0, 0, 0], 1.0, 6.0))
    b = proper_time(F, CurveSpec(lambda s: [math.sqrt(s), 0, 0, 0],
                                 lambda s: [0.5 / math.sqrt(s), 0, 0, 0], 1.0, 36.0))
    rel = abs(a - b) / a
    ok = abs(tau - 5.5) <= 1e-9 and rel <= 1e-8
    assert acceptance_line(7, "proper time", ok, f"tau {tau:.12f} (|tau-5.5| {abs(tau - 5.5):.1e}), "
                                                 f"reparameterization rel. diff {rel:.1e}")


def test_08_el_residual():
    const = deformed_rw(phi_source="p0", params=(0.3,))
    tr = integrate_geodesic(const, RW_X0, RW_V0, 2.0, step=0.01)
    r_const = el_residual(const, tr).max_residual
    polar = flat_deformed(chart="spherical")
    tr = integrate_geodesic(polar, [0.0, 1.0, 1.0, 0.5], [1.0, 0.3, 0.1, 0.05], 2.0, step=0.01)
    res = el_residual(polar, tr)
    ok = r_const <= 1e-8 and res.transport_gap <= 1e-5
    assert acceptance_line(8, "Euler-Lagrange residual", ok,
                           f"constant phi {r_const:.1e}; polar chart residual {res.max_residual:.2e} vs "
                           f"sampled transport term, gap {res.transport_gap:.1e}")


def test_09_normal_chart(rw_normal_chart):
    centre = rw_normal_chart.center_gamma
    polar = flat_deformed(chart="spherical")
    nc = build_normal_chart(polar, [0.0, 1.0, 1.0, 0.5])
    rho = nc.validity_radius
    rng = np.random.default_rng(9)
    ball = []
    for frac in (0.5, 1.0, 1.0, 1.0):
        u = rng.normal(size=4)
        ball.append(frac * rho * u / np.linalg.norm(u))
    worst = max([nc.center_gamma] + [float(np.abs(nc.christoffel(n)).max()) for n in ball])
    ok = centre <= 1e-6 and worst <= 1e-6
    assert acceptance_line(9, "normal charts", ok, f"RW centre |Gamma| {centre:.1e}; flat family in polar chart "
                                                   f"max |Gamma| {worst:.1e} on ball of radius {rho}")


def test_10_lambda_series():
    r = lambda_series(0.1, 2.0, 1, PLANCK_LENGTH, 4e-55)
    ok = (
        abs(r["exact"] - 20.0 / 11.0) <= 1e-15
        and abs(r["truncated"] - 1.8) <= 1e-15
        and r["bound_honored"]
        and r["coefficient_discrepancy"]["flagged"]
        and round(r["log10_l2_eps"]) == -124
    )
    assert acceptance_line(10, "Lambda series", ok,
                           f"exact {r['exact']:.10f}, truncated {r['truncated']}, remainder "
                           f"{r['remainder_taylor']:.2e} <= {r['remainder_bound']:.2e}, discrepancy flagged, "
                           f"l^2 eps = {r['l2_eps']:.1e}")


HEADER = re.compile(r'\n  "header": \{.*?\n  \},?', re.S)


def test_11_cli_determinism(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("seed = 11\n[verify]\npoints = 4\ndirections = 50\nnull_directions = 100\nberwald_points = 4\n"
                   "cartan_points = 3\ntheorem_c_points = 5\n")
    texts = {}
    for cmd in ("verify", "geodesic", "cones"):
        for k in (1, 2):
            out = tmp_path / f"{cmd}{k}.json"
            main([cmd, "--config", str(cfg), "--out", str(out)])
            texts[cmd, k] = out.read_text()
    same = all(HEADER.sub("", texts[c, 1]) == HEADER.sub("", texts[c, 2]) for c in ("verify", "geodesic", "cones"))
    stamped = all("timestamp" in json.loads(t)["header"] for t in texts.values())
    assert acceptance_line(11, "CLI determinism", same and stamped,
                           "verify, geodesic and cones reports byte-identical outside the header")
