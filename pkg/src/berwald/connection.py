"""Christoffel symbols, the Berwald test, the Cartan tensor and curvature.

Index conventions (stated once):

* ``gamma[m, n, r]`` is the coefficient of the connection with upper index m.
* ``riemann[m, n, r, s]`` is R^m_{n r s} = d_r G^m_{n s} - d_s G^m_{n r}
  + G^m_{r l} G^l_{n s} - G^m_{s l} G^l_{n r}.
* Ricci_{n s} = R^m_{n m s}; scalar = g^{n s} Ricci_{n s};
  Einstein G_{n s} = Ricci_{n s} - R g_{n s} / 2, indices down,
  signature (-, +, +, +).
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CrossCheckFailed,
    DegenerateMetric,
    DivergentSeries,
    InsufficientSamples,
    NonFinite,
    NotBerwald,
)
from .tensor import SymMatrix4, as_coords, fd_step, stencil_derivative

DET_MIN = 1e-12
BERWALD_REL_TOL = 1e-8
MIN_BERWALD_SAMPLES = 8
CURVATURE_STEP = 1e-4
BASE_STEP = 1e-3
CARTAN_CROSS_TOL = 1e-6
THEOREM_C_TOL = 1e-6
PLANCK_LENGTH = 1.616255e-35  # metres


# ---------------------------------------------------------------- Christoffel symbols


def christoffel_from_jet(g, dg):
    """gamma^m_{nr} = 1/2 g^{ms} (d_n g_{sr} + d_r g_{ns} - d_s g_{nr}); dg[a] = d g / d x^a."""
    g = np.asarray(g, dtype=float)
    with np.errstate(over="ignore"):
        det = abs(np.linalg.det(g))
    if det < DET_MIN:
        raise DegenerateMetric(f"|det g| = {det:.3e} < {DET_MIN}")
    low = 0.5 * (
        np.einsum("nsr->snr", dg) + np.einsum("rns->snr", dg) - np.einsum("snr->snr", dg)
    )
    gam = np.linalg.solve(g, low.reshape(4, 16)).reshape(4, 4, 4)
    gam = 0.5 * (gam + gam.transpose(0, 2, 1))
    if not np.all(np.isfinite(gam)):
        raise NonFinite("Christoffel symbols are not finite")
    return gam


def frozen_velocity_christoffel(F, x, v):
    """The frozen-velocity formula applied in F's own chart, with no transformation.

    For a charted view this generally differs from :func:`christoffel`, and it
    depends on v even when F is Berwald: the formula is not chart covariant
    for velocity-dependent metrics.
    """
    return F.frozen_christoffel(x, v)


@dataclass(frozen=True)
class BerwaldCertificate:
    passed: bool
    variation: float
    norm: float
    tolerance: float
    samples: int
    seed: object
    x: tuple

    def to_dict(self):
        return dict(self.__dict__, x=list(self.x))


@dataclass(frozen=True)
class ChristoffelField:
    x: tuple
    v: tuple
    symbols: np.ndarray
    certificate: object = None


def christoffel(F, x, v, certificate=None):
    x, v = as_coords(x), as_coords(v)
    return ChristoffelField(tuple(x), tuple(v), F.connection(x, v), certificate)


def berwald_check(F, x, velocities, seed=None):
    """Velocity variation of the connection coefficients at x.

    Passes iff max_{v, v'} |gamma(x, v) - gamma(x, v')|_inf <= 1e-8 (1 + |gamma|_inf).
    """
    x = as_coords(x)
    velocities = [np.asarray(as_coords(v)) for v in velocities]
    if len(velocities) < MIN_BERWALD_SAMPLES:
        raise InsufficientSamples(f"need >= {MIN_BERWALD_SAMPLES} velocities, got {len(velocities)}")
    h = F.base.values(x)
    kinds = {np.sign(v @ h @ v) for v in velocities}
    if not (-1.0 in kinds and 1.0 in kinds):
        raise InsufficientSamples("velocity samples must include timelike and spacelike directions")
    gams = np.array([F.connection(x, v) for v in velocities])
    variation = float((gams.max(axis=0) - gams.min(axis=0)).max())
    norm = float(np.abs(gams).max())
    tol = BERWALD_REL_TOL * (1.0 + norm)
    return BerwaldCertificate(variation <= tol, variation, norm, tol, len(velocities), seed, tuple(x))


def certify(F, x, seed=0, samples=MIN_BERWALD_SAMPLES):
    """Berwald certificate at x from seeded regular velocity samples."""
    from .metrics import regular_velocities

    rng = np.random.default_rng(seed)
    return berwald_check(F, x, regular_velocities(F, as_coords(x), samples, rng), seed=seed)


def require_berwald(F, x, certificate=None, seed=0):
    cert = certificate if certificate is not None else certify(F, x, seed)
    if not cert.passed:
        raise NotBerwald(
            f"connection varies with velocity at {list(cert.x)}: {cert.variation:.3e} > {cert.tolerance:.3e}"
        )
    return cert


# ---------------------------------------------------------------- Cartan tensor


@dataclass(frozen=True)
class CartanResult:
    tensor: np.ndarray
    closed_form: np.ndarray
    method: str
    max_gap: float
    euler_residual: float

    @property
    def totally_symmetric_gap(self):
        c = self.tensor
        return float(np.abs(c - c.transpose(1, 0, 2)).max())


def cartan_definition(F, x, v, method="forward"):
    """C_{mnr} = 1/2 d g_{nr} / d v^m by forward mode or central differences."""
    x, v = as_coords(x), as_coords(v)
    if method == "forward":
        _, dg = F.jet_v(x, v)
        return 0.5 * dg
    if method != "central":
        raise ValueError(f"unknown method {method!r}")
    out = np.zeros((4, 4, 4))
    for m in range(4):
        step = fd_step(v[m], rel=1e-6, floor=1e-7) * max(1.0, float(np.linalg.norm(v)))
        plus, minus = list(v), list(v)
        plus[m] += step
        minus[m] -= step
        out[m] = 0.25 * (F.metric(x, plus) - F.metric(x, minus)) / step
    return out


def cartan(F, x, v, method="forward"):
    """Cartan tensor by its definition, cross-checked against the closed form.

    The closed form is C_{mnr} = 1/2 h_{nr} d phi / d v^m, with d phi / d v
    obtained from the chain rule through chi and the theta arguments.
    """
    defn = cartan_definition(F, x, v, method)
    closed = F.cartan_closed_form(x, v)
    gap = float(np.abs(defn - closed).max())
    scale = 1.0 + float(np.abs(closed).max())
    if gap > CARTAN_CROSS_TOL * scale:
        raise CrossCheckFailed(f"Cartan definition and closed form differ by {gap:.3e}")
    euler = float(np.abs(np.einsum("m,mnr->nr", np.asarray(as_coords(v)), defn)).max())
    return CartanResult(defn, closed, method, gap, euler)


# ---------------------------------------------------------------- curvature


@dataclass(frozen=True)
class CurvatureBundle:
    x: tuple
    v: tuple
    riemann: np.ndarray
    ricci: SymMatrix4
    scalar: float
    einstein: SymMatrix4
    ricci_asymmetry: float
    bianchi_residual: float
    certificate: object = None

    def to_dict(self):
        return {
            "x": list(self.x),
            "v": list(self.v),
            "riemann": self.riemann.tolist(),
            "ricci": self.ricci.matrix().tolist(),
            "scalar": self.scalar,
            "einstein": self.einstein.matrix().tolist(),
            "ricci_asymmetry": self.ricci_asymmetry,
            "bianchi_residual": self.bianchi_residual,
        }


def riemann_from(gam, dgam):
    """R^m_{nrs} from gamma[m, n, r] and dgam[a, m, n, r] = d_a gamma^m_{nr}."""
    return (
        np.einsum("rmns->mnrs", dgam)
        - np.einsum("smnr->mnrs", dgam)
        + np.einsum("mrl,lns->mnrs", gam, gam)
        - np.einsum("msl,lnr->mnrs", gam, gam)
    )


def _bundle(x, v, gmat, riem, certificate=None):
    ric_raw = np.einsum("mnms->ns", riem)
    asym = float(np.abs(ric_raw - ric_raw.T).max())
    ric = 0.5 * (ric_raw + ric_raw.T)
    scalar = float(np.einsum("ns,ns->", np.linalg.inv(gmat), ric))
    ein = ric - 0.5 * scalar * gmat
    bianchi = float(np.abs(riem + riem.transpose(0, 2, 3, 1) + riem.transpose(0, 3, 1, 2)).max())
    return CurvatureBundle(
        tuple(x), tuple(v), riem, SymMatrix4.from_matrix(ric), scalar,
        SymMatrix4.from_matrix(ein), asym, bianchi, certificate,
    )


def curvature(F, x, v, certificate=None, step=CURVATURE_STEP):
    """Curvature of the Berwald connection at (x, v).

    Derivatives of the connection are 5-point central differences of the
    Christoffel field at frozen v with the given step.
    """
    x, v = as_coords(x), as_coords(v)
    cert = require_berwald(F, x, certificate)
    gam = F.connection(x, v)
    dgam = np.zeros((4, 4, 4, 4))
    for a in range(4):
        dgam[a] = stencil_derivative(lambda y: F.connection(y, v), x, a, step, order=4)
    return _bundle(x, v, F.metric(x, v), riemann_from(gam, dgam), cert)


def _base_christoffel(base, y, step):
    """Christoffel symbols of a base metric from 4th-order differences of its values."""
    y = np.asarray(y, dtype=float)
    h = base.values(y)
    dh = np.zeros((4, 4, 4))
    for a in range(4):
        e = np.zeros(4)
        e[a] = step
        dh[a] = (8.0 * (base.values(y + e) - base.values(y - e))
                 - (base.values(y + 2 * e) - base.values(y - 2 * e))) / (12.0 * step)
    hinv = np.linalg.inv(h)
    out = np.zeros((4, 4, 4))
    for m in range(4):
        for n in range(4):
            for r in range(n, 4):
                s = 0.0
                for k in range(4):
                    s += hinv[m, k] * (dh[n, k, r] + dh[r, n, k] - dh[k, n, r])
                out[m, n, r] = out[m, r, n] = 0.5 * s
    return out


def base_curvature(base, x, step=BASE_STEP):
    """Curvature of a Lorentzian base metric by a finite-difference-only pipeline.

    Independent of the tensor code path: metric values only, no forward mode,
    4th-order stencils for both the metric and the connection derivatives.
    """
    x = np.asarray(as_coords(x))
    gam = _base_christoffel(base, x, step)
    dgam = np.zeros((4, 4, 4, 4))
    for a in range(4):
        e = np.zeros(4)
        e[a] = step
        dgam[a] = (
            8.0 * (_base_christoffel(base, x + e, step) - _base_christoffel(base, x - e, step))
            - (_base_christoffel(base, x + 2 * e, step) - _base_christoffel(base, x - 2 * e, step))
        ) / (12.0 * step)
    return _bundle(list(x), [float("nan")] * 4, base.values(x), riemann_from(gam, dgam))


def certify_constant_curvature(base, target, points=8, seed=0, rel_tol=1e-6):
    """(ok, max |R_h - target|) over seeded sample points of the base."""
    rng = np.random.default_rng(seed)
    spread = 0.0
    for x in base.sample_points(rng, points):
        spread = max(spread, abs(base_curvature(base, x).scalar - target))
    return spread <= rel_tol * (1.0 + abs(target)), spread


@dataclass(frozen=True)
class TheoremCResult:
    passed: bool
    deviation: float
    tolerance: float
    scalar_g: float
    scalar_h: float
    phi: float
    scalar_relation_error: float
    einstein_g: np.ndarray
    einstein_h: np.ndarray

    def to_dict(self):
        d = dict(self.__dict__)
        d["einstein_g"] = self.einstein_g.tolist()
        d["einstein_h"] = self.einstein_h.tolist()
        return d


def theorem_c_check(F, x, v, certificate=None):
    """|G[g](x, v) - G[h](x)|_inf with G[h] from :func:`base_curvature`.

    Also reports the relative error of R_g = R_h / (1 + phi).
    """
    x, v = as_coords(x), as_coords(v)
    cg = curvature(F, x, v, certificate)
    ch = base_curvature(F.base, x)
    Gg, Gh = cg.einstein.matrix(), ch.einstein.matrix()
    dev = float(np.abs(Gg - Gh).max())
    tol = THEOREM_C_TOL * (1.0 + float(np.abs(Gh).max()))
    phi = F.phi_value(x, v)
    predicted = ch.scalar / (1.0 + phi)
    rel = abs(cg.scalar - predicted) / max(1.0, abs(predicted))
    return TheoremCResult(dev <= tol, dev, tol, cg.scalar, ch.scalar, phi, rel, Gg, Gh)


def metric_compatibility(F, x, v, step=1e-4):
    """Horizontal covariant derivative of g, max over components.

    (nabla_r g)_{mn} = delta_r g_{mn} - G^l_{rm} g_{ln} - G^l_{rn} g_{ml}, with
    delta_r = d_r - G^a_{rb} v^b d/dv^a.  Zero iff g is parallel for the
    Berwald connection at (x, v).
    """
    x, v = as_coords(x), as_coords(v)
    gam = F.connection(x, v)
    g, dgx = F.jet_x(x, v)
    _, dgv = F.jet_v(x, v)
    N = np.einsum("arb,b->ra", gam, np.asarray(v))
    delta = dgx - np.einsum("ra,amn->rmn", N, dgv)
    nab = delta - np.einsum("lrm,ln->rmn", gam, g) - np.einsum("lrn,ml->rmn", gam, g)
    return float(np.abs(nab).max())


def einstein_divergence(base, x, step=1e-3):
    """max_n |nabla^m G_{mn}| of a base metric, by differences of the FD Einstein tensor."""
    x = np.asarray(as_coords(x))
    gam = _base_christoffel(base, x, BASE_STEP)

    def mixed(y):
        c = base_curvature(base, y)
        return np.linalg.inv(base.values(y)) @ c.einstein.matrix()

    # G^m_n and its partial derivatives
    G = mixed(x)
    dG = np.zeros((4, 4, 4))
    for a in range(4):
        e = np.zeros(4)
        e[a] = step
        dG[a] = (mixed(x + e) - mixed(x - e)) / (2.0 * step)
    div = (
        np.einsum("mmn->n", dG)
        + np.einsum("mml,ln->n", gam, G)
        - np.einsum("lmn,ml->n", gam, G)
    )
    return float(np.abs(div).max())


# ---------------------------------------------------------------- cosmological constant series


def lambda_series(phi_value, lam, order, length_scale=None, eps=None):
    """Expansion of lambda / (1 + phi) in powers of phi.

    ``truncated`` uses the printed coefficients 1, -1, 1/2 for k <= 2 and the
    Taylor coefficients (-1)^k beyond; ``truncated_taylor`` uses (-1)^k
    throughout.  The k = 2 disagreement is reported, not resolved.
    """
    phi = float(phi_value)
    if abs(phi) >= 1.0:
        raise DivergentSeries(f"|phi| = {abs(phi)} >= 1: the geometric series diverges")
    if order < 0 or int(order) != order:
        raise ValueError("order must be a non-negative integer")
    order = int(order)
    taylor = [(-1.0) ** k for k in range(order + 1)]
    printed = [c for c in taylor]
    if order >= 2:
        printed[2] = 0.5
    exact = lam / (1.0 + phi)
    trunc_printed = sum(c * phi**k * lam for k, c in enumerate(printed))
    trunc_taylor = sum(c * phi**k * lam for k, c in enumerate(taylor))
    bound = abs(phi) ** (order + 1) / (1.0 - abs(phi)) * abs(lam)
    out = {
        "phi": phi,
        "lambda": lam,
        "order": order,
        "exact": exact,
        "truncated": trunc_printed,
        "truncated_taylor": trunc_taylor,
        "remainder_bound": bound,
        "remainder_taylor": abs(exact - trunc_taylor),
        "remainder_printed": abs(exact - trunc_printed),
        "bound_honored": abs(exact - trunc_taylor) <= bound,
        "coefficients_printed": printed,
        "coefficients_taylor": taylor,
        "coefficient_discrepancy": {
            "flagged": True,
            "term": 2,
            "printed": 0.5,
            "taylor": 1.0,
            "affects_this_order": order >= 2,
            "note": "the printed phi^2 coefficient 1/2 differs from the Taylor coefficient 1 of 1/(1+phi)",
        },
    }
    if length_scale is not None and eps is not None:
        ratio = length_scale**2 * eps
        out["length_scale"] = length_scale
        out["eps"] = eps
        out["l2_eps"] = ratio
        out["log10_l2_eps"] = math.log10(ratio) if ratio > 0 else None
    return out
