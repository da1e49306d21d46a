"""Base metrics, the fundamental tensor g = (1 + phi) h, and Definition-style validation."""
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dual as ad
from .charts import ChartMap, get_chart, get_map
from .dsl import (
    ArgumentBinding,
    ScalarFactorExpr,
    VectorField,
    compute_arguments,
    gradient_v,
    parse,
    random_direction,
)
from .errors import (
    BerwaldError,
    BoundViolation,
    DegenerateMetric,
    NonFinite,
    NonRealValue,
    SingularArgument,
    SingularEvaluation,
)
from .tensor import SymMatrix4, as_coords, orthonormal_frame

EIGEN_MIN = 1e-10
LIGHTLIKE_REL = 1e-12
CONE_TOL = 1e-10
DET_MIN = 1e-12


class InvalidTensor(BerwaldError):
    """Construction-time rejection of a fundamental tensor."""


# ---------------------------------------------------------------- base metrics


class BaseMetric:
    family = "abstract"
    chart = "cartesian"
    dual = True

    def components(self, x):
        raise NotImplementedError

    def values(self, x):
        return np.array([[ad.value(c) for c in row] for row in self.components(x)])

    def expression_env(self, x):
        return {}

    def contains(self, x):
        return get_chart(self.chart).contains(x)

    def sample_points(self, rng, n):
        raise NotImplementedError

    def describe(self):
        return {"family": self.family, "chart": self.chart}


class Minkowski(BaseMetric):
    family = "minkowski"

    def __init__(self, extent=2.0):
        self.extent = extent

    def components(self, x):
        return [[-1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]

    def values(self, x):
        return np.diag([-1.0, 1.0, 1.0, 1.0])

    def sample_points(self, rng, n):
        return [list(rng.uniform(-self.extent, self.extent, size=4)) for _ in range(n)]


@dataclass(frozen=True)
class ScaleFactor:
    """a(t) = c, t^p or exp(H t)."""

    kind: str = "constant"
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "power", "exponential"):
            raise ValueError(f"unknown scale factor kind {self.kind!r}")

    def __call__(self, t):
        if self.kind == "constant":
            return self.param
        if self.kind == "exponential":
            return ad.exp(self.param * t)
        p = self.param
        if float(p).is_integer():
            return t ** int(p)
        return ad.exp(p * ad.log(t))

    def derivative(self, t):
        if self.kind == "constant":
            return 0.0
        if self.kind == "exponential":
            return self.param * ad.exp(self.param * t)
        p = self.param
        if p == 0:
            return 0.0
        if float(p).is_integer():
            return p * t ** int(p - 1)
        return p * ad.exp((p - 1) * ad.log(t))

    @property
    def param_name(self):
        return {"constant": "c", "power": "p", "exponential": "H"}[self.kind]


class RobertsonWalker(BaseMetric):
    """ds^2 = -dt^2 + a(t)^2 (dr^2/(1 - eps r^2) + r^2 (dtheta^2 + sin^2 theta dphi^2))."""

    family = "robertson_walker"
    chart = "spherical"

    def __init__(self, eps=0.0, scale=ScaleFactor(), t_range=(0.5, 2.5), r_range=None):
        self.eps = float(eps)
        self.scale = scale
        self.t_range = tuple(t_range)
        if r_range is None:
            rmax = 2.0 if self.eps <= 0 else min(2.0, 0.9 / math.sqrt(self.eps))
            r_range = (0.1, rmax)
        self.r_range = tuple(r_range)
        if self.r_range[0] <= 0 or 1.0 - self.eps * self.r_range[1] ** 2 < 1e-3:
            raise ValueError(f"r range {self.r_range} leaves the chart (need r > 0 and 1 - eps r^2 >= 1e-3)")
        if scale.kind == "power" and self.t_range[0] <= 0:
            raise ValueError("power-law scale factor needs t > 0")

    def components(self, x):
        t, r, th, _ = x
        a = self.scale(t)
        a2 = a * a
        st = ad.sin(th)
        return [
            [-1.0, 0.0, 0.0, 0.0],
            [0.0, a2 / (1.0 - self.eps * r * r), 0.0, 0.0],
            [0.0, 0.0, a2 * r * r, 0.0],
            [0.0, 0.0, 0.0, a2 * r * r * st * st],
        ]

    def expression_env(self, x):
        t = x[0]
        return {
            "eps": self.eps,
            "a": self.scale(t),
            "adot": self.scale.derivative(t),
            self.scale.param_name: self.scale.param,
        }

    def contains(self, x):
        if not super().contains(x):
            return False
        t, r = float(x[0]), float(x[1])
        if self.scale.kind == "power" and t <= 0:
            return False
        return 1.0 - self.eps * r * r >= 1e-3

    def sample_points(self, rng, n):
        out = []
        for _ in range(n):
            out.append([
                rng.uniform(*self.t_range),
                rng.uniform(*self.r_range),
                rng.uniform(0.2, math.pi - 0.2),
                rng.uniform(0.0, 2.0 * math.pi),
            ])
        return out

    def describe(self):
        return {
            "family": self.family,
            "chart": self.chart,
            "eps": self.eps,
            "scale_factor": self.scale.kind,
            "scale_param": self.scale.param,
        }


class PulledBack(BaseMetric):
    """A base metric expressed in another chart: h'(x') = J^T h(f(x')) J."""

    def __init__(self, base, chart_map):
        if chart_map.target != base.chart:
            raise ValueError("chart map must end in the base metric's chart")
        self.base = base
        self.map = chart_map
        self.chart = chart_map.source
        self.family = base.family
        self.dual = base.dual

    def components(self, x):
        jac = self.map.jacobian(x)
        h = self.base.components(self.map.forward(x))
        return [
            [
                sum(jac[a][i] * h[a][b] * jac[b][j] for a in range(4) for b in range(4))
                for j in range(4)
            ]
            for i in range(4)
        ]

    def values(self, x):
        jac = np.array([[ad.value(c) for c in row] for row in self.map.jacobian(x)])
        y = [ad.value(c) for c in self.map.forward(list(x))]
        return jac.T @ self.base.values(y) @ jac

    def expression_env(self, x):
        return self.base.expression_env([ad.value(c) for c in self.map.forward(list(x))])

    def contains(self, x):
        if not get_chart(self.chart).contains(x):
            return False
        return self.base.contains([ad.value(c) for c in self.map.forward(list(x))])

    def sample_points(self, rng, n):
        back = self.map.inverse
        out = []
        while len(out) < n:
            y = self.base.sample_points(rng, 1)[0]
            x = [ad.value(c) for c in back(y)]
            if self.contains(x):
                out.append(x)
        return out

    def describe(self):
        return dict(self.base.describe(), chart=self.chart, pulled_back_from=self.base.chart)


class CustomMetric(BaseMetric):
    """User callable h(x) -> 4x4; differentiated by finite differences only."""

    family = "custom"
    dual = False

    def __init__(self, fn, chart="cartesian", sampler=None, extent=1.0):
        self.fn = fn
        self.chart = chart
        self.sampler = sampler
        self.extent = extent

    def components(self, x):
        return np.asarray(self.fn([ad.value(c) for c in x]), dtype=float).tolist()

    def values(self, x):
        return np.asarray(self.fn([float(c) for c in x]), dtype=float)

    def sample_points(self, rng, n):
        if self.sampler is not None:
            return [list(p) for p in self.sampler(rng, n)]
        return [list(rng.uniform(-self.extent, self.extent, size=4)) for _ in range(n)]


# ---------------------------------------------------------------- fundamental tensors


def _mat(g):
    return np.array([[ad.value(c) for c in row] for row in g])


def _fd_jet(fn, point, size_offset=None):
    """(value, d value / d point[a]) for a float matrix function, 4th-order stencil."""
    from .tensor import fd_step

    point = [float(c) for c in point]
    g0 = np.asarray(fn(point), dtype=float)
    dg = np.zeros((4,) + g0.shape)
    for a in range(4):
        h = fd_step(point[a])
        vals = []
        for k in (1, -1, 2, -2):
            p = list(point)
            p[a] += k * h
            vals.append(np.asarray(fn(p), dtype=float))
        dg[a] = (8.0 * (vals[0] - vals[1]) - (vals[2] - vals[3])) / (12.0 * h)
    return g0, dg


class _TensorOps:
    """Metric evaluation, jets and the frozen-velocity Christoffel formula."""

    dual = True

    def components(self, x, v):
        raise NotImplementedError

    def metric(self, x, v):
        g = _mat(self.components(as_coords(x), as_coords(v)))
        if not np.all(np.isfinite(g)):
            raise NonFinite("metric components are not finite")
        return g

    def jet_x(self, x, v):
        """(g, dg) with dg[a, i, j] = d g_ij / d x^a at frozen v."""
        x, v = as_coords(x), as_coords(v)
        if not self.dual:
            return _fd_jet(lambda p: self.metric(p, v), x)
        g, dg = ad.split(self.components(ad.seed(x), v), 4)
        return _finite_jet(g, np.moveaxis(dg, -1, 0))

    def jet_v(self, x, v):
        """(g, dg) with dg[a, i, j] = d g_ij / d v^a."""
        x, v = as_coords(x), as_coords(v)
        if not self.dual:
            return _fd_jet(lambda p: self.metric(x, p), v)
        g, dg = ad.split(self.components(x, ad.seed(v)), 4)
        return _finite_jet(g, np.moveaxis(dg, -1, 0))

    def frozen_christoffel(self, x, v):
        from .connection import christoffel_from_jet

        return christoffel_from_jet(*self.jet_x(x, v))


def _finite_jet(g, dg):
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(dg))):
        raise NonFinite("metric jet is not finite")
    return g, dg


class FundamentalTensor(_TensorOps):
    """g_{mu nu}(x, v) = (1 + phi(x, v)) h_{mu nu}(x) in the base metric's chart.

    ``phi_modulator`` multiplies phi by a function of x.  It exists only to
    build non-Berwald negative controls in tests.
    """

    def __init__(self, base, phi=None, binding=None, time_orientation=None, phi_modulator=None,
                 certify=True):
        self.base = base
        self.phi = phi if phi is not None else parse("0")
        self.binding = binding if binding is not None else ArgumentBinding()
        self.time_orientation = time_orientation
        self.phi_modulator = phi_modulator
        self.dual = base.dual
        if certify and "curv" in self.phi.arguments:
            self._certify_curvature()

    @property
    def chart(self):
        return self.base.chart

    def _certify_curvature(self):
        from .connection import certify_constant_curvature

        target = self.binding.curvature_value if self.binding.curvature_mode == "constant" else 0.0
        ok, spread = certify_constant_curvature(self.base, target)
        if not ok:
            raise InvalidTensor(
                f"phi depends on curv but the base scalar curvature is not the constant {target} "
                f"(max deviation {spread:.3e}); the scalar factor would depend on x"
            )

    def contains(self, x):
        return self.base.contains(x)

    def phi_at(self, x, v, h=None):
        args = compute_arguments(self.phi, self.binding, self.base, x, v, h)
        val = self.phi(args)
        if self.phi_modulator is not None:
            val = val * self.phi_modulator(x)
        return val

    def phi_value(self, x, v):
        return ad.value(self.phi_at(as_coords(x), as_coords(v)))

    def factor_components(self, x, v):
        h = self.base.components(x)
        factor = 1.0 + self.phi_at(x, v, h)
        return factor, h

    def components(self, x, v):
        factor, h = self.factor_components(x, v)
        if ad.value(factor) <= 0.0:
            raise BoundViolation(f"1 + phi = {ad.value(factor):.6g} <= 0")
        return [[factor * hij for hij in row] for row in h]

    def raw_metric(self, x, v):
        """(1 + phi) h without the bound check, for diagnostics."""
        factor, h = self.factor_components(as_coords(x), as_coords(v))
        return ad.value(factor) * _mat(h)

    def lagrangian(self, x, v):
        x, v = as_coords(x), as_coords(v)
        h = self.base.values(x)
        vv = np.array(v)
        factor = 1.0 + ad.value(self.phi_at(x, v, h.tolist()))
        if factor <= 0.0:
            raise BoundViolation(f"1 + phi = {factor:.6g} <= 0")
        return float(factor * (vv @ h @ vv))

    def connection(self, x, v):
        return self.frozen_christoffel(x, v)

    def time_field(self, x):
        if self.time_orientation is None:
            return None
        return np.array([ad.value(c) for c in self.time_orientation.components(list(x), self.base)])

    def singular_values(self, x, v):
        """Values of the phi arguments whose vanishing marks the singular locus."""
        x, v = as_coords(x), as_coords(v)
        h = self.base.values(x)
        out = {}
        for name in self.phi.singular_arguments:
            if name == "chi":
                out[name] = float(np.array(v) @ h @ np.array(v))
            elif name.startswith("theta"):
                f = self.binding.field_for(name).components(x, self.base)
                out[name] = float(np.array(v) @ h @ np.array([ad.value(c) for c in f]))
        return out

    def cartan_closed_form(self, x, v):
        """C_{mu nu rho} = 1/2 h_{nu rho} d phi / d v^mu via the argument chain rule."""
        x, v = as_coords(x), as_coords(v)
        h = self.base.values(x)
        if self.phi.is_constant():
            return np.zeros((4, 4, 4))
        dphi = gradient_v(self.phi, x, v, self.binding, self.base)
        if self.phi_modulator is not None:
            dphi = dphi * ad.value(self.phi_modulator(x))
        return 0.5 * np.einsum("m,nr->mnr", dphi, h)

    def describe(self):
        b = self.binding
        fields = {}
        for name, fld in [("A", b.A), ("B", b.B), *sorted(b.extra.items())]:
            if fld is not None:
                fields[name] = list(fld.sources)
        return {
            "base": self.base.describe(),
            "phi": self.phi.source or self.phi.to_source(),
            "params": list(self.phi.params),
            "length_scale": self.phi.length_scale,
            "curvature_mode": b.curvature_mode,
            "fields": fields,
        }


class ChartedTensor(_TensorOps):
    """A fundamental tensor viewed through a chart map (new chart -> native chart).

    The metric transforms as a covariant 2-tensor.  Connection coefficients are
    computed in the native chart, where the scalar factor is x-independent, and
    transformed as an affine connection; the frozen-velocity formula applied
    directly in the new chart would not be chart covariant, because phi picks
    up x-dependence through the velocity push-forward.
    """

    def __init__(self, native, chart_map):
        if isinstance(chart_map, tuple):
            chart_map = get_map(*chart_map)
        if chart_map.target != native.chart:
            raise ValueError("chart map must end in the native chart of the tensor")
        self.native = native
        self.map = chart_map
        self.base = PulledBack(native.base, chart_map)
        self.phi = native.phi
        self.dual = native.dual

    @property
    def chart(self):
        return self.map.source

    @property
    def time_orientation(self):
        return self.native.time_orientation

    def contains(self, x):
        return self.base.contains(x)

    def _push(self, x, v):
        jac = self.map.jacobian(x)
        y = self.map.forward(x)
        w = [sum(jac[i][j] * v[j] for j in range(4)) for i in range(4)]
        return jac, y, w

    def components(self, x, v):
        jac, y, w = self._push(x, v)
        g = self.native.components(y, w)
        return [
            [
                sum(jac[a][i] * g[a][b] * jac[b][j] for a in range(4) for b in range(4))
                for j in range(4)
            ]
            for i in range(4)
        ]

    def _push_values(self, x, v):
        x, v = as_coords(x), as_coords(v)
        jac = _mat(self.map.jacobian(x))
        y = [ad.value(c) for c in self.map.forward(x)]
        return jac, y, list(jac @ np.array(v))

    def phi_value(self, x, v):
        _, y, w = self._push_values(x, v)
        return self.native.phi_value(y, w)

    def raw_metric(self, x, v):
        jac, y, w = self._push_values(x, v)
        return jac.T @ self.native.raw_metric(y, w) @ jac

    def lagrangian(self, x, v):
        _, y, w = self._push_values(x, v)
        return self.native.lagrangian(y, w)

    def time_field(self, x):
        t = self.native.time_field([ad.value(c) for c in self.map.forward(list(x))])
        if t is None:
            return None
        return _mat(self.map.inverse_jacobian(list(x))) @ t

    def singular_values(self, x, v):
        _, y, w = self._push_values(x, v)
        return self.native.singular_values(y, w)

    def connection(self, x, v):
        x = as_coords(x)
        jac, y, w = self._push_values(x, v)
        gam = self.native.connection(y, w)
        jinv = _mat(self.map.inverse_jacobian(x))
        _, djac = ad.split(self.map.jacobian(ad.seed(x)), 4)
        # djac[m, b, c] = d^2 y^m / dx^b dx^c
        out = np.einsum("am,mnr,nb,rc->abc", jinv, gam, jac, jac) + np.einsum("am,mbc->abc", jinv, djac)
        return 0.5 * (out + out.transpose(0, 2, 1))

    def cartan_closed_form(self, x, v):
        jac, y, w = self._push_values(x, v)
        c = self.native.cartan_closed_form(y, w)
        return np.einsum("amn,ai,mj,nk->ijk", c, jac, jac, jac)

    def describe(self):
        return dict(self.native.describe(), chart=self.chart, native_chart=self.native.chart)


def in_chart(F, chart_id):
    """View ``F`` in another registered chart."""
    if chart_id == F.chart:
        return F
    native = F.native if isinstance(F, ChartedTensor) else F
    return ChartedTensor(native, get_map(chart_id, native.chart))


# ---------------------------------------------------------------- operations


def evaluate_g(F, x, v):
    return SymMatrix4.from_matrix(F.metric(x, v))


def lagrangian(F, x, v):
    return F.lagrangian(x, v)


def classify_causal(F, x, v):
    """(``timelike`` | ``spacelike`` | ``lightlike``, ``future`` | ``past`` | None)."""
    x, v = as_coords(x), as_coords(v)
    L = F.lagrangian(x, v)
    vv = np.array(v)
    if abs(L) <= LIGHTLIKE_REL * (vv @ vv):
        kind = "lightlike"
    else:
        kind = "timelike" if L < 0 else "spacelike"
    T = F.time_field(x)
    if T is None:
        return kind, None
    gT = vv @ F.metric(x, v) @ T
    if gT == 0.0:
        return kind, None
    return kind, "future" if gT < 0 else "past"


def base_null_directions(base, x, n, rng):
    """n random null directions of the base metric at x, both time orientations."""
    frame = orthonormal_frame(base.values(x))
    out = []
    for k in range(n):
        s = rng.normal(size=3)
        s /= np.linalg.norm(s)
        sign = 1.0 if k % 2 == 0 else -1.0
        out.append(frame @ np.concatenate([[sign], s]))
    return out


def regular_velocities(F, x, n, rng, max_spacelike=3.0):
    """Mixed timelike/spacelike velocities at x off the singular locus.

    Built in an h-orthonormal frame as v = e0 + w with |w| drawn from (0, 0.9)
    for timelike and (1.1, max_spacelike) for spacelike samples.
    """
    frame = orthonormal_frame(F.base.values(x))
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > 100 * n:
            raise SingularEvaluation("could not find regular velocity samples")
        timelike = len(out) % 2 == 0
        s = rng.normal(size=3)
        s /= np.linalg.norm(s)
        mag = rng.uniform(0.0, 0.9) if timelike else rng.uniform(1.1, max_spacelike)
        v = frame @ np.concatenate([[1.0], mag * s])
        try:
            F.metric(x, v)
        except (SingularEvaluation, NonFinite):
            continue
        out.append(v)
    return out


@dataclass
class SamplingPlan:
    directions: int = 500
    points: int = 20
    scales: tuple = (0.5, 2.0, 10.0)
    null_directions: int = 1000
    singular_probes: int = 5
    seed: int = 0
    max_entries: int = 200


@dataclass
class SingularLocusReport:
    entries: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    def add(self, x, v, reason, cap):
        self.counts[reason] = self.counts.get(reason, 0) + 1
        if len(self.entries) < cap:
            self.entries.append({"x": [float(c) for c in x], "v": [float(c) for c in v], "reason": reason})

    def to_dict(self):
        return {"counts": dict(sorted(self.counts.items())), "entries": self.entries}


@dataclass
class ValidationReport:
    clauses: dict
    singular_locus: SingularLocusReport
    seed: int
    plan: dict

    @property
    def passed(self):
        return all(c["passed"] for c in self.clauses.values() if not c.get("heuristic"))

    def to_dict(self):
        return {
            "passed": self.passed,
            "seed": self.seed,
            "plan": self.plan,
            "clauses": self.clauses,
            "singular_locus": self.singular_locus.to_dict(),
        }


def failure_reason(F, x, v):
    """Why (x, v) lies outside the regular domain, or None if it is regular."""
    try:
        g = F.metric(x, v)
    except SingularArgument:
        return "denominator-zero"
    except NonRealValue:
        return "non-real"
    except NonFinite:
        return "non-real"
    except BoundViolation:
        return "bound-violation"
    w = np.linalg.eigvalsh(g)
    if np.min(np.abs(w)) < EIGEN_MIN:
        return "degeneracy"
    return None


def singular_probe_directions(F, x, n, rng):
    """Directions inside the denominator-zero set: h-orthogonal to each singular field."""
    h = F.base.values(x)
    frame = orthonormal_frame(h)
    out = []
    for name in F.phi.singular_arguments:
        if name == "chi":
            out.extend(base_null_directions(F.base, x, n, rng))
            continue
        if not name.startswith("theta"):
            continue
        if isinstance(F, ChartedTensor):
            fld = F.native.binding.field_for(name)
            y = [ad.value(c) for c in F.map.forward(list(x))]
            comp = _mat(F.map.inverse_jacobian(list(x))) @ np.array(
                [ad.value(c) for c in fld.components(y, F.native.base)]
            )
        else:
            fld = F.binding.field_for(name)
            comp = np.array([ad.value(c) for c in fld.components(list(x), F.base)])
        hf = h @ comp
        for _ in range(n):
            w = frame @ rng.normal(size=4)
            # remove the component along the covector h(., field), exactly zero where possible
            k = int(np.argmax(np.abs(hf)))
            w[k] = 0.0
            w[k] = -(hf @ w) / hf[k]
            out.append(w)
    return out


def validate(F, plan=None):
    """Check homogeneity, signature, the bound 1 + phi > 0 and cone coincidence.

    The "two connected components" property of the null set is only checked
    heuristically (both signs of the frame time component occur among sampled
    null directions) and is labelled as such.
    """
    plan = plan or SamplingPlan()
    rng = np.random.default_rng(plan.seed)
    locus = SingularLocusReport()
    points = F.base.sample_points(rng, plan.points)

    homog_worst, sig_failures, bound_failures, regular = 0.0, 0, 0, 0
    min_eig = math.inf
    cone_worst, cone_count = 0.0, 0
    signs = set()
    for x in points:
        for _ in range(plan.directions):
            v = random_direction(rng)
            reason = failure_reason(F, x, v)
            if reason is not None:
                locus.add(x, v, reason, plan.max_entries)
                if reason == "bound-violation":
                    bound_failures += 1
                    w = np.linalg.eigvalsh(F.raw_metric(x, v))
                    if int(np.sum(w < 0)) != 1:
                        sig_failures += 1
                continue
            regular += 1
            g = F.metric(x, v)
            w = np.linalg.eigvalsh(g)
            min_eig = min(min_eig, float(np.min(np.abs(w))))
            if int(np.sum(w < 0)) != 1 or np.min(np.abs(w)) < EIGEN_MIN:
                sig_failures += 1
            scale = 1.0 + np.abs(g).max()
            for s in plan.scales:
                try:
                    gs = F.metric(x, s * v)
                except (SingularEvaluation, NonFinite):
                    homog_worst = math.inf
                    continue
                homog_worst = max(homog_worst, float(np.abs(gs - g).max() / scale))
        n_null = max(1, plan.null_directions // max(1, plan.points))
        for v in base_null_directions(F.base, x, n_null, rng):
            try:
                L = F.lagrangian(x, v)
            except (SingularEvaluation, NonFinite) as exc:
                locus.add(x, v, _reason_of(exc), plan.max_entries)
                continue
            cone_count += 1
            cone_worst = max(cone_worst, abs(L) / float(v @ v))
            frame = orthonormal_frame(F.base.values(x))
            signs.add(int(np.sign(np.linalg.solve(frame, v)[0])))
        for v in singular_probe_directions(F, x, plan.singular_probes, rng):
            reason = failure_reason(F, x, v)
            if reason is not None:
                locus.add(x, v, reason, plan.max_entries)

    clauses = {
        "homogeneity": {
            "passed": regular > 0 and homog_worst <= 1e-10,
            "measured": homog_worst,
            "tolerance": 1e-10,
            "detail": "max |g(x, s v) - g(x, v)| / (1 + |g|) over scales",
        },
        "signature": {
            "passed": sig_failures == 0 and regular > 0,
            "measured": sig_failures,
            "min_abs_eigenvalue": None if regular == 0 else min_eig,
            "tolerance": EIGEN_MIN,
            "detail": "samples without exactly one negative eigenvalue of magnitude >= tolerance",
        },
        "bound": {
            "passed": bound_failures == 0,
            "measured": bound_failures,
            "tolerance": 0.0,
            "detail": "samples with 1 + phi <= 0",
        },
        "cone_coincidence": {
            "passed": cone_count > 0 and cone_worst <= CONE_TOL,
            "measured": cone_worst,
            "tolerance": CONE_TOL,
            "detail": "max |L_g| / |v|^2 over base-null directions",
        },
        "null_set_two_components": {
            "passed": signs == {-1, 1},
            "heuristic": True,
            "measured": sorted(signs),
            "detail": "heuristic: null directions of both time orientations were found",
        },
    }
    plan_d = dict(plan.__dict__, scales=list(plan.scales))
    return ValidationReport(clauses, locus, plan.seed, plan_d)


def _reason_of(exc):
    if isinstance(exc, SingularArgument):
        return "denominator-zero"
    if isinstance(exc, BoundViolation):
        return "bound-violation"
    return "non-real"


# ---------------------------------------------------------------- constructors


def flat_deformed(phi_source="exp(p0 * thetaA^2 / thetaB^2) - 1", params=(1.0,), A=(0, 1, 0, 0),
                  B=(1, 0, 0, 0), length_scale=0.0, chart="cartesian"):
    """g = (1 + phi) eta on Minkowski space with constant fields A, B."""
    base = Minkowski()
    binding = ArgumentBinding(
        A=VectorField.constant("cartesian", A), B=VectorField.constant("cartesian", B)
    )
    F = FundamentalTensor(
        base,
        parse(phi_source, params, length_scale),
        binding,
        time_orientation=VectorField.constant("cartesian", (1, 0, 0, 0)),
    )
    return in_chart(F, chart)


def deformed_rw(eps=0.1, scale=ScaleFactor("power", 1.0), phi_source="exp(p0 * thetaA^2 / thetaB^2) - 1",
                params=(1.0,), **kw):
    """Deformed Robertson-Walker tensor with A = (1 - eps r^2)/a^2 d_r and B = d_t."""
    base = RobertsonWalker(eps, scale, **kw)
    binding = ArgumentBinding(
        A=VectorField.from_strings("spherical", ["0", "(1 - eps*r^2)/a^2", "0", "0"]),
        B=VectorField.from_strings("spherical", ["1", "0", "0", "0"]),
    )
    return FundamentalTensor(
        base,
        parse(phi_source, params),
        binding,
        time_orientation=VectorField.from_strings("spherical", ["1", "0", "0", "0"]),
    )
