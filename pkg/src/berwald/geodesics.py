"""Autoparallel integration, proper time, the Euler-Lagrange residual and normal charts."""
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .connection import cartan_definition, require_berwald
from .errors import (
    BoundViolation,
    DegenerateMetric,
    LeftChart,
    NewtonDivergence,
    NonFinite,
    NotAutoparallel,
    NotTimelike,
    SingularEvaluation,
    SingularHit,
    StepUnderflow,
)
from .tensor import Event, as_coords, orthonormal_frame

HALVING_TOL = 1e-9
MIN_STEP = 1e-10
DRIFT_REL = 1e-8
DEFECT_TOL = 1e-6
CSV_COLUMNS = ("t", "x0", "x1", "x2", "x3", "v0", "v1", "v2", "v3", "L", "tau")

_EVAL_ERRORS = (SingularEvaluation, NonFinite, DegenerateMetric)


def _rhs(F, y):
    x, v = y[:4], y[4:]
    gam = F.connection(list(x), list(v))
    return np.concatenate([v, -np.einsum("mnr,n,r->m", gam, v, v)])


def rk4_step(F, y, dt):
    k1 = _rhs(F, y)
    k2 = _rhs(F, y + 0.5 * dt * k1)
    k3 = _rhs(F, y + 0.5 * dt * k2)
    k4 = _rhs(F, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _signs(F, y):
    return {k: np.sign(val) for k, val in F.singular_values(list(y[:4]), list(y[4:])).items()}


@dataclass
class _Stepper:
    F: object
    tol: Optional[float]
    min_step: float
    steps: int = 0
    halvings: int = 0
    max_error: float = 0.0
    smallest: float = math.inf

    def check(self, t, y, signs):
        x, v = list(y[:4]), list(y[4:])
        if not np.all(np.isfinite(y)):
            raise SingularHit("state became non-finite", t, x, v)
        if not self.F.contains(x):
            raise LeftChart("trajectory left the chart domain", t, x, v)
        try:
            now = _signs(self.F, y)
        except _EVAL_ERRORS as exc:
            raise SingularHit(f"singular locus reached: {exc}", t, x, v) from None
        for k, s in now.items():
            if s == 0 or (signs.get(k, s) != s):
                raise SingularHit(f"argument {k} changed sign: trajectory crossed the singular locus", t, x, v)
        return now

    def advance(self, t, y, dt, signs):
        """Advance by dt, halving recursively until the step-doubling test passes."""
        try:
            if self.tol is None:
                out = rk4_step(self.F, y, dt)
                self.steps += 1
                self.smallest = min(self.smallest, dt)
                return out, self.check(t + dt, out, signs)
            full = rk4_step(self.F, y, dt)
            mid = rk4_step(self.F, y, 0.5 * dt)
            half = rk4_step(self.F, mid, 0.5 * dt)
        except _EVAL_ERRORS as exc:
            raise SingularHit(f"evaluation failed inside the step: {exc}", t, list(y[:4]), list(y[4:])) from None
        err = float(np.abs(full - half).max())
        if err <= self.tol:
            self.steps += 1
            self.max_error = max(self.max_error, err)
            self.smallest = min(self.smallest, dt)
            signs = self.check(t + 0.5 * dt, mid, signs)
            return half, self.check(t + dt, half, signs)
        if 0.5 * dt < self.min_step:
            raise StepUnderflow(f"step fell below {self.min_step}", t, list(y[:4]), list(y[4:]))
        self.halvings += 1
        y1, signs = self.advance(t, y, 0.5 * dt, signs)
        return self.advance(t + 0.5 * dt, y1, 0.5 * dt, signs)


@dataclass(frozen=True)
class GeodesicTrajectory:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    L: np.ndarray
    tau: Optional[np.ndarray]
    chart: str
    stats: dict

    @property
    def lagrangian_drift(self):
        return float(np.abs(self.L - self.L[0]).max())

    @property
    def drift_bound(self):
        return DRIFT_REL * (1.0 + abs(float(self.L[0])))

    def samples(self):
        from .tensor import TangentVector

        out = []
        for t, x, v in zip(self.t, self.x, self.v):
            e = Event(self.chart, x)
            out.append((float(t), e, TangentVector(e, v)))
        return out

    def summary(self):
        return {
            "chart": self.chart,
            "samples": int(len(self.t)),
            "t_end": float(self.t[-1]),
            "x_end": self.x[-1].tolist(),
            "v_end": self.v[-1].tolist(),
            "L0": float(self.L[0]),
            "lagrangian_drift": self.lagrangian_drift,
            "drift_bound": self.drift_bound,
            "drift_ok": self.lagrangian_drift <= self.drift_bound,
            "proper_time": None if self.tau is None else float(self.tau[-1]),
            "integrator": dict(self.stats),
        }

    def to_csv(self, stream=None):
        """Write the fixed-header CSV; returns the text when no stream is given."""
        own = stream is None
        stream = io.StringIO() if own else stream
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(self.t)):
            tau = "" if self.tau is None else repr(float(self.tau[i]))
            row = [self.t[i], *self.x[i], *self.v[i], self.L[i]]
            w.writerow([repr(float(c)) for c in row] + [tau])
        return stream.getvalue() if own else None


def _cumulative_tau(t, L):
    if np.any(L >= 0.0):
        return None
    if len(t) < 3:
        return np.concatenate([[0.0], np.cumsum(np.diff(t) * np.sqrt(-L[1:]))])
    return cumulative_simpson(np.sqrt(-L), x=t, initial=0.0)


def integrate_geodesic(F, x0, v0, t_end, step=0.05, tol=HALVING_TOL, min_step=MIN_STEP,
                       certificate=None, check_berwald=True):
    """Integrate x'' + gamma(x, x') x' x' = 0 from (x0, v0) over [0, t_end].

    Classical RK4 on a nominal grid of width ``step``.  Each step is accepted
    when the two-half-step result deviates from the full step by at most
    ``tol``; otherwise it is halved recursively.  ``tol=None`` gives plain
    fixed-step RK4.  Samples are recorded on the nominal grid.
    """
    x0, v0 = as_coords(x0), as_coords(v0)
    if t_end <= 0 or step <= 0:
        raise ValueError("t_end and step must be positive")
    if not F.contains(x0):
        raise LeftChart("initial point outside the chart domain", 0.0, x0, v0)
    if check_berwald:
        require_berwald(F, x0, certificate)
    y = np.array(x0 + v0, dtype=float)
    stepper = _Stepper(F, tol, min_step)
    signs = stepper.check(0.0, y, {})
    n = int(math.ceil(t_end / step - 1e-9))
    grid = [min(k * step, t_end) for k in range(n + 1)]
    ts, ys = [0.0], [y]
    for k in range(n):
        t0, t1 = grid[k], grid[k + 1]
        y, signs = stepper.advance(t0, y, t1 - t0, signs)
        ts.append(t1)
        ys.append(y)
    ys = np.array(ys)
    t = np.array(ts)
    try:
        L = np.array([F.lagrangian(list(r[:4]), list(r[4:])) for r in ys])
    except (SingularEvaluation, NonFinite, BoundViolation) as exc:
        raise SingularHit(f"Lagrangian undefined along the run: {exc}", float(t[-1]),
                          list(ys[-1, :4]), list(ys[-1, 4:])) from None
    stats = {
        "steps": stepper.steps,
        "halvings": stepper.halvings,
        "max_halving_error": stepper.max_error,
        "smallest_step": stepper.smallest,
        "nominal_step": step,
        "tolerance": tol,
    }
    return GeodesicTrajectory(t, ys[:, :4], ys[:, 4:], L, _cumulative_tau(t, L), F.chart, stats)


# ---------------------------------------------------------------- proper time


@dataclass(frozen=True)
class CurveSpec:
    """A parameterized curve: position(s), velocity(s) = d position / ds, s in [s0, s1]."""

    position: Callable
    velocity: Callable
    s0: float
    s1: float
    samples: int = 8001


def proper_time(F, curve):
    """tau = integral of sqrt(-L) by composite Simpson; NotTimelike if any sample has L >= 0."""
    if isinstance(curve, GeodesicTrajectory):
        s, L = curve.t, curve.L
    else:
        s = np.linspace(curve.s0, curve.s1, curve.samples)
        L = np.array([F.lagrangian(as_coords(curve.position(si)), as_coords(curve.velocity(si))) for si in s])
    bad = np.nonzero(L >= 0.0)[0]
    if len(bad):
        raise NotTimelike(f"L >= 0 at parameter {float(s[bad[0]])} (L = {float(L[bad[0]])})")
    return float(simpson(np.sqrt(-L), x=s))


# ---------------------------------------------------------------- Euler-Lagrange residual


@dataclass(frozen=True)
class ELResidual:
    t: np.ndarray
    residual: np.ndarray
    transport: np.ndarray
    transport_oracle: np.ndarray
    finsler_part: np.ndarray
    geodesic_defect: float

    @property
    def max_residual(self):
        return float(np.abs(self.residual).max())

    @property
    def transport_gap(self):
        """max |residual - transport term computed along the samples|."""
        return float(np.abs(self.residual - self.transport_oracle).max())

    def to_dict(self):
        return {
            "max_residual": self.max_residual,
            "max_transport": float(np.abs(self.transport).max()),
            "transport_gap": self.transport_gap,
            "chain_vs_samples_gap": float(np.abs(self.transport - self.transport_oracle).max()),
            "geodesic_defect": self.geodesic_defect,
        }


_STENCIL = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_HALF = 4


def _sample_derivative(arr, i, dt):
    """8th-order central difference of uniformly spaced samples at index i."""
    return np.tensordot(_STENCIL, arr[i - _HALF:i + _HALF + 1], axes=1) / dt


def _cartan_chain_rate(F, x, v, a, step=1e-5):
    """dC/dt = d_x C . v + d_v C . a, derivatives by central differences of forward-mode C."""
    out = np.zeros((4, 4, 4))
    for k in range(4):
        for pt, rate, is_x in ((x, v, True), (v, a, False)):
            if rate[k] == 0.0:
                continue
            h = step * max(1.0, abs(pt[k]))
            plus, minus = list(pt), list(pt)
            plus[k] += h
            minus[k] -= h
            if is_x:
                d = (cartan_definition(F, plus, v) - cartan_definition(F, minus, v)) / (2 * h)
            else:
                d = (cartan_definition(F, x, plus) - cartan_definition(F, x, minus)) / (2 * h)
            out += rate[k] * d
    return out


def el_residual(F, traj, defect_tol=DEFECT_TOL):
    """Euler-Lagrange left-hand side with the Cartan transport term along an autoparallel.

    residual_m = 2 v^r v^n dC_{mrn}/dt + 2 g_{mn} (a^n + Gamma^n_{ab} v^a v^b)

    In the tensor's native chart the second part is
    2 g_{mn} a^n + (2 d_a g_{mn} - d_m g_{an}) v^a v^n; in other charts the
    frozen-velocity derivatives are not covariant and the transformed
    connection is used.  It vanishes on autoparallels, so the residual
    reduces to the transport term.  The acceleration a comes from 8th-order
    differences of the sampled velocities.  The transport term is computed
    twice: by the chain rule through d_x C and d_v C, and by differencing C
    along the samples.
    """
    t = np.asarray(traj.t)
    dts = np.diff(t)
    n_uniform = len(t)
    if len(dts) and not np.allclose(dts, dts[0], rtol=1e-9, atol=0.0):
        n_uniform = int(np.argmax(~np.isclose(dts, dts[0], rtol=1e-9, atol=0.0))) + 1
    if n_uniform < 2 * _HALF + 1:
        raise ValueError(f"need at least {2 * _HALF + 1} uniformly spaced samples")
    dt = float(dts[0])
    X, V = traj.x[:n_uniform], traj.v[:n_uniform]
    C = np.array([cartan_definition(F, list(x), list(v)) for x, v in zip(X, V)])
    idx = range(_HALF, n_uniform - _HALF)
    res, trans, oracle, fins = [], [], [], []
    defect = 0.0
    for i in idx:
        x, v = list(X[i]), np.asarray(V[i])
        a = _sample_derivative(V, i, dt)
        gam = F.connection(x, list(v))
        a_eq = -np.einsum("mnr,n,r->m", gam, v, v)
        defect = max(defect, float(np.abs(a - a_eq).max()))
        fin = 2.0 * F.metric(x, list(v)) @ (a - a_eq)
        dC = _cartan_chain_rate(F, x, list(v), a_eq)
        dC_samples = _sample_derivative(C, i, dt)
        tr = 2.0 * np.einsum("r,n,mrn->m", v, v, dC)
        tr_o = 2.0 * np.einsum("r,n,mrn->m", v, v, dC_samples)
        trans.append(tr)
        oracle.append(tr_o)
        fins.append(fin)
        res.append(tr + fin)
    if defect > defect_tol:
        raise NotAutoparallel(f"geodesic equation violated by {defect:.3e} > {defect_tol}")
    return ELResidual(t[_HALF:n_uniform - _HALF], np.array(res), np.array(trans), np.array(oracle), np.array(fins), defect)


# ---------------------------------------------------------------- exponential map and normal charts


class FixedVelocityConnection:
    """The connection of a Berwald tensor evaluated at one reference velocity.

    Used where the tangent of a curve may pass through the singular locus
    while the coefficients, being velocity independent, stay well defined.
    """

    def __init__(self, F, v_ref):
        self.F = F
        self.v_ref = list(as_coords(v_ref))
        self.chart = F.chart

    def connection(self, x, v):
        return self.F.connection(x, self.v_ref)

    def contains(self, x):
        return self.F.contains(x)


def _exp_coords(F, x0, v, steps):
    v = np.asarray(v, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if not np.any(v):
        return x0.copy()
    y = np.concatenate([x0, v])
    dt = 1.0 / steps
    for k in range(steps):
        try:
            y = rk4_step(F, y, dt)
        except _EVAL_ERRORS as exc:
            raise SingularHit(f"exp map hit the singular locus: {exc}", k * dt, list(y[:4]), list(y[4:])) from None
        if not F.contains(list(y[:4])):
            raise LeftChart("exp map left the chart domain", (k + 1) * dt, list(y[:4]), list(y[4:]))
    return y[:4]


def _exp_extrapolated(F, x0, v, steps):
    """Richardson combination of fixed-step RK4 with steps and 2 steps; smooth in v."""
    coarse = _exp_coords(F, x0, v, steps)
    fine = _exp_coords(F, x0, v, 2 * steps)
    return fine + (fine - coarse) / 15.0


def exp_map(F, x0, v, steps=None, step=1.0 / 16, tol=1e-11):
    """Endpoint at parameter 1 of the autoparallel with x(0) = x0, x'(0) = v.

    ``steps`` selects fixed-step RK4 (smooth in v); otherwise the step-halving
    integrator is used.
    """
    x0, v = as_coords(x0), as_coords(v)
    if steps is not None:
        return _exp_coords(F, x0, v, steps)
    if not any(v):
        return np.array(x0)
    traj = integrate_geodesic(F, x0, v, 1.0, step=step, tol=tol, check_berwald=False)
    return traj.x[-1].copy()


@dataclass
class NormalChart:
    """Chart n -> exp_x0(frame @ n) with damped-Newton inverse.

    The exp map is RK4 with ``steps`` and ``2 steps`` fixed steps combined by
    Richardson extrapolation, so the chart stays smooth in n while the
    integration error no longer bends it at larger radii.
    """

    F: object
    center: Event
    frame: np.ndarray
    steps: int = 16
    delta: float = 5e-3
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    validity_radius: float = 0.0
    center_gamma: float = math.nan
    radius_probes: dict = field(default_factory=dict)

    @property
    def flow(self):
        return FixedVelocityConnection(self.F, self.frame[:, 0])

    def to_coords(self, n):
        return _exp_extrapolated(self.flow, self.center.coords, self.frame @ np.asarray(n, dtype=float), self.steps)

    def _jacobian_fd(self, n, h=1e-6):
        # Newton only needs an approximate Jacobian: use the plain RK4 map
        def plain(m):
            return _exp_coords(self.flow, self.center.coords, self.frame @ m, self.steps)

        x0 = plain(n)
        J = np.zeros((4, 4))
        for a in range(4):
            e = np.zeros(4)
            e[a] = h
            J[:, a] = (plain(n + e) - x0) / h
        return J

    def from_coords(self, x, n0=None):
        """Normal coordinates of x by damped Newton on the exp map."""
        x = np.asarray(as_coords(x))
        n = np.linalg.solve(self.frame, x - np.asarray(self.center.coords)) if n0 is None else np.asarray(n0, float)
        r = self.to_coords(n) - x
        res = float(np.abs(r).max())
        for _ in range(self.newton_max_iter):
            if res <= self.newton_tol:
                return n
            dn = np.linalg.solve(self._jacobian_fd(n), r)
            alpha = 1.0
            while True:
                trial = n - alpha * dn
                try:
                    r_t = self.to_coords(trial) - x
                    res_t = float(np.abs(r_t).max())
                except (LeftChart, SingularHit):
                    res_t = math.inf
                if res_t < res or alpha < 1e-3:
                    break
                alpha *= 0.5
            if not math.isfinite(res_t):
                raise NewtonDivergence("Newton iterate left the domain", n)
            n, r, res = trial, r_t, res_t
        if res <= self.newton_tol:
            return n
        raise NewtonDivergence(f"no convergence in {self.newton_max_iter} iterations (residual {res:.3e})", n)

    def _derivatives(self, n):
        """(x, J, H) of the exp map at n: J[m, a] = dx^m/dn^a, H[m, a, b] = d^2 x^m / dn^a dn^b."""
        n = np.asarray(n, dtype=float)
        d = self.delta
        x = self.to_coords(n)
        J = np.zeros((4, 4))
        H = np.zeros((4, 4, 4))

        def along(u):
            p1, m1 = self.to_coords(n + d * u), self.to_coords(n - d * u)
            p2, m2 = self.to_coords(n + 2 * d * u), self.to_coords(n - 2 * d * u)
            first = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * d)
            second = (-p2 + 16.0 * p1 - 30.0 * x + 16.0 * m1 - m2) / (12.0 * d * d)
            return first, second

        eye = np.eye(4)
        for a in range(4):
            J[:, a], H[:, a, a] = along(eye[a])
        for a in range(4):
            for b in range(a + 1, 4):
                _, s = along(eye[a] + eye[b])
                H[:, a, b] = H[:, b, a] = 0.5 * (s - H[:, a, a] - H[:, b, b])
        return x, J, H

    def christoffel(self, n):
        """Connection coefficients in normal coordinates at n (affine transformation law).

        The tensor is Berwald, so the velocity slot holds the reference velocity.
        """
        x, J, H = self._derivatives(n)
        gam = self.flow.connection(list(x), None)
        return np.linalg.solve(J, (H + np.einsum("mpq,pa,qb->mab", gam, J, J)).reshape(4, 16)).reshape(4, 4, 4)

    def to_dict(self):
        return {
            "center": list(self.center.coords),
            "frame": self.frame.tolist(),
            "steps": self.steps,
            "delta": self.delta,
            "validity_radius": self.validity_radius,
            "center_gamma": self.center_gamma,
            "radius_probes": {repr(k): v for k, v in self.radius_probes.items()},
        }


def build_normal_chart(F, x0, frame=None, v_ref=None, steps=16, delta=5e-3,
                       radii=(0.025, 0.05, 0.1, 0.2, 0.4, 0.8), probes=2, seed=0, certificate=None):
    """Normal chart centred at x0 for a Berwald-certified tensor.

    The frame defaults to a g-orthonormal frame at (x0, v_ref); v_ref defaults
    to the timelike unit vector of the base metric.  The validity radius is
    the largest probed radius (Euclidean norm in normal coordinates) at which
    every Newton round trip converges back to its start within 1e-8; radii are
    probed from the largest down.
    """
    x0 = as_coords(x0)
    require_berwald(F, x0, certificate)
    if frame is None:
        if v_ref is None:
            v_ref = orthonormal_frame(F.base.values(x0))[:, 0]
        frame = orthonormal_frame(F.metric(x0, v_ref))
    frame = np.asarray(frame, dtype=float)
    if abs(np.linalg.det(frame)) < 1e-12:
        raise ValueError("frame vectors are linearly dependent")
    chart = NormalChart(F, Event(F.chart, x0), frame, steps=steps, delta=delta)
    chart.center_gamma = float(np.abs(chart.christoffel(np.zeros(4))).max())
    rng = np.random.default_rng(seed)
    radius = 0.0
    # largest first: the first radius whose probes all round-trip bounds the envelope
    for r in sorted(radii, reverse=True):
        worst = 0.0
        for _ in range(probes):
            u = rng.normal(size=4)
            n = r * u / np.linalg.norm(u)
            try:
                back = chart.from_coords(chart.to_coords(n))
                err = float(np.abs(back - n).max())
            except (NewtonDivergence, LeftChart, SingularHit):
                err = math.inf
            worst = max(worst, err)
            if err > 1e-8:
                break
        chart.radius_probes[r] = worst
        if worst <= 1e-8:
            radius = r
            break
    if radius == 0.0:
        raise NewtonDivergence("Newton inversion fails even at the smallest probed radius", np.zeros(4))
    chart.validity_radius = radius
    return chart
