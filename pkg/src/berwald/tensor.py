"""Points, tangent vectors, symmetric 4x4 values and dual-path differentiation.

Scalar fields are callables ``f(x, v)`` on coordinate lists.  Fields wrapped
in :class:`ScalarField` with ``dual=True`` are differentiated in forward mode;
everything else falls back to central differences.
"""
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dual as ad
from .charts import CHARTS, get_map
from .errors import CrossCheckFailed, NonFinite, SingularJacobian

FD_REL_STEP = 1e-5
FD_ABS_FLOOR = 1e-6
FD_SECOND_STEP = 1e-4
CROSS_TOL_FIRST = 1e-6
CROSS_TOL_SECOND = 1e-4
JACOBIAN_DET_MIN = 1e-12


@dataclass(frozen=True)
class Event:
    chart_id: str
    coords: tuple

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if len(coords) != 4:
            raise ValueError("an event has exactly 4 coordinates")
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite coordinates {coords}")
        if self.chart_id not in CHARTS:
            raise KeyError(f"chart {self.chart_id!r} is not registered")
        object.__setattr__(self, "coords", coords)

    @property
    def array(self):
        return np.array(self.coords)


@dataclass(frozen=True)
class TangentVector:
    base: Event
    comps: tuple

    def __post_init__(self):
        comps = tuple(float(c) for c in self.comps)
        if len(comps) != 4:
            raise ValueError("a tangent vector has exactly 4 components")
        if not all(math.isfinite(c) for c in comps):
            raise ValueError(f"non-finite components {comps}")
        if not any(comps):
            raise ValueError("the zero vector is excluded from the slit tangent bundle")
        object.__setattr__(self, "comps", comps)

    @property
    def array(self):
        return np.array(self.comps)


_SYM_INDEX = [(i, j) for i in range(4) for j in range(i, 4)]


@dataclass(frozen=True)
class SymMatrix4:
    """Symmetric 4x4 matrix stored as its 10 upper-triangular entries."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(float(e) for e in self.entries)
        if len(entries) != 10:
            raise ValueError("SymMatrix4 needs 10 entries")
        if not all(math.isfinite(e) for e in entries):
            raise NonFinite(f"non-finite matrix entries {entries}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        s = 0.5 * (m + m.T)
        return cls(tuple(s[i, j] for i, j in _SYM_INDEX))

    def matrix(self):
        out = np.empty((4, 4))
        for e, (i, j) in zip(self.entries, _SYM_INDEX):
            out[i, j] = out[j, i] = e
        return out

    def __getitem__(self, ij):
        i, j = sorted(ij)
        return self.entries[_SYM_INDEX.index((i, j))]


@dataclass(frozen=True)
class DiffResult:
    value: float
    partials_x: tuple
    partials_v: tuple
    method: str


@dataclass(frozen=True)
class ScalarField:
    """A scalar function of (x, v); ``dual`` marks it safe for forward mode."""

    fn: Callable
    dual: bool = True
    name: str = ""

    def __call__(self, x, v):
        return self.fn(x, v)


def as_coords(x):
    if isinstance(x, Event):
        return list(x.coords)
    if isinstance(x, TangentVector):
        return list(x.comps)
    return [float(c) for c in np.asarray(x, dtype=float).ravel()]


def _unpack(at):
    x, v = at
    return as_coords(x), as_coords(v)


def fd_step(c, rel=FD_REL_STEP, floor=FD_ABS_FLOOR):
    return max(rel * abs(c), floor)


def _check_finite(val):
    if not math.isfinite(val):
        raise NonFinite(f"scalar field produced {val}")
    return val


def _forward(f, x, v):
    xs = ad.seed(x, 0, 8)
    vs = ad.seed(v, 4, 8)
    out = f(xs, vs)
    val = _check_finite(ad.value(out))
    grad = ad.gradient(out, 8)
    if not np.all(np.isfinite(grad)):
        raise NonFinite("forward-mode gradient is not finite")
    return val, grad


def _central(f, x, v, kind, mu, h=None):
    pt = x if kind == "x" else v
    h = fd_step(pt[mu]) if h is None else h
    plus, minus = list(pt), list(pt)
    plus[mu] += h
    minus[mu] -= h
    if kind == "x":
        fp, fm = f(plus, v), f(minus, v)
    else:
        fp, fm = f(x, plus), f(x, minus)
    d = (ad.value(fp) - ad.value(fm)) / (2.0 * h)
    return _check_finite(d)


def differentiate(f, at, method="auto"):
    """All eight first partials of ``f`` at ``at = (x, v)``.

    ``method`` is ``"forward"``, ``"central"``, ``"both"`` or ``"auto"``
    (forward mode when the field allows it).  ``"both"`` returns the forward
    result after checking it against central differences.
    """
    x, v = _unpack(at)
    dual_ok = isinstance(f, ScalarField) and f.dual
    if method == "auto":
        method = "forward" if dual_ok else "central"
    if method in ("forward", "both"):
        if not dual_ok:
            raise TypeError("forward mode needs a dual-capable ScalarField")
        val, grad = _forward(f, x, v)
        res = DiffResult(val, tuple(grad[:4]), tuple(grad[4:]), "forward-mode")
        if method == "both":
            fd = differentiate(f, (x, v), "central")
            a = np.array(res.partials_x + res.partials_v)
            b = np.array(fd.partials_x + fd.partials_v)
            gap = np.max(np.abs(a - b))
            if gap > CROSS_TOL_FIRST:
                raise CrossCheckFailed(f"forward vs central differ by {gap:.3e}")
        return res
    if method != "central":
        raise ValueError(f"unknown method {method!r}")
    val = _check_finite(ad.value(f(x, v)))
    px = tuple(_central(f, x, v, "x", mu) for mu in range(4))
    pv = tuple(_central(f, x, v, "v", mu) for mu in range(4))
    return DiffResult(val, px, pv, "central-difference")


def partial_x(f, at, mu, method="auto"):
    return differentiate(f, at, method).partials_x[mu]


def partial_v(f, at, mu, method="auto"):
    return differentiate(f, at, method).partials_v[mu]


def second_partial(f, at, first, second, h=FD_SECOND_STEP):
    """Nested central difference for d^2 f / d(first) d(second).

    ``first`` and ``second`` are ``(kind, index)`` pairs with kind in {"x", "v"}.
    """
    x, v = _unpack(at)

    def shifted(kind, mu, delta, xx, vv):
        if kind == "x":
            xx = list(xx)
            xx[mu] += delta
        else:
            vv = list(vv)
            vv[mu] += delta
        return xx, vv

    (k1, m1), (k2, m2) = first, second
    total = 0.0
    for s1 in (1, -1):
        for s2 in (1, -1):
            xx, vv = shifted(k1, m1, s1 * h, x, v)
            xx, vv = shifted(k2, m2, s2 * h, xx, vv)
            total += s1 * s2 * ad.value(f(xx, vv))
    return _check_finite(total / (4.0 * h * h))


def change_chart(e, v, chart_map):
    """Push an event and tangent vector through a registered chart map."""
    if isinstance(chart_map, tuple):
        chart_map = get_map(*chart_map)
    if e.chart_id != chart_map.source:
        raise ValueError(f"event lives in {e.chart_id!r}, map starts at {chart_map.source!r}")
    x = list(e.coords)
    jac = np.array(chart_map.jacobian(x), dtype=float)
    if abs(np.linalg.det(jac)) < JACOBIAN_DET_MIN:
        raise SingularJacobian(f"|det J| < {JACOBIAN_DET_MIN} at {x}")
    y = [ad.value(c) for c in chart_map.forward(x)]
    e2 = Event(chart_map.target, y)
    return e2, TangentVector(e2, jac @ np.array(v.comps))


def stencil_derivative(fn, point, index, h, order=4):
    """Central-difference derivative of an array-valued ``fn`` along ``index``."""
    point = np.asarray(point, dtype=float)

    def at(delta):
        p = point.copy()
        p[index] += delta
        return np.asarray(fn(p), dtype=float)

    if order == 2:
        return (at(h) - at(-h)) / (2.0 * h)
    if order == 4:
        return (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h)
    raise ValueError("order must be 2 or 4")


def orthonormal_frame(gmat):
    """Columns e_0..e_3 with g(e_a, e_b) = diag(-1, 1, 1, 1); e_0 is timelike."""
    w, q = np.linalg.eigh(np.asarray(gmat, dtype=float))
    order = np.argsort(w)
    w, q = w[order], q[:, order]
    if not (w[0] < 0 < w[1]):
        raise ValueError(f"matrix is not Lorentzian: eigenvalues {w}")
    frame = q / np.sqrt(np.abs(w))
    if frame[0, 0] < 0:
        frame[:, 0] = -frame[:, 0]
    return frame
