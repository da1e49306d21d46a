"""Coordinate charts and registered chart maps.

Charts are identified by name.  A :class:`ChartMap` carries the forward map,
its inverse, and both Jacobians written with the dual-aware elementary
functions, so push-forwards and pullbacks can be differentiated in forward
mode.
"""
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from . import dual as ad

R_MIN = 1e-3
THETA_MARGIN = 1e-3


@dataclass(frozen=True)
class Chart:
    id: str
    names: tuple
    contains: Callable[[Sequence[float]], bool]


@dataclass(frozen=True)
class ChartMap:
    """Diffeomorphism from ``source`` coordinates to ``target`` coordinates.

    ``jacobian(x)`` is d(target)/d(source) at the source point ``x`` and
    ``inverse_jacobian(x)`` is d(source)/d(target) at the same source point.
    """

    source: str
    target: str
    forward: Callable
    inverse: Callable
    jacobian: Callable
    inverse_jacobian: Callable

    def inverted(self):
        return ChartMap(
            source=self.target,
            target=self.source,
            forward=self.inverse,
            inverse=self.forward,
            jacobian=lambda y: self.inverse_jacobian(self.inverse(y)),
            inverse_jacobian=lambda y: self.jacobian(self.inverse(y)),
        )


def _finite(x):
    return all(math.isfinite(float(c)) for c in x)


def _spherical_contains(x):
    if not _finite(x):
        return False
    r, th = float(x[1]), float(x[2])
    return r >= R_MIN and THETA_MARGIN <= th <= math.pi - THETA_MARGIN


CHARTS = {
    "cartesian": Chart("cartesian", ("t", "x", "y", "z"), _finite),
    "spherical": Chart("spherical", ("t", "r", "theta", "phi"), _spherical_contains),
}

MAPS = {}


def register_chart(chart):
    CHARTS[chart.id] = chart
    return chart


def register_map(chart_map):
    """Register ``chart_map`` and its inverse."""
    for m in (chart_map, chart_map.inverted()):
        if m.source not in CHARTS or m.target not in CHARTS:
            raise KeyError(f"unregistered chart in map {m.source}->{m.target}")
        MAPS[(m.source, m.target)] = m
    return chart_map


def get_chart(chart_id):
    try:
        return CHARTS[chart_id]
    except KeyError:
        raise KeyError(f"chart {chart_id!r} is not registered") from None


def get_map(source, target):
    if source == target:
        return identity_map(source)
    try:
        return MAPS[(source, target)]
    except KeyError:
        raise KeyError(f"no registered chart map {source!r} -> {target!r}") from None


def identity_map(chart_id):
    eye = lambda x: [[1.0 if i == j else 0.0 for j in range(4)] for i in range(4)]
    same = lambda x: list(x)
    return ChartMap(chart_id, chart_id, same, same, eye, eye)


def _sph_to_cart(x):
    t, r, th, ph = x
    st, ct, sp, cp = ad.sin(th), ad.cos(th), ad.sin(ph), ad.cos(ph)
    return [t, r * st * cp, r * st * sp, r * ct]


def _cart_to_sph(y):
    t, X, Y, Z = y
    rho = ad.sqrt(X * X + Y * Y)
    r = ad.sqrt(X * X + Y * Y + Z * Z)
    return [t, r, ad.atan2(rho, Z), ad.atan2(Y, X)]


def _sph_jacobian(x):
    _, r, th, ph = x
    st, ct, sp, cp = ad.sin(th), ad.cos(th), ad.sin(ph), ad.cos(ph)
    return [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, st * cp, r * ct * cp, -r * st * sp],
        [0.0, st * sp, r * ct * sp, r * st * cp],
        [0.0, ct, -r * st, 0.0],
    ]


def _sph_inverse_jacobian(x):
    _, r, th, ph = x
    st, ct, sp, cp = ad.sin(th), ad.cos(th), ad.sin(ph), ad.cos(ph)
    return [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, st * cp, st * sp, ct],
        [0.0, ct * cp / r, ct * sp / r, -st / r],
        [0.0, -sp / (r * st), cp / (r * st), 0.0],
    ]


SPHERICAL_TO_CARTESIAN = register_map(
    ChartMap(
        source="spherical",
        target="cartesian",
        forward=_sph_to_cart,
        inverse=_cart_to_sph,
        jacobian=_sph_jacobian,
        inverse_jacobian=_sph_inverse_jacobian,
    )
)
CARTESIAN_TO_SPHERICAL = get_map("cartesian", "spherical")
