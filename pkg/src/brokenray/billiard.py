"""Exact broken-ray and periodic-ray tracing.

Intersections are closed form (quadratic for circles, linear for segments),
so traced vertices carry only rounding error.  Hit points are snapped back
onto the boundary piece they were found on, which keeps long traces from
drifting off the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    TAG_E,
    TAG_R,
    Arc,
    BoundaryDatum,
    Domain2D,
    GeometryError,
    Segment,
    UnitSpeedState,
    datum_at_point,
    reflect_direction,
)

MIN_TRAVEL = 1e-12
TANGENT_TOL = 1e-9
DEFAULT_MAX_REFLECTIONS = 10_000
DEFAULT_MAX_LENGTH = 10_000.0


class TracingError(RuntimeError):
    pass


class NoHit(TracingError):
    pass


class CornerHit(TracingError):
    pass


class CapExceeded(TracingError):
    """The trajectory is trapped or too long; it does not belong to the ray family."""


@dataclass(frozen=True)
class BrokenRay:
    vertices: np.ndarray
    data: tuple
    tangential: np.ndarray
    tags: tuple[str, ...] = ()

    @property
    def directions(self) -> np.ndarray:
        d = np.diff(self.vertices, axis=0)
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)

    @property
    def length(self) -> float:
        return float(self.segment_lengths.sum())

    @property
    def n_segments(self) -> int:
        return len(self.vertices) - 1

    def reversed(self) -> "BrokenRay":
        return BrokenRay(self.vertices[::-1].copy(), self.data[::-1], self.tangential[::-1].copy(),
                         self.tags[::-1])


@dataclass(frozen=True)
class DiscRayParams:
    iota: float
    kappa: float
    n: int
    m: int
    alpha: float
    z: float
    d: float


@dataclass(frozen=True)
class PeriodicRay:
    vertices: np.ndarray  # closed: the last vertex repeats the first
    pair: tuple[int, int]
    kind: str
    offset: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1).sum())

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)


def next_hit(domain: Domain2D, state: UnitSpeedState, min_travel: float = MIN_TRAVEL):
    """First boundary intersection along the ray; returns ``(travel_time, datum)``."""
    x, v = state.x, state.v
    best_t, best_piece = math.inf, -1
    for i, piece in enumerate(domain.pieces):
        for t in piece.curve.intersect(x, v, min_travel):
            if t < best_t:
                best_t, best_piece = t, i
    if best_piece < 0:
        raise NoHit(f"no boundary hit from x={tuple(x)} along v={tuple(v)}")
    p = x + best_t * v
    if domain.near_corner(p):
        raise CornerHit(f"ray hits a corner near {tuple(p)}")
    curve = domain.pieces[best_piece].curve
    s, q = curve.project(p)
    tag = domain.tag_at(q)
    datum = BoundaryDatum(q, tag, curve.normal(s), curve.curvature, best_piece, float(s))
    return float(np.linalg.norm(q - x)), datum


def _start_datum(domain: Domain2D, x):
    d, _ = domain.boundary_distance(x)
    if d > 1e-9:
        return None
    return datum_at_point(domain, x)


def trace_broken_ray(domain: Domain2D, start: UnitSpeedState,
                     max_reflections: int = DEFAULT_MAX_REFLECTIONS,
                     max_length: float = DEFAULT_MAX_LENGTH) -> BrokenRay:
    """Follow the billiard flow until the first hit on E.

    R hits reflect by the mirror law; tangential hits keep the direction and
    are flagged.  The start may be an interior point or a boundary point
    with an inward (or tangential) direction.
    """
    x, v = start.x.copy(), start.v.copy()
    first = _start_datum(domain, x)
    if first is not None and float(np.dot(v, first.normal)) > TANGENT_TOL:
        raise GeometryError("start direction points out of the domain")
    vertices = [x.copy()]
    data = [first]
    tags = [first.tag if first is not None else ""]
    tangential = [False]
    length = 0.0
    reflections = 0
    while True:
        t, hit = next_hit(domain, UnitSpeedState(x, v))
        length += t
        x = hit.point
        vn = float(np.dot(v, hit.normal))
        is_tangent = abs(vn) < TANGENT_TOL
        vertices.append(x.copy())
        data.append(hit)
        tags.append(hit.tag)
        tangential.append(is_tangent)
        if hit.tag == TAG_E and not is_tangent:
            break
        if length > max_length:
            raise CapExceeded(f"ray longer than {max_length}")
        reflections += 1
        if reflections > max_reflections:
            raise CapExceeded(f"more than {max_reflections} reflections")
        if not is_tangent:
            v = reflect_direction(v, hit.normal)
            v = v / np.linalg.norm(v)
    return BrokenRay(np.array(vertices), tuple(data), np.array(tangential), tuple(tags))


def _wrap_angle(a: float) -> float:
    twopi = 2 * math.pi
    k = a % twopi
    if twopi - k < 1e-12:
        k = 0.0
    return k


def winding_number(iota: float, kappa: float, n: int, alpha: float) -> int:
    return int(round((n * alpha - kappa + iota) / (2 * math.pi)))


def disc_ray(iota: float, alpha: float, n: int, radius: float = 1.0,
             center: tuple[float, float] = (0.0, 0.0)) -> tuple[BrokenRay, DiscRayParams]:
    """Closed-form broken ray in a disc: vertices at angles ``iota + j*alpha``."""
    if not 0 < alpha < 2 * math.pi:
        raise ValueError("alpha must lie in (0, 2*pi)")
    if n < 1:
        raise ValueError("n must be at least 1")
    ang = iota + alpha * np.arange(n + 1)
    c = np.asarray(center, float)
    vertices = c + radius * np.column_stack([np.cos(ang), np.sin(ang)])
    normals = np.column_stack([np.cos(ang), np.sin(ang)])
    data = tuple(
        BoundaryDatum(vertices[j], TAG_E if j in (0, n) else TAG_R, normals[j], 1.0 / radius)
        for j in range(n + 1)
    )
    kappa = _wrap_angle(iota + n * alpha)
    m = winding_number(iota, kappa, n, alpha)
    params = DiscRayParams(
        iota=iota, kappa=kappa, n=n, m=m, alpha=alpha,
        z=radius * math.cos(alpha / 2), d=2 * radius * abs(math.sin(alpha / 2)),
    )
    ray = BrokenRay(vertices, data, np.zeros(n + 1, dtype=bool),
                    tuple(d.tag for d in data))
    return ray, params


def disc_chord_direction(iota: float, alpha: float) -> np.ndarray:
    """Unit direction of the chord from angle ``iota`` to ``iota + alpha``."""
    a, b = iota, iota + alpha
    d = np.array([math.cos(b) - math.cos(a), math.sin(b) - math.sin(a)])
    return d / np.linalg.norm(d)


def periodic_star_disc(p: int, q: int, theta0: float = 0.0, radius: float = 1.0) -> PeriodicRay:
    """Closed star polygon with rotation pair ``(p, q)`` inscribed in the disc."""
    if not (q >= 2 and 1 <= p < q and math.gcd(p, q) == 1):
        raise ValueError(f"invalid rotation pair ({p}, {q})")
    ang = theta0 + 2 * math.pi * p / q * np.arange(q + 1)
    vertices = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    vertices[-1] = vertices[0]
    return PeriodicRay(vertices, (p, q), "disc_star", theta0,
                       {"z": radius * math.cos(math.pi * p / q)})


def periodic_square(p: int, q: int, offset: float, side: float = 1.0) -> PeriodicRay:
    """Periodic billiard path in the square with slope direction ``(p, q)``.

    The path starts on the bottom side at ``x = offset * side`` (on the left
    side at ``y = offset * side`` for horizontal directions) and is traced
    with the generic tracer until it closes.
    """
    if (p, q) == (0, 0):
        raise ValueError("direction must be non-zero")
    if not 0 <= offset < 1:
        raise ValueError("offset must lie in [0, 1)")
    g = math.gcd(p, q)
    p, q = p // g, q // g
    if q < 0 or (q == 0 and p < 0):
        p, q = -p, -q
    domain = Domain2D.square(side, "RRRR")
    if q != 0:
        x0 = np.array([offset * side, 0.0])
    else:
        x0 = np.array([0.0, offset * side])
    if domain.near_corner(x0):
        raise CornerHit("periodic path starts at a corner")
    v0 = np.array([p, q], dtype=float)
    v0 /= np.linalg.norm(v0)
    x, v = x0.copy(), v0.copy()
    vertices = [x0.copy()]
    cap = 2 * (abs(p) + abs(q)) + 4
    for _ in range(cap):
        _, hit = next_hit(domain, UnitSpeedState(x, v))
        x = hit.point
        vertices.append(x.copy())
        v = reflect_direction(v, hit.normal)
        v /= np.linalg.norm(v)
        if np.linalg.norm(x - x0) < 1e-9 and np.linalg.norm(v - v0) < 1e-9:
            vertices[-1] = x0.copy()
            return PeriodicRay(np.array(vertices), (p, q), "square", offset, {"side": side})
    raise CapExceeded("square path did not close")


def make_family_start(domain: Domain2D, piece: int, t: float, angle: float) -> UnitSpeedState:
    """Boundary start state at arc parameter ``t`` with direction at ``angle``
    from the inward normal (``|angle| < pi/2``)."""
    c = domain.pieces[piece].curve
    x = c.point(t)
    nu = c.normal(t)
    inward = -nu
    ca, sa = math.cos(angle), math.sin(angle)
    v = np.array([ca * inward[0] - sa * inward[1], sa * inward[0] + ca * inward[1]])
    return UnitSpeedState(x, v)


__all__ = [
    "Arc", "Segment", "BrokenRay", "DiscRayParams", "PeriodicRay", "next_hit",
    "trace_broken_ray", "disc_ray", "disc_chord_direction", "periodic_star_disc",
    "periodic_square", "winding_number", "make_family_start", "TracingError", "NoHit",
    "CornerHit", "CapExceeded", "TAG_E", "TAG_R",
]
