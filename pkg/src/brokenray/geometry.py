"""Planar domains with tagged boundaries, normals, curvature and the reflection law.

Every boundary piece is oriented so that the domain lies on its left; the
outer unit normal is then the right-hand normal of the tangent.  With this
orientation the signed curvature is positive on an outer circle and negative
on the boundary of an interior convex obstacle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TAG_E = "E"
TAG_R = "R"

#: points closer than this (arc length) to a corner count as corner hits
CORNER_TOL = 1e-9
#: distance below which a point is taken to lie on a boundary piece
ON_BOUNDARY_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid geometric input (out-of-range parameter, corner query, ...)."""


class CornerError(GeometryError):
    pass


def reflect_direction(v, nu):
    """Reflect ``v`` in the line orthogonal to the unit normal ``nu``.

    ``v - 2 <nu, v> nu``: the normal component flips, the tangential one is
    kept.  Works on single vectors or on stacks of shape ``(..., 2)``.
    """
    v = np.asarray(v, dtype=float)
    nu = np.asarray(nu, dtype=float)
    dot = np.sum(v * nu, axis=-1, keepdims=True)
    return v - 2.0 * dot * nu


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class Segment:
    p0: tuple[float, float]
    p1: tuple[float, float]

    @property
    def length(self) -> float:
        return math.dist(self.p0, self.p1)

    @property
    def curvature(self) -> float:
        return 0.0

    def _tangent(self):
        return (np.asarray(self.p1, float) - np.asarray(self.p0, float)) / self.length

    def point(self, t: float) -> np.ndarray:
        return np.asarray(self.p0, float) + t * self._tangent()

    def tangent(self, t: float) -> np.ndarray:
        return self._tangent()

    def normal(self, t: float) -> np.ndarray:
        tx, ty = self._tangent()
        return np.array([ty, -tx])

    def start_point(self):
        return np.asarray(self.p0, float)

    def end_point(self):
        return np.asarray(self.p1, float)

    def distance(self, p) -> float:
        a = np.asarray(self.p0, float)
        d = self._tangent()
        s = float(np.clip(np.dot(np.asarray(p, float) - a, d), 0.0, self.length))
        return float(np.linalg.norm(a + s * d - p))

    def project(self, p) -> tuple[float, np.ndarray]:
        a = np.asarray(self.p0, float)
        d = self._tangent()
        s = float(np.clip(np.dot(np.asarray(p, float) - a, d), 0.0, self.length))
        return s, a + s * d

    def intersect(self, x, v, t_min: float):
        """Ray parameters ``t > t_min`` where ``x + t v`` meets the segment."""
        a = np.asarray(self.p0, float)
        d = np.asarray(self.p1, float) - a
        det = v[0] * (-d[1]) + d[0] * v[1]
        if abs(det) < 1e-15 * max(1.0, self.length):
            return []
        w = a - x
        t = (w[0] * (-d[1]) + d[0] * w[1]) / det
        s = (v[0] * w[1] - v[1] * w[0]) / det
        tol = ON_BOUNDARY_TOL / self.length
        if t > t_min and -tol <= s <= 1.0 + tol:
            return [float(t)]
        return []


@dataclass(frozen=True)
class Arc:
    """Circular arc ``center + radius * e(start + sign(sweep) * t / radius)``.

    A positive sweep (counter-clockwise) bounds a domain lying inside the
    circle; a negative sweep bounds an obstacle.
    """

    center: tuple[float, float]
    radius: float
    start: float
    sweep: float

    @property
    def length(self) -> float:
        return self.radius * abs(self.sweep)

    @property
    def orientation(self) -> float:
        return 1.0 if self.sweep > 0 else -1.0

    @property
    def curvature(self) -> float:
        return self.orientation / self.radius

    @property
    def is_full_circle(self) -> bool:
        return abs(abs(self.sweep) - 2 * math.pi) < 1e-14

    def angle(self, t: float) -> float:
        return self.start + self.orientation * t / self.radius

    def point(self, t: float) -> np.ndarray:
        a = self.angle(t)
        return np.asarray(self.center, float) + self.radius * np.array([math.cos(a), math.sin(a)])

    def tangent(self, t: float) -> np.ndarray:
        a = self.angle(t)
        return self.orientation * np.array([-math.sin(a), math.cos(a)])

    def normal(self, t: float) -> np.ndarray:
        a = self.angle(t)
        return self.orientation * np.array([math.cos(a), math.sin(a)])

    def start_point(self):
        return self.point(0.0)

    def end_point(self):
        return self.point(self.length)

    def _arc_param(self, p) -> float:
        """Arc-length parameter of the radial projection of ``p`` (may exceed the range)."""
        c = np.asarray(self.center, float)
        a = math.atan2(p[1] - c[1], p[0] - c[0])
        s = ((a - self.start) * self.orientation) % (2 * math.pi)
        if not self.is_full_circle and s > abs(self.sweep):
            # closer to the start than to the end of the arc: report negative
            if 2 * math.pi - s < s - abs(self.sweep):
                s -= 2 * math.pi
        return s * self.radius

    def project(self, p) -> tuple[float, np.ndarray]:
        t = float(np.clip(self._arc_param(p), 0.0, self.length))
        return t, self.point(t)

    def distance(self, p) -> float:
        _, q = self.project(p)
        return float(np.linalg.norm(q - np.asarray(p, float)))

    def intersect(self, x, v, t_min: float):
        c = np.asarray(self.center, float)
        w = x - c
        b = float(np.dot(w, v))
        cc = float(np.dot(w, w)) - self.radius**2
        disc = b * b - cc
        if disc < 0.0:
            return []
        sq = math.sqrt(disc)
        q = -(b + math.copysign(sq, b)) if b != 0.0 else -sq
        roots = [q]
        if q != 0.0:
            roots.append(cc / q)
        else:
            roots.append(sq)
        out = []
        tol = ON_BOUNDARY_TOL
        for t in sorted(set(roots)):
            if t <= t_min:
                continue
            p = x + t * v
            s = self._arc_param(p)
            if self.is_full_circle or -tol <= s <= self.length + tol:
                out.append(float(t))
        return out


Curve = Segment | Arc


@dataclass(frozen=True)
class BoundaryPiece:
    curve: Curve
    tag: str
    loop: int = 0


@dataclass(frozen=True)
class BoundaryDatum:
    point: np.ndarray
    tag: str
    normal: np.ndarray
    curvature: float
    piece: int = -1
    param: float = 0.0

    @property
    def second_fundamental_form(self) -> float:
        # in 2-D II(T, T) for the unit tangent is the signed curvature itself
        return self.curvature


@dataclass(frozen=True)
class UnitSpeedState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(2)
        v = np.asarray(self.v, dtype=float).reshape(2)
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise GeometryError("direction must be non-zero")
        if abs(n - 1.0) > 1e-12:
            v = v / n
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    def reversed(self) -> "UnitSpeedState":
        return UnitSpeedState(self.x, -self.v)


@dataclass(frozen=True)
class Domain2D:
    """A bounded planar scene: closed boundary loops of tagged pieces.

    ``loops[0]`` is the outer boundary (counter-clockwise); further loops are
    obstacle boundaries (clockwise) or, for custom scenes, holes in
    obstacles.  ``e_points`` are isolated boundary points that belong to the
    set of tomography even though the surrounding piece is a reflector.
    """

    variant: str
    params: dict
    pieces: tuple[BoundaryPiece, ...]
    e_points: tuple[tuple[float, float], ...] = ()
    corners: tuple[tuple[float, float], ...] = field(default=(), compare=False)

    def __post_init__(self):
        for p in self.pieces:
            if p.tag not in (TAG_E, TAG_R):
                raise GeometryError(f"unknown boundary tag {p.tag!r}")
        if not self.corners:
            object.__setattr__(self, "corners", tuple(_find_corners(self.pieces)))

    # -- constructors -------------------------------------------------------

    @classmethod
    def disc(cls, radius: float = 1.0, e_arcs: Sequence[tuple[float, float]] | None = None,
             e_points_angles: Sequence[float] = ()) -> "Domain2D":
        """Disc centred at the origin.

        ``e_arcs`` lists counter-clockwise angle intervals tagged E; the rest
        of the circle is R.  ``None`` means the whole circle is E; an empty
        list means the whole circle is R.
        """
        if radius <= 0:
            raise GeometryError("radius must be positive")
        twopi = 2 * math.pi
        if e_arcs is None:
            pieces = [BoundaryPiece(Arc((0.0, 0.0), radius, 0.0, twopi), TAG_E)]
        else:
            intervals = sorted(((a % twopi), (a % twopi) + (b - a)) for a, b in e_arcs)
            for a, b in intervals:
                if not 0 < b - a <= twopi + 1e-15:
                    raise GeometryError("E arcs need positive extent")
            if not intervals:
                pieces = [BoundaryPiece(Arc((0.0, 0.0), radius, 0.0, twopi), TAG_R)]
            else:
                pieces = []
                for i, (a, b) in enumerate(intervals):
                    pieces.append(BoundaryPiece(Arc((0.0, 0.0), radius, a, min(b - a, twopi)), TAG_E))
                    nxt = intervals[(i + 1) % len(intervals)][0] + (twopi if i + 1 == len(intervals) else 0.0)
                    if nxt - b > 1e-15:
                        pieces.append(BoundaryPiece(Arc((0.0, 0.0), radius, b, nxt - b), TAG_R))
                    elif nxt - b < -1e-12:
                        raise GeometryError("E arcs overlap")
        e_points = tuple((radius * math.cos(a), radius * math.sin(a)) for a in e_points_angles)
        return cls("disc", {"radius": radius}, tuple(pieces), e_points)

    @classmethod
    def square(cls, side: float = 1.0, tags: str = "EEEE") -> "Domain2D":
        """Square ``[0, side]^2``; ``tags`` lists bottom, right, top, left."""
        if len(tags) != 4:
            raise GeometryError("square needs four side tags")
        s = float(side)
        pts = [(0.0, 0.0), (s, 0.0), (s, s), (0.0, s)]
        pieces = tuple(
            BoundaryPiece(Segment(pts[i], pts[(i + 1) % 4]), tags[i].upper()) for i in range(4)
        )
        return cls("square", {"side": s, "tags": tags.upper()}, pieces)

    @classmethod
    def cone_sector(cls, opening_angle: float, cap_radius: float = 1.0,
                    arc_tag: str = TAG_E, side_tag: str = TAG_R) -> "Domain2D":
        """Sector ``0 <= theta <= opening_angle``, ``r <= cap_radius``, apex at the origin."""
        if not 0 < opening_angle <= math.pi:
            raise GeometryError("cone opening angle must lie in (0, pi]")
        c = cap_radius
        end = (c * math.cos(opening_angle), c * math.sin(opening_angle))
        pieces = (
            BoundaryPiece(Segment((0.0, 0.0), (c, 0.0)), side_tag),
            BoundaryPiece(Arc((0.0, 0.0), c, 0.0, opening_angle), arc_tag),
            BoundaryPiece(Segment(end, (0.0, 0.0)), side_tag),
        )
        return cls("cone", {"opening_angle": opening_angle, "cap_radius": c}, pieces)

    @classmethod
    def annulus(cls, outer_radius: float = 1.0, inner_radius: float = 0.3,
                inner_center: tuple[float, float] = (0.0, 0.0),
                outer_tag: str = TAG_E, inner_tag: str = TAG_R) -> "Domain2D":
        """Disc with a circular obstacle removed (the obstacle boundary is a reflector by default)."""
        if math.hypot(*inner_center) + inner_radius >= outer_radius:
            raise GeometryError("obstacle must lie strictly inside the outer circle")
        pieces = (
            BoundaryPiece(Arc((0.0, 0.0), outer_radius, 0.0, 2 * math.pi), outer_tag, 0),
            BoundaryPiece(Arc(tuple(map(float, inner_center)), inner_radius, 0.0, -2 * math.pi), inner_tag, 1),
        )
        return cls("annulus", {"outer_radius": outer_radius, "inner_radius": inner_radius,
                               "inner_center": tuple(inner_center)}, pieces)

    @classmethod
    def two_obstacle(cls, outer_radius: float = 1.0,
                     obstacles: Sequence[Sequence[tuple[float, float]]] | None = None,
                     outer_tag: str = TAG_E, obstacle_tag: str = TAG_R) -> "Domain2D":
        """Disc with two convex polygonal obstacles.

        The default places two rectangles with parallel facing sides, leaving a
        narrow channel between them.
        """
        if obstacles is None:
            obstacles = [
                [(-0.55, -0.35), (-0.55, 0.35), (-0.1, 0.35), (-0.1, -0.35)],
                [(0.1, -0.35), (0.1, 0.35), (0.55, 0.35), (0.55, -0.35)],
            ]
        if len(obstacles) != 2:
            raise GeometryError("two_obstacle needs exactly two obstacles")
        pieces = [BoundaryPiece(Arc((0.0, 0.0), outer_radius, 0.0, 2 * math.pi), outer_tag, 0)]
        for k, poly in enumerate(obstacles, start=1):
            pieces.extend(_polygon_loop(poly, obstacle_tag, k, clockwise=True))
        dom = cls("two_obstacle", {"outer_radius": outer_radius,
                                   "obstacles": [list(map(tuple, p)) for p in obstacles]}, tuple(pieces))
        for poly in obstacles:
            for p in poly:
                if math.hypot(*p) >= outer_radius:
                    raise GeometryError("obstacles must lie strictly inside the outer circle")
        return dom

    @classmethod
    def polygon_scene(cls, loops: Sequence[Sequence[tuple[float, float]]],
                      tags: Sequence[Sequence[str]]) -> "Domain2D":
        """Custom polygonal scene; loops must already be oriented with the domain on the left."""
        pieces = []
        for k, (poly, ltags) in enumerate(zip(loops, tags)):
            n = len(poly)
            if len(ltags) != n:
                raise GeometryError("one tag per polygon edge")
            for i in range(n):
                pieces.append(BoundaryPiece(Segment(tuple(poly[i]), tuple(poly[(i + 1) % n])), ltags[i], k))
        return cls("custom", {"loops": [list(map(tuple, p)) for p in loops]}, tuple(pieces))

    # -- queries --------------------------------------------------------------

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    def bounding_box(self) -> tuple[float, float, float, float]:
        xs, ys = [], []
        for p in self.pieces:
            c = p.curve
            if isinstance(c, Arc):
                xs += [c.center[0] - c.radius, c.center[0] + c.radius]
                ys += [c.center[1] - c.radius, c.center[1] + c.radius]
            else:
                xs += [c.p0[0], c.p1[0]]
                ys += [c.p0[1], c.p1[1]]
        return min(xs), max(xs), min(ys), max(ys)

    def boundary_distance(self, p) -> tuple[float, int]:
        p = np.asarray(p, float)
        best, idx = math.inf, -1
        for i, piece in enumerate(self.pieces):
            d = piece.curve.distance(p)
            if d < best:
                best, idx = d, i
        return best, idx

    def tag_at(self, p) -> str:
        """Boundary tag of a boundary point; the closure of E wins at junctions."""
        p = np.asarray(p, float)
        for q in self.e_points:
            if math.dist(p, q) <= ON_BOUNDARY_TOL:
                return TAG_E
        tags = {piece.tag for piece in self.pieces if piece.curve.distance(p) <= ON_BOUNDARY_TOL}
        if not tags:
            raise GeometryError(f"point {tuple(p)} is not on the boundary")
        return TAG_E if TAG_E in tags else TAG_R

    def near_corner(self, p, tol: float = CORNER_TOL) -> bool:
        return any(math.dist(p, c) <= tol for c in self.corners)

    def contains(self, p) -> bool:
        return contains(self, p)


def _polygon_loop(poly, tag, loop, clockwise):
    pts = [tuple(map(float, q)) for q in poly]
    area = 0.5 * sum(pts[i][0] * pts[(i + 1) % len(pts)][1] - pts[(i + 1) % len(pts)][0] * pts[i][1]
                     for i in range(len(pts)))
    if (area > 0) == clockwise:
        pts = pts[::-1]
    n = len(pts)
    return [BoundaryPiece(Segment(pts[i], pts[(i + 1) % n]), tag, loop) for i in range(n)]


def _find_corners(pieces):
    corners = []
    for i, a in enumerate(pieces):
        if isinstance(a.curve, Arc) and a.curve.is_full_circle:
            continue
        end = a.curve.end_point()
        t_end = a.curve.tangent(a.curve.length)
        for j, b in enumerate(pieces):
            if j == i or b.loop != a.loop:
                continue
            if np.linalg.norm(b.curve.start_point() - end) < 1e-12:
                t_start = b.curve.tangent(0.0)
                cross = t_end[0] * t_start[1] - t_end[1] * t_start[0]
                if abs(cross) > 1e-12 or np.dot(t_end, t_start) < 0:
                    corners.append((float(end[0]), float(end[1])))
    return corners


def boundary_data(domain: Domain2D, piece: int, t: float) -> BoundaryDatum:
    """Point, tag, outer normal and signed curvature at arc parameter ``t`` of a piece."""
    if not 0 <= piece < domain.n_pieces:
        raise GeometryError(f"piece index {piece} out of range")
    bp = domain.pieces[piece]
    c = bp.curve
    if not -1e-12 <= t <= c.length + 1e-12:
        raise GeometryError(f"parameter {t} outside [0, {c.length}]")
    p = c.point(t)
    if domain.near_corner(p):
        raise CornerError(f"boundary data undefined at corner {tuple(p)}")
    tag = bp.tag
    if tag == TAG_R and domain.tag_at(p) == TAG_E:
        tag = TAG_E
    return BoundaryDatum(p, tag, c.normal(t), c.curvature, piece, float(t))


def datum_at_point(domain: Domain2D, p) -> BoundaryDatum:
    """Boundary datum at the boundary point closest to ``p``."""
    d, idx = domain.boundary_distance(p)
    if d > 1e-7:
        raise GeometryError(f"point {tuple(p)} is {d:.3g} away from the boundary")
    t, _ = domain.pieces[idx].curve.project(p)
    c = domain.pieces[idx].curve
    q = c.point(t)
    return BoundaryDatum(q, domain.tag_at(q), c.normal(t), c.curvature, idx, float(t))


def contains(domain: Domain2D, p) -> bool:
    """True iff ``p`` lies in the closed domain (outside every obstacle)."""
    p = np.asarray(p, dtype=float)
    if domain.boundary_distance(p)[0] <= 1e-12:
        return True
    # ray-casting parity in a fixed direction chosen to avoid grid alignment
    v = _unit([0.8191520442889918, 0.5735764363510461 + 0.0123])
    count = 0
    hits = []
    for piece in domain.pieces:
        for t in piece.curve.intersect(p, v, 0.0):
            q = p + t * v
            hits.append((round(q[0], 11), round(q[1], 11)))
    count = len(set(hits))
    return count % 2 == 1
