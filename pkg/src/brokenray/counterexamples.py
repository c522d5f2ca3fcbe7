"""Fields with vanishing broken ray data and a reachability sampler.

Two kinds of witnesses live here.  On the disc, ``a(r) cos(theta)`` has a
zero integral over every periodic star polygon: the chords of a ``(p, q)``
star are rotations of one chord by multiples of ``2 pi p / q``, so the
``cos(theta)`` component picks up a sum of ``q``-th roots of unity.  In
general scenes, any field supported in cells that no sampled ray touches
has zero transform over that sampling.  Such shadows are relative to the
sampling and are reported with its density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .billiard import TracingError, make_family_start, periodic_star_disc, trace_broken_ray
from .geometry import TAG_E, TAG_R, Domain2D, contains
from .parallel import pmap
from .transform import (QuadratureSpec, ScalarField, StartFamily, _circle_crossings,
                        _line_crossings, brt_scan, integrate_along)


class EmptyShadow(ValueError):
    """Raised when a null field is requested but the sampler reached every cell."""


# -- smooth profiles ----------------------------------------------------------


def smooth_step(t):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.asarray(t, dtype=float)

    def psi(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    a = psi(t)
    b = psi(1.0 - t)
    return a / (a + b)


def bump_profile(r0: float, r1: float):
    """``exp(1 - 1 / (1 - s^2))`` on ``(r0, r1)`` rescaled to ``s in (-1, 1)``; peak 1."""
    if not r0 < r1:
        raise ValueError("need r0 < r1")
    mid, half = 0.5 * (r0 + r1), 0.5 * (r1 - r0)

    def a(r):
        s = (np.asarray(r, dtype=float) - mid) / half
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return out

    a.support = (r0, r1)
    return a


def plateau_profile(r0: float = 0.3, r1: float = 0.98, taper: float = 0.02):
    """Equal to 1 on ``[r0, r1]`` with smooth tapers of width ``taper`` outside."""

    def a(r):
        r = np.asarray(r, dtype=float)
        return smooth_step((r - (r0 - taper)) / taper) * smooth_step(((r1 + taper) - r) / taper)

    a.support = (r0 - taper, r1 + taper)
    a.breaks = (r0 - taper, r0, r1, r1 + taper)
    return a


# -- periodic witnesses on the disc ---------------------------------------------


@dataclass
class StarRow:
    p: int
    q: int
    theta0: float
    value: float
    err: float


@dataclass
class PeriodicVerification:
    field: ScalarField
    rows: list[StarRow]
    max_abs: float
    max_err: float
    field_norm: float

    @property
    def vanishes(self) -> bool:
        return self.max_abs <= max(1e-9, 10 * self.max_err)


def _radial_breaks(support, a=None):
    radii = set(r for r in (support or ()) if r > 0)
    radii.update(r for r in getattr(a, "breaks", ()) if r > 0)
    radii = sorted(radii)

    def brk(p0, p1):
        parts = [_circle_crossings(p0, p1, (0.0, 0.0), r) for r in radii]
        return np.concatenate(parts) if parts else np.empty(0)

    return brk


def disc_periodic_null_field(a, support=None, harmonic: int = 1) -> ScalarField:
    """``a(r) cos(harmonic * theta)`` on the unit disc.

    ``support`` (``r0, r1``) adds the circles ``r = r0, r1`` as quadrature
    breaks; profiles built by :func:`bump_profile` carry it already.
    """
    support = support if support is not None else getattr(a, "support", None)
    if support is not None and not 0 <= support[0] < support[1] <= 1:
        raise ValueError("profile support must lie in [0, 1]")
    probe = np.linspace(0, 1, 513)
    if not np.any(np.asarray(a(probe)) != 0):
        raise ValueError("radial profile vanishes identically")

    def f(x, y):
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        return np.where(r <= 1.0, a(np.minimum(r, 1.0)) * np.cos(harmonic * th), 0.0)

    return ScalarField(f, (-1.0, 1.0, -1.0, 1.0), _radial_breaks(support, a),
                       f"a(r)cos({harmonic}theta)")


def radial_control_field(a, support=None) -> ScalarField:
    """The radial field ``a(r)``; it has positive integrals wherever a star meets its support."""
    support = support if support is not None else getattr(a, "support", None)

    def f(x, y):
        r = np.hypot(x, y)
        return np.where(r <= 1.0, a(np.minimum(r, 1.0)), 0.0)

    return ScalarField(f, (-1.0, 1.0, -1.0, 1.0), _radial_breaks(support, a), "a(r)")


def star_pairs(q_max: int):
    """All coprime ``(p, q)`` with ``2 <= q <= q_max`` and ``1 <= p < q``."""
    return [(p, q) for q in range(2, q_max + 1) for p in range(1, q) if math.gcd(p, q) == 1]


def verify_periodic(f: ScalarField, q_max: int = 12, n_phases: int = 8,
                    quad: QuadratureSpec | None = None, threads: int = 1) -> PeriodicVerification:
    """Periodic BRT of ``f`` over every star with ``q <= q_max`` and ``n_phases`` rotations."""
    quad = quad or QuadratureSpec(32)
    jobs = [(p, q, 2 * math.pi * k / n_phases / q)
            for p, q in star_pairs(q_max) for k in range(n_phases)]

    def run(job):
        p, q, th = job
        star = periodic_star_disc(p, q, th)
        val, err = integrate_along(f, star.vertices, quad)
        return StarRow(p, q, th, float(np.real(val)), float(err))

    rows = pmap(run, jobs, threads)
    xs = np.linspace(-1, 1, 201)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    norm = float(np.sqrt(np.sum(np.abs(f(X, Y)) ** 2) * (xs[1] - xs[0]) ** 2))
    return PeriodicVerification(f, rows, max(abs(r.value) for r in rows),
                                max(r.err for r in rows), norm)


# -- reachability sampling ------------------------------------------------------


@dataclass(frozen=True)
class RaySampling:
    """Start points spread over E by arc length, ``n_angles`` directions each.

    Directions are measured from the inward normal and sit at the midpoints
    of ``n_angles`` equal cells of ``(-pi/2, pi/2)``, so no start is tangent.
    """

    n_points: int = 200
    n_angles: int = 50
    max_reflections: int = 2000
    max_length: float = 200.0

    @property
    def n_rays(self) -> int:
        return self.n_points * self.n_angles


def sampling_states(domain: Domain2D, sampling: RaySampling):
    e_pieces = [i for i, p in enumerate(domain.pieces) if p.tag == TAG_E]
    if not e_pieces:
        raise ValueError("the scene has no E boundary to start rays from")
    lengths = np.array([domain.pieces[i].curve.length for i in e_pieces])
    total = float(lengths.sum())
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    s_all = (np.arange(sampling.n_points) + 0.5) / sampling.n_points * total
    angles = -math.pi / 2 + math.pi * (np.arange(sampling.n_angles) + 0.5) / sampling.n_angles
    states = []
    for s in s_all:
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(e_pieces) - 1)
        piece = e_pieces[k]
        for ang in angles:
            states.append(make_family_start(domain, piece, float(s - cum[k]), float(ang)))
    return states, total / sampling.n_points, math.pi / sampling.n_angles


@dataclass
class CellGrid:
    origin: tuple[float, float]
    cell: float
    shape: tuple[int, int]

    @classmethod
    def covering(cls, domain: Domain2D, cell: float) -> "CellGrid":
        x0, x1, y0, y1 = domain.bounding_box()
        nx = max(1, int(math.ceil((x1 - x0) / cell)))
        ny = max(1, int(math.ceil((y1 - y0) / cell)))
        return cls((x0, y0), float(cell), (nx, ny))

    def centers(self):
        xs = self.origin[0] + (np.arange(self.shape[0]) + 0.5) * self.cell
        ys = self.origin[1] + (np.arange(self.shape[1]) + 0.5) * self.cell
        return xs, ys

    def box(self, i: int, j: int):
        x0 = self.origin[0] + i * self.cell
        y0 = self.origin[1] + j * self.cell
        return x0, x0 + self.cell, y0, y0 + self.cell

    def segment_cells(self, p0, p1):
        """Indices of every cell the open segment passes through."""
        p0 = np.asarray(p0, float)
        p1 = np.asarray(p1, float)
        nx, ny = self.shape
        xs = self.origin[0] + self.cell * np.arange(nx + 1)
        ys = self.origin[1] + self.cell * np.arange(ny + 1)
        t = np.unique(np.concatenate([[0.0, 1.0], _line_crossings(p0, p1, xs, 0),
                                      _line_crossings(p0, p1, ys, 1)]))
        mid = 0.5 * (t[:-1] + t[1:])
        pts = p0[None, :] + mid[:, None] * (p1 - p0)[None, :]
        i = np.floor((pts[:, 0] - self.origin[0]) / self.cell).astype(int)
        j = np.floor((pts[:, 1] - self.origin[1]) / self.cell).astype(int)
        keep = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        return i[keep], j[keep]


def segment_meets_box(p0, p1, box, pad: float = 1e-12) -> bool:
    """Liang-Barsky clip test for a segment against an axis-aligned box."""
    x0, x1, y0, y1 = box
    d = np.asarray(p1, float) - np.asarray(p0, float)
    t0, t1 = 0.0, 1.0
    for pk, qk in ((-d[0], p0[0] - (x0 - pad)), (d[0], (x1 + pad) - p0[0]),
                   (-d[1], p0[1] - (y0 - pad)), (d[1], (y1 + pad) - p0[1])):
        if pk == 0:
            if qk < 0:
                return False
            continue
        r = qk / pk
        if pk < 0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 > t1:
            return False
    return True


@dataclass
class ShadowReport:
    grid: CellGrid
    visited: np.ndarray          # bool, cells touched by some traced ray
    first_ray: np.ndarray        # int, smallest id of a ray through the cell (-1 if none)
    interior: np.ndarray         # bool, cell centre inside the domain
    shadow: np.ndarray           # interior & ~visited
    n_rays: int
    n_skipped: int
    skipped: dict
    point_spacing: float
    angle_spacing: float
    sampling: RaySampling
    states: list = field(repr=False, default_factory=list)

    @property
    def shadow_cells(self) -> int:
        return int(self.shadow.sum())

    @property
    def shadow_area(self) -> float:
        return self.shadow_cells * self.grid.cell ** 2

    @property
    def caveat(self) -> str:
        return ("shadow is relative to the sampling: "
                f"{self.n_rays} rays, E spacing {self.point_spacing:.4g}, "
                f"angle spacing {self.angle_spacing:.4g} rad, cell {self.grid.cell:.4g}; "
                "a denser sampling can only shrink it")

    def summary(self) -> dict:
        return {
            "rays": self.n_rays, "skipped": self.n_skipped, "cell": self.grid.cell,
            "interior_cells": int(self.interior.sum()), "visited_cells": int(self.visited.sum()),
            "shadow_cells": self.shadow_cells, "shadow_area": self.shadow_area,
            "point_spacing": self.point_spacing, "angle_spacing": self.angle_spacing,
        }


def reachability_shadow(domain: Domain2D, sampling: RaySampling | None = None,
                        cell: float = 0.05, threads: int = 1, chunk: int = 256) -> ShadowReport:
    """Mark every cell crossed by a broken ray started on E; the rest of the interior is the shadow.

    Rays that fail to trace (corner hits, caps) are skipped and counted by
    error type.  Work is split into fixed chunks; each chunk keeps its own
    first-ray array and the arrays are merged by minimum, so the result
    does not depend on ``threads``.
    """
    sampling = sampling or RaySampling()
    states, ds, dth = sampling_states(domain, sampling)
    grid = CellGrid.covering(domain, cell)
    big = np.iinfo(np.int64).max

    def run(start):
        first = np.full(grid.shape, big, dtype=np.int64)
        skipped = {}
        for rid in range(start, min(start + chunk, len(states))):
            try:
                ray = trace_broken_ray(domain, states[rid], sampling.max_reflections,
                                       sampling.max_length)
            except TracingError as exc:
                name = type(exc).__name__
                skipped[name] = skipped.get(name, 0) + 1
                continue
            for p0, p1 in zip(ray.vertices[:-1], ray.vertices[1:]):
                i, j = grid.segment_cells(p0, p1)
                np.minimum.at(first, (i, j), rid)
        return first, skipped

    parts = pmap(run, range(0, len(states), chunk), threads)
    first = np.full(grid.shape, big, dtype=np.int64)
    skipped: dict = {}
    for arr, sk in parts:
        np.minimum(first, arr, out=first)
        for k, v in sk.items():
            skipped[k] = skipped.get(k, 0) + v
    visited = first != big
    first = np.where(visited, first, -1)
    xs, ys = grid.centers()
    interior = np.array([[contains(domain, (x, y)) and domain.boundary_distance((x, y))[0] > 1e-9
                          for y in ys] for x in xs], dtype=bool)
    shadow = interior & ~visited
    return ShadowReport(grid, visited, first, interior, shadow, len(states),
                        sum(skipped.values()), dict(sorted(skipped.items())), ds, dth, sampling,
                        states)


def spot_check(domain: Domain2D, report: ShadowReport, n_cells: int = 100, seed: int = 0) -> int:
    """Re-trace the stored ray of ``n_cells`` random visited cells; return how many check out."""
    rng = np.random.default_rng(seed)
    idx = np.argwhere(report.visited)
    if len(idx) == 0:
        return 0
    pick = idx[rng.choice(len(idx), size=min(n_cells, len(idx)), replace=False)]
    ok = 0
    for i, j in pick:
        rid = int(report.first_ray[i, j])
        ray = trace_broken_ray(domain, report.states[rid], report.sampling.max_reflections,
                               report.sampling.max_length)
        box = report.grid.box(int(i), int(j))
        if any(segment_meets_box(a, b, box) for a, b in zip(ray.vertices[:-1], ray.vertices[1:])):
            ok += 1
    return ok


# -- null fields in shadows -----------------------------------------------------


@dataclass
class NullField:
    field: ScalarField
    center: tuple[float, float]
    radius: float
    rows: list
    max_abs: float
    field_norm: float
    report: ShadowReport = field(repr=False)


def bump_field(center, radius: float, amplitude: float = 1.0) -> ScalarField:
    """Smooth radial bump ``amplitude * exp(1 - 1/(1 - s^2))``, ``s = |x - c| / radius``."""
    cx, cy = map(float, center)

    def f(x, y):
        s2 = ((x - cx) ** 2 + (y - cy) ** 2) / (radius * radius)
        out = np.zeros(np.broadcast(x, y).shape)
        inside = s2 < 1
        out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
        return out

    return ScalarField(f, (cx - radius, cx + radius, cy - radius, cy + radius),
                       lambda p0, p1: _circle_crossings(p0, p1, (cx, cy), radius),
                       f"bump({cx:.4g},{cy:.4g},{radius:.4g})")


def null_field_from_shadow(domain: Domain2D, report: ShadowReport, amplitude: float = 1.0,
                           quad: QuadratureSpec | None = None, threads: int = 1) -> NullField:
    """Bump centred at the shadow cell farthest from any non-shadow cell, verified by a rescan.

    The bump radius is the Euclidean distance transform value minus half a
    cell, shrunk by 10%, so its disc lies inside the union of shadow cells.
    """
    if not report.shadow.any():
        raise EmptyShadow("the sampled rays reach every interior cell; no shadow to support a field")
    dist = ndimage.distance_transform_edt(report.shadow)
    i, j = np.unravel_index(int(np.argmax(dist)), dist.shape)
    radius = 0.9 * (float(dist[i, j]) - 0.5) * report.grid.cell
    if radius <= 0:
        radius = 0.45 * report.grid.cell
    xs, ys = report.grid.centers()
    center = (float(xs[i]), float(ys[j]))
    f = bump_field(center, radius, amplitude)
    rows = brt_scan(domain, f, StartFamily(report.states, report.sampling.max_reflections,
                                           report.sampling.max_length), quad, threads)
    vals = [abs(r.value) for r in rows if r.status == "ok"]
    g = np.linspace(-radius, radius, 101)
    X, Y = np.meshgrid(center[0] + g, center[1] + g, indexing="ij")
    norm = float(np.sqrt(np.sum(f(X, Y) ** 2)) * (g[1] - g[0]))
    return NullField(f, center, radius, rows, max(vals) if vals else 0.0, norm, report)


# -- scenes ---------------------------------------------------------------------


def sealed_pocket_scene(outer: float = 1.0, wall: tuple[float, float] = (0.6, 0.4)) -> Domain2D:
    """Square ``[-outer, outer]^2`` with E sides around a square ring obstacle.

    The ring's outer wall faces the main region; its inner wall (tagged R)
    encloses a pocket that no ray from E can enter.
    """
    a, b = wall
    if not outer > a > b > 0:
        raise ValueError("need outer > wall[0] > wall[1] > 0")
    outer_loop = [(-outer, -outer), (outer, -outer), (outer, outer), (-outer, outer)]
    ring_out = [(-a, -a), (-a, a), (a, a), (a, -a)]          # clockwise
    pocket = [(-b, -b), (b, -b), (b, b), (-b, b)]             # counter-clockwise
    dom = Domain2D.polygon_scene([outer_loop, ring_out, pocket],
                                 [[TAG_E] * 4, [TAG_R] * 4, [TAG_R] * 4])
    return dom


__all__ = [
    "EmptyShadow", "smooth_step", "bump_profile", "plateau_profile", "disc_periodic_null_field",
    "radial_control_field", "star_pairs", "verify_periodic", "PeriodicVerification", "StarRow",
    "RaySampling", "sampling_states", "CellGrid", "reachability_shadow", "ShadowReport",
    "spot_check", "segment_meets_box", "NullField", "bump_field", "null_field_from_shadow",
    "sealed_pocket_scene",
]
