"""Boundary determination with near-tangent broken rays.

Along a strictly convex circular boundary arc, a broken ray with a small
chord angle ``alpha`` hugs the arc: its vertices sit on the circle at
spacing ``alpha`` and its chords stay within the sagitta
``radius * (1 - cos(alpha / 2))`` of it.  As ``alpha -> 0`` the BRT over
such rays tends to the integral of ``f`` over the arc.  Differentiating
those arc integrals in the moving end point gives ``f`` on the boundary.

If part of the family's path lies on E, the polyline is a concatenation of
several broken rays (each chord ending on E is a ray of its own); the sum
of their transforms equals the polyline integral, which is what the
oracles below return.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .billiard import BrokenRay, disc_ray
from .geometry import TAG_E, Arc, Domain2D, GeometryError
from .transform import QuadratureSpec, ScalarField, path_integral

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class ConcaveBoundary(GeometryError):
    """Near-tangent rays along a non-convex piece escape into the interior."""


class NoiseFloorError(ArithmeticError):
    """End-point spacing too small for the accuracy of the arc integrals."""


@dataclass(frozen=True)
class CircleArc:
    """The arc ``start <= theta <= end`` of the circle ``center, radius``."""

    center: tuple[float, float]
    radius: float
    start: float
    end: float

    @property
    def span(self) -> float:
        return self.end - self.start

    @property
    def length(self) -> float:
        return self.radius * self.span

    def point(self, theta):
        theta = np.asarray(theta, float)
        return np.stack([self.center[0] + self.radius * np.cos(theta),
                         self.center[1] + self.radius * np.sin(theta)], axis=-1)


def convex_arc(domain: Domain2D, arc: tuple[float, float], piece: int | None = None) -> CircleArc:
    """Validate that ``arc`` (angles about the piece's centre) lies on a
    strictly convex circular part of the boundary.

    ``piece=None`` picks the first circular piece whose circle carries the arc.
    """
    a, b = map(float, arc)
    if not b > a:
        raise ValueError("arc end angle must exceed its start angle")
    candidates = range(domain.n_pieces) if piece is None else [piece]
    circle = None
    for i in candidates:
        c = domain.pieces[i].curve
        if not isinstance(c, Arc):
            if piece is not None:
                raise ConcaveBoundary(f"piece {i} is flat (II = 0); near-tangent rays do not converge")
            continue
        if c.curvature <= 0:
            if piece is not None:
                raise ConcaveBoundary(
                    f"piece {i} has curvature {c.curvature:.4g} <= 0 seen from the domain; "
                    "rays started tangent to it leave it immediately")
            continue
        circle = (tuple(map(float, c.center)), float(c.radius))
        break
    if circle is None:
        raise ConcaveBoundary("no strictly convex circular piece found")
    ctr, rad = circle
    # every point of the arc must sit on a convex piece of this circle
    for th in np.linspace(a, b, 65):
        p = np.array([ctr[0] + rad * math.cos(th), ctr[1] + rad * math.sin(th)])
        ok = False
        for bp in domain.pieces:
            c = bp.curve
            if isinstance(c, Arc) and c.curvature > 0 and abs(c.radius - rad) < 1e-12 \
                    and math.dist(c.center, ctr) < 1e-12 and c.distance(p) < 1e-9:
                ok = True
                break
        if not ok:
            raise ConcaveBoundary(f"arc point at angle {th:.4g} is not on a convex circular piece")
    return CircleArc(ctr, rad, a, b)


def _snap(span: float, alpha: float) -> tuple[int, float]:
    n = max(1, int(math.ceil(span / alpha - 1e-9)))
    return n, span / n


def near_tangent_family(domain: Domain2D, arc: tuple[float, float], alphas: Sequence[float],
                        piece: int | None = None) -> list[tuple[BrokenRay, dict]]:
    """Broken rays with chord angles close to ``alphas`` joining the arc end points.

    Each ray uses ``n = ceil(span / alpha)`` chords with the snapped angle
    ``span / n`` so both end points land exactly on the arc end points.
    The info dict reports the chord count, the snapped angle, the sagitta
    and the uniform distance to the arc after arc-length reparametrisation.
    """
    ca = convex_arc(domain, arc, piece)
    for end in (ca.start, ca.end):
        p = ca.point(end)
        if domain.tag_at(p) != TAG_E:
            raise GeometryError(f"arc end point at angle {end:.4g} is not in the closure of E")
    out = []
    for a in alphas:
        if not a > 0:
            raise ValueError("alpha must be positive")
        n, alpha = _snap(ca.span, a)
        ray, _ = disc_ray(ca.start, alpha, n, ca.radius, ca.center)
        info = {"alpha_requested": float(a), "alpha": alpha, "n": n,
                "sagitta": ca.radius * (1 - math.cos(alpha / 2)),
                "uniform_distance": uniform_distance(ray, ca)}
        out.append((ray, info))
    return out


def uniform_distance(ray: BrokenRay, arc: CircleArc, samples: int = 4001) -> float:
    """``max_t |gamma(t) - sigma(t)|`` with both curves reparametrised by
    normalised arc length on ``[0, 1]``."""
    t = np.linspace(0.0, 1.0, samples)
    lens = ray.segment_lengths
    cum = np.concatenate([[0.0], np.cumsum(lens)]) / lens.sum()
    gx = np.interp(t, cum, ray.vertices[:, 0])
    gy = np.interp(t, cum, ray.vertices[:, 1])
    s = arc.point(arc.start + t * arc.span)
    return float(np.max(np.hypot(gx - s[:, 0], gy - s[:, 1])))


def arc_quadrature(f: ScalarField, arc: CircleArc, panels: int = 64) -> float:
    """Direct composite Gauss-Legendre integral of ``f`` over the arc."""
    edges = np.linspace(arc.start, arc.end, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    th = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel() * arc.radius
    p = arc.point(th)
    return float(np.asarray(f(p[:, 0], p[:, 1])) @ w)


class FieldBRT:
    """BRT oracle backed by quadrature of a known field.

    Rays must start and end in the closure of E; the polyline integral is
    returned (see the module notes for polylines passing through E).
    """

    def __init__(self, f: ScalarField, domain: Domain2D, quad: QuadratureSpec | None = None):
        self.f = f
        self.domain = domain
        self.quad = quad or QuadratureSpec(32)

    def __call__(self, ray: BrokenRay) -> float:
        for p in (ray.vertices[0], ray.vertices[-1]):
            if self.domain.tag_at(p) != TAG_E:
                raise GeometryError(f"ray end point {tuple(p)} is not in the closure of E")
        return path_integral(self.f, ray.vertices, self.quad)


def _as_oracle(source, domain, quad):
    if isinstance(source, ScalarField):
        return FieldBRT(source, domain, quad)
    if callable(source):
        return source
    raise TypeError("source must be a ScalarField or a callable taking a BrokenRay")


@dataclass
class ArcReport:
    """Convergence table: one row per schedule entry ``(alpha, n, value, extrapolated, err)``.

    ``extrapolated`` is the Richardson value in ``alpha^2`` from this row and
    the previous one (NaN on the first row); ``err`` is ``|value - limit|``
    with ``limit`` the last extrapolated value.
    """

    rows: list[tuple[float, int, float, float, float]]
    limit: float
    error_estimate: float
    monotone: bool
    converged: bool
    arc: CircleArc
    info: list[dict] = field(default_factory=list)


def richardson(alphas, values) -> np.ndarray:
    """Pairwise extrapolation assuming ``V(alpha) = V0 + c * alpha^2 + ...``."""
    a2 = np.asarray(alphas, float) ** 2
    v = np.asarray(values, float)
    out = np.full(len(v), np.nan)
    out[1:] = (a2[:-1] * v[1:] - a2[1:] * v[:-1]) / (a2[:-1] - a2[1:])
    return out


def arc_integral_from_brt(source, domain: Domain2D, arc: tuple[float, float],
                          alphas: Sequence[float], piece: int | None = None,
                          quad: QuadratureSpec | None = None, tol: float = 1e-6) -> ArcReport:
    """Estimate the arc integral of ``f`` from BRT values over a near-tangent schedule.

    ``source`` is a field (quadrature oracle) or a callable ``ray -> value``.
    The schedule should decrease; the report flags a schedule whose errors
    do not shrink monotonically or whose last two extrapolations differ by
    more than ``tol``.
    """
    alphas = list(alphas)
    if len(alphas) < 2:
        raise ValueError("need at least two chord angles")
    oracle = _as_oracle(source, domain, quad)
    fam = near_tangent_family(domain, arc, alphas, piece)
    snapped = [info["alpha"] for _, info in fam]
    if np.any(np.diff(snapped) >= 0):
        raise ValueError("alpha schedule must decrease strictly after snapping")
    values = [float(oracle(ray)) for ray, _ in fam]
    ext = richardson(snapped, values)
    limit = float(ext[-1])
    est = float(abs(ext[-1] - ext[-2])) if len(ext) > 2 else float(abs(values[-1] - ext[-1]))
    errs = [abs(v - limit) for v in values]
    monotone = all(e1 < e0 for e0, e1 in zip(errs[:-1], errs[1:]))
    rows = [(float(a), int(info["n"]), v, float(x), float(e))
            for a, (_, info), v, x, e in zip(snapped, fam, values, ext, errs)]
    return ArcReport(rows, limit, est, monotone, monotone and est <= tol,
                     convex_arc(domain, arc, piece), [info for _, info in fam])


@dataclass
class BoundaryValues:
    theta: np.ndarray
    values: np.ndarray
    cumulative: np.ndarray  # arc integrals from the E start point
    noise: float
    report: dict = field(default_factory=dict)


def boundary_values_on_E(source, domain: Domain2D, e_arc: tuple[float, float], resolution: int = 33,
                         alpha: float = math.pi / 128, piece: int | None = None,
                         quad: QuadratureSpec | None = None, max_noise: float = 1e-3
                         ) -> BoundaryValues:
    """Recover ``f`` on an E arc from arc integrals with a moving end point.

    ``F(theta)``, the integral of ``f`` over the arc from ``a`` to ``theta``,
    is estimated at ``resolution`` equally spaced end points by Richardson
    extrapolation of rays with chord angles near ``2 alpha`` and ``alpha``.
    ``f`` is its derivative in arc length (second-order differences).

    The noise of ``F`` is measured on the full arc by a third level at
    ``alpha / 2``.  Dividing by the spacing gives the error it induces in
    ``f``; the run aborts when that exceeds ``max_noise``.
    """
    a, b = map(float, e_arc)
    if resolution < 3:
        raise ValueError("resolution must be at least 3")
    ca = convex_arc(domain, (a, b), piece)
    oracle = _as_oracle(source, domain, quad)
    theta = np.linspace(a, b, resolution)
    step = ca.radius * (theta[1] - theta[0])

    def levels(span, alphas):
        out = []
        for al in alphas:
            n, al_s = _snap(span, al)
            out.append((al_s, float(oracle(disc_ray(a, al_s, n, ca.radius, ca.center)[0]))))
        return out

    F = np.zeros(resolution)
    for j in range(1, resolution):
        (a1, v1), (a2, v2) = levels(theta[j] - a, (2 * alpha, alpha))
        if a2 >= a1:
            raise NoiseFloorError("chord angle too coarse for the end-point spacing")
        F[j] = (a1 * a1 * v2 - a2 * a2 * v1) / (a1 * a1 - a2 * a2)
    (b1, w1), (b2, w2), (b3, w3) = levels(b - a, (2 * alpha, alpha, alpha / 2))
    r12 = (b1 * b1 * w2 - b2 * b2 * w1) / (b1 * b1 - b2 * b2)
    r23 = (b2 * b2 * w3 - b3 * b3 * w2) / (b2 * b2 - b3 * b3)
    noise = abs(r12 - r23)
    if noise / step > max_noise:
        raise NoiseFloorError(
            f"arc-integral noise {noise:.3g} over spacing {step:.3g} exceeds {max_noise:g}")
    vals = np.gradient(F, step, edge_order=2)
    return BoundaryValues(theta, vals, F, noise, {"alpha": alpha, "spacing": step,
                                                  "induced_error": noise / step})


__all__ = [
    "CircleArc", "convex_arc", "near_tangent_family", "uniform_distance", "arc_quadrature",
    "FieldBRT", "ArcReport", "arc_integral_from_brt", "richardson", "boundary_values_on_E",
    "BoundaryValues", "ConcaveBoundary", "NoiseFloorError",
]
