"""Flat-reflector reductions of the broken ray transform to straight lines.

When every reflector is a straight segment, reflecting the domain across
the mirror at each bounce turns a broken ray into a straight line, and
gluing mirror copies of ``f`` turns its BRT into an X-ray transform.  This
module provides the isometries, the folded (glued) fields, the lift of
the square to the flat torus of side 2, and a filtered back-projection
used to reconstruct from the unfolded data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .billiard import BrokenRay, CornerHit, PeriodicRay, TracingError, trace_broken_ray
from .geometry import TAG_E, Domain2D, UnitSpeedState
from .parallel import pmap
from .transform import (
    QuadratureSpec,
    ScalarField,
    Sinogram,
    _line_crossings,
    _ray_crossings,
    clip_line_to_box,
    path_integral,
)


class UnfoldError(ValueError):
    pass


class NonDivisorAngle(UnfoldError):
    """The cone opening is not ``pi / m``; use :func:`support_theorem_scan`."""


# -- isometries ---------------------------------------------------------------


@dataclass(frozen=True)
class Isometry:
    """Affine map ``p -> A p + b`` with orthogonal ``A``."""

    A: np.ndarray
    b: np.ndarray

    @classmethod
    def identity(cls) -> "Isometry":
        return cls(np.eye(2), np.zeros(2))

    @classmethod
    def reflection(cls, point, normal) -> "Isometry":
        """Mirror across the line through ``point`` with unit ``normal``."""
        n = np.asarray(normal, float)
        n = n / np.linalg.norm(n)
        A = np.eye(2) - 2.0 * np.outer(n, n)
        b = 2.0 * float(np.dot(n, point)) * n
        return cls(A, b)

    @classmethod
    def rotation(cls, angle: float) -> "Isometry":
        c, s = math.cos(angle), math.sin(angle)
        return cls(np.array([[c, -s], [s, c]]), np.zeros(2))

    def __call__(self, p):
        p = np.asarray(p, float)
        return p @ self.A.T + self.b

    def compose(self, inner: "Isometry") -> "Isometry":
        """``self o inner``."""
        return Isometry(self.A @ inner.A, self.A @ inner.b + self.b)

    def inverse(self) -> "Isometry":
        At = self.A.T
        return Isometry(At, -At @ self.b)

    @property
    def orientation(self) -> int:
        return 1 if np.linalg.det(self.A) > 0 else -1


@dataclass(frozen=True)
class UnfoldedRay:
    """A broken ray mapped segment by segment into the plane of glued copies.

    ``images[i]`` is segment ``i`` after the accumulated reflections,
    ``isometries[i]`` the map applied to it and ``copies[i]`` the index of
    the copy of the domain it lands in (``-1`` when not tracked).
    """

    images: np.ndarray  # (n_segments, 2, 2)
    isometries: tuple[Isometry, ...]
    copies: tuple[int, ...]

    @property
    def segment(self) -> np.ndarray:
        return np.array([self.images[0, 0], self.images[-1, 1]])

    @property
    def polyline(self) -> np.ndarray:
        return np.vstack([self.images[:, 0], self.images[-1:, 1]])

    def collinearity(self) -> float:
        """Largest distance of an image vertex from the straight segment."""
        p0, p1 = self.segment
        d = p1 - p0
        L = float(np.linalg.norm(d))
        if L == 0.0:
            return 0.0
        u = d / L
        w = self.polyline - p0
        return float(np.max(np.abs(w[:, 0] * u[1] - w[:, 1] * u[0])))

    def line_params(self) -> tuple[float, float]:
        """``(rho, phi)`` of the supporting line ``x . (cos phi, sin phi) = rho``, ``phi`` in [0, pi)."""
        p0, p1 = self.segment
        d = (p1 - p0) / np.linalg.norm(p1 - p0)
        phi = math.atan2(d[1], d[0]) - math.pi / 2
        e = np.array([math.cos(phi), math.sin(phi)])
        rho = float(np.dot(p0, e))
        phi = phi % (2 * math.pi)
        if phi >= math.pi:
            phi -= math.pi
            rho = -rho
        return rho, phi


def unfold_polyline(ray: BrokenRay, copy_index: Callable | None = None) -> UnfoldedRay:
    """Reflect each segment across the mirror lines of the preceding bounces.

    The mirror at a reflection vertex is the tangent line of the boundary
    there; for flat reflectors the result is a straight segment with the
    same per-segment lengths.  Tangential hits do not turn the ray and are
    passed through unchanged.
    """
    verts = np.asarray(ray.vertices, float)
    T = Isometry.identity()
    images, isos, copies = [], [], []
    for i in range(len(verts) - 1):
        if i > 0 and not bool(ray.tangential[i]):
            T = T.compose(Isometry.reflection(verts[i], ray.data[i].normal))
        images.append(T(verts[i:i + 2]))
        isos.append(T)
        copies.append(int(copy_index(T)) if copy_index is not None else -1)
    return UnfoldedRay(np.array(images), tuple(isos), tuple(copies))


# -- folded fields ------------------------------------------------------------


def _folded_breaks(field: ScalarField, fold: Callable, cell_breaks: Callable):
    """Break function for ``field o fold`` when ``fold`` is an isometry on each cell.

    The segment is cut where it crosses cell boundaries; each piece is then
    mapped by ``fold`` (affine there, so parameters carry over) and the
    source field's own breaks are pulled back.
    """

    def brk(p0, p1):
        p0 = np.asarray(p0, float)
        p1 = np.asarray(p1, float)
        cuts = np.unique(np.concatenate([[0.0], np.asarray(cell_breaks(p0, p1), float), [1.0]]))
        out = [cuts[1:-1]]
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a < 1e-15:
                continue
            qa = fold((p0 + a * (p1 - p0))[None, :])[0]
            qb = fold((p0 + b * (p1 - p0))[None, :])[0]
            inner = field.all_breaks(qa, qb)
            out.append(a + inner * (b - a))
        return np.concatenate(out)

    return brk


def _polar_fold(points, opening: float, copies: int):
    """Fold polar angles into ``[0, opening]`` by alternating reflections."""
    p = np.asarray(points, float)
    r = np.hypot(p[..., 0], p[..., 1])
    beta = np.arctan2(p[..., 1], p[..., 0]) % (2 * math.pi)
    j = np.floor(beta / opening)
    j = np.clip(j, 0, copies - 1)
    local = np.where(j % 2 == 0, beta - j * opening, (j + 1) * opening - beta)
    local = np.clip(local, 0.0, opening)
    inside = beta <= copies * opening + 1e-12
    out = np.stack([r * np.cos(local), r * np.sin(local)], axis=-1)
    return out, inside


@dataclass(frozen=True)
class GluedScene:
    """Mirror copies of a flat-sided domain glued into a larger plane region.

    ``isometries[k]`` maps the source domain onto copy ``k``; ``fold`` maps a
    plane point back to the source (the inverse on each copy), so the glued
    field is ``f o fold``.
    """

    copies: int
    source: Domain2D | None
    isometries: tuple[Isometry, ...]
    fold: Callable
    kind: str
    params: dict = field(default_factory=dict)

    def glue(self, f: ScalarField, support=None, cell_breaks=None, inside=None) -> ScalarField:
        fold = self.fold

        def g(x, y):
            x = np.asarray(x, float)
            y = np.asarray(y, float)
            pts = np.stack(np.broadcast_arrays(x, y), axis=-1)
            q = fold(pts)
            vals = f(q[..., 0], q[..., 1])
            if inside is not None:
                vals = np.where(inside(pts), vals, 0.0)
            return vals

        brk = _folded_breaks(f, lambda p: fold(p), cell_breaks) if cell_breaks else None
        return ScalarField(g, support, brk, f"glued[{self.kind}]({f.name})", f.is_complex)


def cone_gluing(opening: float, copies: int, source: Domain2D | None = None) -> GluedScene:
    """``copies`` sectors of angle ``opening`` around the apex, alternately mirrored."""
    isos = []
    for k in range(copies):
        if k % 2 == 0:
            isos.append(Isometry.rotation(k * opening))
        else:
            # mirror across the x-axis, then rotate so the sector lands on [k, k+1]*opening
            mirror = Isometry(np.diag([1.0, -1.0]), np.zeros(2))
            isos.append(Isometry.rotation((k + 1) * opening).compose(mirror))
    return GluedScene(copies, source, tuple(isos),
                      lambda p: _polar_fold(p, opening, copies)[0], "cone",
                      {"opening": opening})


def _cap_radius(f: ScalarField, default: float = 1.0) -> float:
    if f.support is None:
        return default
    x0, x1, y0, y1 = f.support
    return max(math.hypot(a, b) for a in (x0, x1) for b in (y0, y1))


def glue_cone_field(f: ScalarField, m: int, cap_radius: float | None = None) -> ScalarField:
    """Glue ``2m`` mirror copies of a field on the cone of opening ``pi/m``.

    The result is invariant under reflection across every gluing line
    (the rays at angles ``j*pi/m``).  ``cap_radius`` bounds the support;
    by default it is read from the field's support box.
    """
    if int(m) != m or m < 1:
        raise NonDivisorAngle(f"m={m} is not a positive integer; use support_theorem_scan")
    m = int(m)
    opening = math.pi / m
    scene = cone_gluing(opening, 2 * m)
    c = cap_radius if cap_radius is not None else _cap_radius(f)
    angles = opening * np.arange(2 * m)
    return scene.glue(f, (-c, c, -c, c), lambda p0, p1: _ray_crossings(p0, p1, angles))


def cone_copies_for(opening: float) -> int:
    """Number of glued copies needed to reach a total angle of at least pi."""
    if not 0 < opening <= 2 * math.pi:
        raise ValueError("opening must lie in (0, 2*pi]")
    k = math.pi / opening
    return int(math.ceil(k - 1e-12))


def glue_cone_field_angle(f: ScalarField, opening: float, cap_radius: float | None = None) -> ScalarField:
    """Glue by opening angle; only divisors ``pi / m`` are accepted."""
    m = math.pi / opening
    if abs(m - round(m)) > 1e-12:
        raise NonDivisorAngle(f"opening {opening} is not pi/m")
    return glue_cone_field(f, int(round(m)), cap_radius)


def even_extension(f: ScalarField, check_points: int = 2000, seed: int = 0) -> ScalarField:
    """``f~(x, y) = f(x, |y|)`` for a field supported in the upper half plane."""
    if f.support is not None:
        x0, x1, y0, y1 = f.support
        if y0 < -1e-12:
            raise UnfoldError("field support extends below y = 0")
        support = (x0, x1, -y1, y1)
    else:
        rng = np.random.default_rng(seed)
        pts = rng.uniform([-4.0, -4.0], [4.0, -1e-9], size=(check_points, 2))
        if np.any(np.abs(f(pts[:, 0], pts[:, 1])) > 0):
            raise UnfoldError("field does not vanish in the lower half plane")
        support = None

    def fold(p):
        p = np.asarray(p, float)
        return np.stack([p[..., 0], np.abs(p[..., 1])], axis=-1)

    def g(x, y):
        return f(x, np.abs(y))

    brk = _folded_breaks(f, fold, lambda p0, p1: _line_crossings(p0, p1, (0.0,), 1))
    return ScalarField(g, support, brk, f"even({f.name})", f.is_complex)


# -- cones --------------------------------------------------------------------


def _cone_copy_index(opening: float, copies: int):
    bis = np.array([math.cos(opening / 2), math.sin(opening / 2)])

    def index(T: Isometry) -> int:
        q = T(bis)
        beta = math.atan2(q[1], q[0]) % (2 * math.pi)
        return int(math.floor(beta / opening)) % copies

    return index


def unfold_cone_ray(opening: float, ray: BrokenRay, tol: float = 1e-9) -> UnfoldedRay:
    """Unfold a broken ray in the cone ``0 <= theta <= opening`` into a straight segment.

    Every interior vertex must be a reflection on one of the two cone sides.
    """
    sides = [np.array([0.0, 1.0]), np.array([-math.sin(opening), math.cos(opening)])]
    for i in range(1, len(ray.vertices) - 1):
        if ray.tags and ray.tags[i] == TAG_E:
            raise UnfoldError(f"vertex {i} is an interior E point")
        p = ray.vertices[i]
        if min(abs(float(np.dot(p, s))) for s in sides) > tol:
            raise UnfoldError(f"vertex {i} is not on a cone side")
    copies = max(2 * cone_copies_for(opening), 2)
    return unfold_polyline(ray, _cone_copy_index(opening, copies))


@dataclass
class SupportScanRow:
    rho: float
    phi: float
    value: float
    segment: np.ndarray


@dataclass
class SupportScan:
    opening: float
    copies: int
    rows: list[SupportScanRow]
    excluded: int
    glued: ScalarField

    @property
    def total_angle(self) -> float:
        return self.copies * self.opening


def line_evades_cone(rho: float, phi: float, a0: float, a1: float, margin: float = 1e-9) -> bool:
    """True when the line ``x . e(phi) = rho`` misses the closed convex cone
    spanned by the directions at angles ``a0`` and ``a1`` (opening at most pi)."""
    e = np.array([math.cos(phi), math.sin(phi)])
    s0 = math.cos(a0) * e[0] + math.sin(a0) * e[1]
    s1 = math.cos(a1) * e[0] + math.sin(a1) * e[1]
    if rho > margin:
        return s0 <= 0 and s1 <= 0
    if rho < -margin:
        return s0 >= 0 and s1 >= 0
    return False


def support_theorem_scan(opening: float, f: ScalarField, rhos, phis, cap_radius: float = 1.0,
                         quad: QuadratureSpec | None = None) -> SupportScan:
    """Line data from a cone whose opening is not ``pi / m``.

    ``k = ceil(pi / opening)`` copies are glued, covering a total angle of at
    least pi; the uncovered directions form a convex cone at the apex.
    Only lines missing that cone are emitted, each with the X-ray of the
    glued field, which equals the BRT of the broken ray it folds onto.
    """
    quad = quad or QuadratureSpec()
    k = cone_copies_for(opening)
    total = k * opening
    scene = cone_gluing(opening, k)
    angles = opening * np.arange(k + 1)

    def inside(p):
        return _polar_fold(p, opening, k)[1]

    c = cap_radius
    glued = scene.glue(f, (-c, c, -c, c), lambda p0, p1: _ray_crossings(p0, p1, angles), inside)
    rows, excluded = [], 0
    for phi in np.asarray(phis, float):
        for rho in np.asarray(rhos, float):
            if total >= 2 * math.pi - 1e-12:
                ok = abs(rho) > 1e-9
            else:
                ok = line_evades_cone(rho, phi, total, 2 * math.pi)
            if not ok:
                excluded += 1
                continue
            seg = _disc_chord(rho, phi, c)
            if seg is None:
                continue
            rows.append(SupportScanRow(float(rho), float(phi), path_integral(glued, seg, quad), seg))
    return SupportScan(opening, k, rows, excluded, glued)


def _disc_chord(rho, phi, radius):
    if abs(rho) >= radius:
        return None
    e = np.array([math.cos(phi), math.sin(phi)])
    t = np.array([-e[1], e[0]])
    h = math.sqrt(radius * radius - rho * rho)
    return np.array([rho * e - h * t, rho * e + h * t])


def fold_line_to_cone(segment, opening: float, copies: int) -> UnitSpeedState:
    """Start state in the source cone for a straight chord of the glued disc."""
    p0, p1 = np.asarray(segment, float)
    d = (p1 - p0) / np.linalg.norm(p1 - p0)
    probe = p0 + 1e-7 * d
    beta = math.atan2(probe[1], probe[0]) % (2 * math.pi)
    j = min(int(beta // opening), copies - 1)
    back = cone_gluing(opening, copies).isometries[j].inverse()
    return UnitSpeedState(back(p0), back.A @ d)


# -- square and torus ---------------------------------------------------------


def _tri_fold(t):
    """Fold the real line onto [0, 1] with period 2 (even across integers)."""
    t = np.mod(t, 2.0)
    return np.where(t > 1.0, 2.0 - t, t)


def _integer_crossings(p0, p1):
    xs = np.arange(math.floor(min(p0[0], p1[0])), math.ceil(max(p0[0], p1[0])) + 1)
    ys = np.arange(math.floor(min(p0[1], p1[1])), math.ceil(max(p0[1], p1[1])) + 1)
    return np.concatenate([_line_crossings(p0, p1, xs, 0), _line_crossings(p0, p1, ys, 1)])


def square_scene(side: float = 1.0) -> GluedScene:
    """Four mirror copies of ``[0, 1]^2`` forming the fundamental domain
    ``[0, 2]^2`` of the torus of side 2."""
    isos = []
    for sx in (1, -1):
        for sy in (1, -1):
            A = np.diag([float(sx), float(sy)])
            b = np.array([0.0 if sx > 0 else 2.0 * side, 0.0 if sy > 0 else 2.0 * side])
            isos.append(Isometry(A, b))

    def fold(p):
        p = np.asarray(p, float) / side
        return side * np.stack([_tri_fold(p[..., 0]), _tri_fold(p[..., 1])], axis=-1)

    return GluedScene(4, Domain2D.square(side, "RRRR"), tuple(isos), fold, "torus", {"side": side})


def square_torus_lift(f: ScalarField) -> ScalarField:
    """Periodic even extension of a field on the unit square (torus of side 2)."""
    if f.support is not None:
        x0, x1, y0, y1 = f.support
        if x0 < -1e-12 or y0 < -1e-12 or x1 > 1 + 1e-12 or y1 > 1 + 1e-12:
            raise UnfoldError("field support must lie in the unit square")
    scene = square_scene()
    return scene.glue(f, None, _integer_crossings)


def square_corner_lift(f: ScalarField) -> ScalarField:
    """``f(|x|, |y|)`` on ``[-1, 1]^2``: the four copies of the corner square."""
    scene = cone_gluing(math.pi / 2, 4)

    def fold(p):
        p = np.asarray(p, float)
        return np.abs(p)

    def inside(p):
        return (np.abs(p[..., 0]) <= 1) & (np.abs(p[..., 1]) <= 1)

    g = GluedScene(4, Domain2D.square(1.0, "REER"), scene.isometries, fold, "corner")
    return g.glue(f, (-1.0, 1.0, -1.0, 1.0),
                  lambda p0, p1: np.concatenate([_line_crossings(p0, p1, (0.0,), 0),
                                                 _line_crossings(p0, p1, (0.0,), 1)]), inside)


@dataclass(frozen=True)
class TorusGeodesic:
    start: np.ndarray
    direction: np.ndarray
    length: float
    pair: tuple[int, int]

    @property
    def segment(self) -> np.ndarray:
        return np.array([self.start, self.start + self.length * self.direction])


def lift_periodic_ray(ray: PeriodicRay, tol: float = 1e-9) -> TorusGeodesic:
    """Straight closed geodesic on the torus of side 2 covering a periodic square path."""
    if ray.kind != "square":
        raise UnfoldError("only square periodic rays lift to the torus")
    side = ray.extra.get("side", 1.0)
    v = ray.vertices[1] - ray.vertices[0]
    v = v / np.linalg.norm(v)
    L = ray.length
    disp = L * v / (2 * side)
    if np.max(np.abs(disp - np.round(disp))) > tol:
        raise UnfoldError("lifted path does not close on the torus")
    return TorusGeodesic(ray.vertices[0].copy(), v, L, ray.pair)


def torus_integral(f: ScalarField, geo: TorusGeodesic, quad: QuadratureSpec | None = None):
    return path_integral(square_torus_lift(f), geo.segment, quad)


# -- filtered back-projection -------------------------------------------------


WINDOWS = ("ramlak", "hann", "shepp-logan", "cosine")


def _filter_kernel(n: int, d: float, window: str) -> np.ndarray:
    """Frequency response of the band-limited ramp filter (spatial Ram-Lak
    kernel, transformed), apodised by ``window``; length ``n`` (a power of two)."""
    if window not in WINDOWS:
        raise ValueError(f"unknown window {window!r}; choose from {WINDOWS}")
    idx = np.concatenate([np.arange(0, n // 2 + 1), np.arange(-n // 2 + 1, 0)])
    h = np.zeros(n)
    h[0] = 1.0 / (4 * d * d)
    odd = idx % 2 == 1
    h[odd] = -1.0 / (math.pi * idx[odd] * d) ** 2
    H = np.real(np.fft.fft(h)) * d
    w = np.abs(np.fft.fftfreq(n)) * 2.0  # 0 .. 1 (Nyquist)
    if window == "hann":
        H *= 0.5 * (1 + np.cos(math.pi * w))
    elif window == "shepp-logan":
        H *= np.sinc(w / 2)
    elif window == "cosine":
        H *= np.cos(math.pi * w / 2)
    return H


@dataclass(frozen=True)
class GridImage:
    """Reconstructed samples ``values[i, j]`` at ``(xs[i], ys[j])``."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def as_field(self) -> ScalarField:
        h = float(self.xs[1] - self.xs[0])
        return ScalarField.grid(self.values, (float(self.xs[0]), float(self.ys[0])), h, "fbp")


def _uniform(a, name):
    a = np.asarray(a, float)
    if a.ndim != 1 or len(a) < 2:
        raise ValueError(f"{name} grid needs at least two samples")
    d = np.diff(a)
    if np.any(d <= 0) or np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(d[0])):
        raise ValueError(f"{name} grid must be uniform and increasing")
    return a, float(d[0])


def fbp(sino: Sinogram, xs, ys, window: str = "hann", threads: int = 1, chunk: int = 16) -> GridImage:
    """Filtered back-projection onto the grid ``xs x ys``.

    Angles must be uniform and cover ``[0, pi)`` or ``[0, 2 pi)``; offsets
    must be uniform.  Back-projection interpolates linearly in ``rho``.  The
    angle sum is split into fixed chunks that are added in order, so the
    result does not depend on ``threads``.
    """
    rhos, drho = _uniform(sino.rhos, "rho")
    phis, dphi = _uniform(sino.phis, "phi")
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    vals = np.asarray(sino.values)
    if np.iscomplexobj(vals):
        vals = vals.real
    n_rho = len(rhos)
    n_fft = 1 << int(math.ceil(math.log2(2 * n_rho)))
    H = _filter_kernel(n_fft, drho, window)
    padded = np.zeros((n_fft, len(phis)))
    padded[:n_rho] = vals
    q = np.real(np.fft.ifft(np.fft.fft(padded, axis=0) * H[:, None], axis=0))[:n_rho]
    X, Y = np.meshgrid(xs, ys, indexing="ij")

    def partial(j0):
        acc = np.zeros_like(X)
        for j in range(j0, min(j0 + chunk, len(phis))):
            s = X * math.cos(phis[j]) + Y * math.sin(phis[j])
            acc += np.interp(s, rhos, q[:, j], left=0.0, right=0.0)
        return acc

    parts = pmap(partial, range(0, len(phis), chunk), threads)
    total = np.zeros_like(X)
    for p in parts:
        total += p
    # dphi * sum over [0, pi); over [0, 2 pi) each line appears twice
    span = dphi * len(phis)
    weight = dphi * (0.5 if span > math.pi + 1e-9 else 1.0)
    return GridImage(xs, ys, total * weight, {"window": window, "angles": len(phis),
                                              "offsets": n_rho})


# -- corner square pipeline ---------------------------------------------------


CORNER_SQUARE_TAGS = "REER"  # bottom, right, top, left: reflectors meet at the origin


@dataclass
class CornerReconstruction:
    sinogram: Sinogram
    image: GridImage
    corner_hits: int
    max_line_mismatch: float


def corner_square_brt(f: ScalarField, rho: float, phi: float, domain: Domain2D | None = None,
                      quad: QuadratureSpec | None = None):
    """BRT in the corner square of the broken ray that unfolds onto the line
    ``(rho, phi)`` through ``[-1, 1]^2``.

    Returns ``(ray, value, entry)`` where ``entry`` maps the source square onto
    the copy containing the line's entry point, or ``None`` when the line
    misses the square.
    """
    domain = domain or Domain2D.square(1.0, CORNER_SQUARE_TAGS)
    seg = clip_line_to_box(rho, phi, (-1.0, 1.0, -1.0, 1.0))
    if seg is None or np.linalg.norm(seg[1] - seg[0]) < 1e-12:
        return None
    p0, p1 = seg
    d = (p1 - p0) / np.linalg.norm(p1 - p0)
    sgn = np.where(p0 + 1e-7 * d >= 0, 1.0, -1.0)
    start = UnitSpeedState(np.abs(p0), sgn * d)
    ray = trace_broken_ray(domain, start)
    entry = Isometry(np.diag(sgn), np.zeros(2))  # source square -> copy holding the entry point
    return ray, path_integral(f, ray.vertices, quad), entry


def corner_square_reconstruct(f: ScalarField, n_angles: int = 180, n_offsets: int = 256,
                              grid: int = 256, quad: QuadratureSpec | None = None,
                              window: str = "hann", threads: int = 1) -> CornerReconstruction:
    """Corner square with reflecting sides on the axes: BRT data, unfolding, FBP.

    Offsets sit at half cells of ``[-sqrt 2, sqrt 2]`` so no line passes
    through the reflecting corner at the origin.  Lines through another
    corner cannot be traced; their entries are filled by linear
    interpolation in ``rho`` and counted.
    """
    domain = Domain2D.square(1.0, CORNER_SQUARE_TAGS)
    R = math.sqrt(2.0)
    drho = 2 * R / n_offsets
    rhos = -R + (np.arange(n_offsets) + 0.5) * drho
    phis = math.pi * np.arange(n_angles) / n_angles

    def column(j):
        out = np.zeros(n_offsets)
        bad = np.zeros(n_offsets, dtype=bool)
        worst = 0.0
        for i, rho in enumerate(rhos):
            try:
                res = corner_square_brt(f, rho, phis[j], domain, quad)
            except TracingError:
                bad[i] = True
                continue
            if res is None:
                continue
            ray, val, entry = res
            line = entry(unfold_polyline(ray).polyline)
            # the unfolded polyline must lie on the scan line
            e = np.array([math.cos(phis[j]), math.sin(phis[j])])
            worst = max(worst, float(np.max(np.abs(line @ e - rho))))
            out[i] = val
        if bad.any():
            good = ~bad
            out[bad] = np.interp(rhos[bad], rhos[good], out[good])
        return out, int(bad.sum()), worst

    cols = pmap(column, range(n_angles), threads)
    vals = np.column_stack([c[0] for c in cols])
    hits = sum(c[1] for c in cols)
    worst = max(c[2] for c in cols)
    sino = Sinogram(rhos, phis, vals, {"scene": "corner-square", "corner_hits": hits})
    xs = np.linspace(0.0, 1.0, grid)
    img = fbp(sino, xs, xs, window, threads)
    return CornerReconstruction(sino, img, hits, worst)


__all__ = [
    "Isometry", "UnfoldedRay", "unfold_polyline", "GluedScene", "cone_gluing", "glue_cone_field",
    "glue_cone_field_angle", "even_extension", "unfold_cone_ray", "support_theorem_scan",
    "SupportScan", "line_evades_cone", "cone_copies_for", "fold_line_to_cone",
    "square_scene", "square_torus_lift", "square_corner_lift", "lift_periodic_ray",
    "TorusGeodesic", "torus_integral", "fbp", "GridImage", "corner_square_brt",
    "corner_square_reconstruct", "UnfoldError", "NonDivisorAngle", "CornerHit",
]
