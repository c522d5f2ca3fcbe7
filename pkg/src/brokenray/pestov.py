"""Transport functions on the sphere bundle of an annulus and Pestov terms.

The scene is the unit disc with a circular reflecting obstacle (R) and
the outer circle as E.  A point of the sphere bundle is stored in polar
form ``(r, psi, theta)``: position ``r * e(psi)`` and direction
``e(theta)``.  In these coordinates

    X = cos(theta - psi) d/dr + sin(theta - psi) / r * d/dpsi,    V = d/dtheta.

``u^f(x, v)`` integrates ``f`` along the broken ray from ``(x, v)`` until it
leaves through E; it satisfies ``X u^f = -f``.  In the Euclidean plane
(Gaussian curvature zero) the energy identity checked here reads

    ||V X u||^2 = ||X V u||^2 + ||X u||^2 - (kappa V u, V u)_boundary

for ``u`` vanishing on E and even under the reflection on R.  The signed
curvature is ``kappa = -1 / r_in`` on the obstacle, so the last term is
``+ int int |V u(r_in, psi, theta)|^2 dpsi dtheta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import ndimage

from .geometry import Domain2D, GeometryError
from .parallel import pmap
from .transform import ScalarField

EPS_TAN = 1e-3
MASK_DILATION = 2

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class BoundaryConditionError(ValueError):
    pass


@dataclass(frozen=True)
class SphereBundleGrid:
    """Samples ``values[i, j, k] = u(r_i, psi_j, theta_k)``.

    ``r`` includes both boundary radii; ``psi`` and ``theta`` are periodic
    grids starting at 0.  ``mask`` marks cells excluded from norms.
    """

    r: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    r_in: float
    r_out: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    meta: dict = field(default_factory=dict)

    @property
    def h_r(self) -> float:
        return float(self.r[1] - self.r[0])

    @property
    def h_psi(self) -> float:
        return 2 * math.pi / len(self.psi)

    @property
    def h_theta(self) -> float:
        return 2 * math.pi / len(self.theta)

    @property
    def h(self) -> float:
        """Mesh size used in error statements: ``max(h_r, h_theta)``."""
        return max(self.h_r, self.h_theta)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def masked_fraction(self) -> float:
        return float(self.mask.mean())

    def with_values(self, values, mask=None) -> "SphereBundleGrid":
        return replace(self, values=values, mask=self.mask if mask is None else mask)

    def angle_diff(self) -> np.ndarray:
        """``theta - psi`` broadcast to the grid shape (without the r axis)."""
        return self.theta[None, :] - self.psi[:, None]


def make_grid(r_in: float, n_r: int, n_psi: int, n_theta: int, r_out: float = 1.0):
    if min(n_r, n_psi, n_theta) < 4:
        raise ValueError("each grid dimension needs at least 4 points")
    r = np.linspace(r_in, r_out, n_r)
    psi = 2 * math.pi * np.arange(n_psi) / n_psi
    theta = 2 * math.pi * np.arange(n_theta) / n_theta
    return r, psi, theta


def _annulus_params(domain: Domain2D):
    if domain.variant != "annulus":
        raise GeometryError("Pestov experiments need an annulus scene")
    p = domain.params
    tags = [bp.tag for bp in domain.pieces]
    if tags != ["E", "R"]:
        raise GeometryError("expected E on the outer circle and R on the obstacle")
    return float(p["outer_radius"]), float(p["inner_radius"]), tuple(map(float, p["inner_center"]))


def trace_annulus(x, v, r_out: float, r_in: float, center=(0.0, 0.0)):
    """Vectorised broken rays in the annulus (at most one reflection).

    Returns ``(y, z, t1, t2, hit, cos_in)``: reflection point ``y`` (equal
    to ``x`` when there is none), exit point ``z``, segment lengths,
    whether the obstacle is hit and the cosine of the incidence angle.
    """
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    c = np.asarray(center, float)
    w = x - c
    b = np.einsum("...i,...i->...", w, v)
    cc = np.einsum("...i,...i->...", w, w) - r_in * r_in
    disc = b * b - cc
    sq = np.sqrt(np.maximum(disc, 0.0))
    t1 = -b - sq
    hit = (disc > 0) & (b < 0) & (t1 >= -1e-12)
    t1 = np.where(hit, np.maximum(t1, 0.0), 0.0)
    y = x + t1[..., None] * v
    n = (y - c) / r_in
    vn = np.einsum("...i,...i->...", v, n)
    v2 = np.where(hit[..., None], v - 2 * vn[..., None] * n, v)
    yb = np.einsum("...i,...i->...", y, v2)
    yy = np.einsum("...i,...i->...", y, y)
    t2 = -yb + np.sqrt(np.maximum(r_out * r_out - yy + yb * yb, 0.0))
    t2 = np.maximum(t2, 0.0)
    z = y + t2[..., None] * v2
    return y, z, t1, t2, hit, np.where(hit, np.abs(vn), 1.0)


def _segment_integral(f, p0, p1, length, panels):
    """GL integral of ``f`` on segments ``p0 -> p1`` (vectorised over leading axes)."""
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    s = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    pts = p0[..., None, :] + s[:, None] * (p1 - p0)[..., None, :]
    vals = f(pts[..., 0], pts[..., 1])
    return (vals @ w) * length


def build_uf(domain: Domain2D, f: ScalarField | Callable, n_r: int = 32, n_psi: int = 32,
             n_theta: int = 32, panels: int = 6, eps_tan: float = EPS_TAN,
             dilation: int = MASK_DILATION, threads: int = 1) -> SphereBundleGrid:
    """Sample ``u^f`` on the polar sphere-bundle grid of an annulus scene.

    The mask covers cells near the set where ``u^f`` is not smooth: rays
    grazing the obstacle (incidence cosine below ``eps_tan`` or tangency
    passing between neighbouring nodes) and directions tangent to E at the
    outer radius, dilated by ``dilation`` cells.
    """
    r_out, r_in, c = _annulus_params(domain)
    if math.hypot(*c) > 0:
        raise GeometryError("the polar sphere-bundle grid needs a concentric obstacle")
    r, psi, theta = make_grid(r_in, n_r, n_psi, n_theta, r_out)
    ev = np.stack([np.cos(theta), np.sin(theta)], axis=-1)  # (k, 2)

    def row(i):
        x = r[i] * np.stack([np.cos(psi), np.sin(psi)], axis=-1)  # (j, 2)
        X = np.broadcast_to(x[:, None, :], (n_psi, n_theta, 2))
        Vv = np.broadcast_to(ev[None, :, :], (n_psi, n_theta, 2))
        y, z, t1, t2, hit, cos_in = trace_annulus(X, Vv, r_out, r_in, c)
        u = _segment_integral(f, X, y, t1, panels) + _segment_integral(f, y, z, t2, panels)
        return u, hit & (cos_in < eps_tan)

    rows = pmap(row, range(n_r), threads)
    values = np.stack([rw[0] for rw in rows])
    grazing = np.stack([rw[1] for rw in rows])
    mask = _dilate(_singular_mask(r, psi, theta, r_in, r_out, c) | grazing, dilation)
    return SphereBundleGrid(r, psi, theta, values, mask, r_in, r_out, c,
                            {"field": getattr(f, "name", "f"), "panels": panels,
                             "eps_tan": eps_tan, "dilation": dilation,
                             "grazing_cells": int(grazing.sum())})


def _singular_mask(r, psi, theta, r_in, r_out, c):
    """Cells next to the tangency sets of ``u^f``.

    A node is marked when the ray through it and the ray through a grid
    neighbour fall on different sides of a tangency: grazing the obstacle
    (impact parameter crossing ``r_in`` while approaching) or, on the outer
    circle, switching between entering and leaving.
    """
    R = r[:, None, None]
    P = psi[None, :, None]
    T = theta[None, None, :]
    x0 = R * np.cos(P) - c[0]
    x1 = R * np.sin(P) - c[1]
    v0, v1 = np.cos(T), np.sin(T)
    approach = x0 * v0 + x1 * v1 < 0
    impact = np.abs(x0 * v1 - x1 * v0)
    side = np.where(approach & (impact < r_in), 1, 0)
    side = np.broadcast_to(side, (len(r), len(psi), len(theta)))
    mark = _changes(side)
    at_outer = np.zeros(side.shape, bool)
    at_outer[-1] = True
    leaving = np.broadcast_to(np.cos(T - P) >= 0, side.shape).astype(int)
    mark |= at_outer & _changes(leaving)
    return mark


def _changes(a):
    """True where ``a`` differs from a neighbour (periodic in axes 1 and 2)."""
    out = np.zeros(a.shape, bool)
    d = a[1:] != a[:-1]
    out[1:] |= d
    out[:-1] |= d
    for ax in (1, 2):
        out |= a != np.roll(a, 1, axis=ax)
        out |= a != np.roll(a, -1, axis=ax)
    return out


def _dilate(mask, cells):
    if cells <= 0:
        return mask
    st = ndimage.generate_binary_structure(3, 3)
    # periodic in psi and theta: pad by wrapping, dilate, crop
    pad = ((0, 0), (cells, cells), (cells, cells))
    m = np.pad(mask, pad, mode="wrap")
    m = ndimage.binary_dilation(m, st, iterations=cells)
    return m[:, cells:-cells, cells:-cells]


# -- differential operators ---------------------------------------------------


def _d_periodic(u, h, axis):
    return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2 * h)


def apply_X(g: SphereBundleGrid) -> SphereBundleGrid:
    """``X u = cos(theta - psi) u_r + sin(theta - psi) / r * u_psi`` by central
    differences (second-order one-sided at the radial boundaries)."""
    u = g.values
    ur = np.gradient(u, g.r, axis=0, edge_order=2)
    up = _d_periodic(u, g.h_psi, 1)
    phi = g.angle_diff()[None, :, :]
    Xu = np.cos(phi) * ur + np.sin(phi) / g.r[:, None, None] * up
    return g.with_values(Xu, _stencil_mask(g.mask, (0, 1)))


def apply_V(g: SphereBundleGrid) -> SphereBundleGrid:
    """``V u = d u / d theta`` by periodic central differences."""
    return g.with_values(_d_periodic(g.values, g.h_theta, 2), _stencil_mask(g.mask, (2,)))


def _stencil_mask(mask, axes):
    out = mask.copy()
    for ax in axes:
        if ax == 0:
            sh = np.zeros_like(mask)
            sh[1:] |= mask[:-1]
            sh[:-1] |= mask[1:]
            out |= sh
        else:
            out |= np.roll(mask, 1, axis=ax) | np.roll(mask, -1, axis=ax)
    return out


# -- norms and the identity -----------------------------------------------------


def _volume_weights(g: SphereBundleGrid) -> np.ndarray:
    wr = np.full(len(g.r), g.h_r)
    wr[0] *= 0.5
    wr[-1] *= 0.5
    return (wr * g.r)[:, None, None] * g.h_psi * g.h_theta * np.ones(g.shape)


def norm2(g: SphereBundleGrid, values=None, mask=None) -> float:
    vals = g.values if values is None else values
    m = g.mask if mask is None else mask
    w = _volume_weights(g)
    return float(np.sum(np.where(m, 0.0, np.abs(vals) ** 2 * w)))


def reflect_theta(g: SphereBundleGrid, i_r: int) -> np.ndarray:
    """``u(x, rho_x v)`` at radius index ``i_r`` for a concentric obstacle,
    with ``rho_x: theta -> 2 psi + pi - theta``, by periodic linear interpolation in theta."""
    u = g.values[i_r]
    nt = len(g.theta)
    th_ref = (2 * g.psi[:, None] + math.pi - g.theta[None, :]) % (2 * math.pi)
    pos = th_ref / g.h_theta
    k0 = np.floor(pos).astype(int) % nt
    k1 = (k0 + 1) % nt
    t = pos - np.floor(pos)
    rows = np.arange(len(g.psi))[:, None]
    return (1 - t) * u[rows, k0] + t * u[rows, k1]


def even_odd_split(g: SphereBundleGrid, i_r: int = 0):
    """Even and odd parts ``(u_e, u_o)`` of ``u`` on a boundary circle under the reflection."""
    u = g.values[i_r]
    ur = reflect_theta(g, i_r)
    return 0.5 * (u + ur), 0.5 * (u - ur)


@dataclass
class PestovTerms:
    VXu: float
    XVu: float
    Xu: float
    boundary: float  # -(kappa V u, V u) over both boundary circles
    boundary_R: float
    boundary_E: float
    residual: float
    h: float
    masked_fraction: float
    bc_E: float
    bc_R: float
    bc_ok: bool

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in
                ("h", "VXu", "XVu", "Xu", "boundary", "boundary_R", "boundary_E", "residual",
                 "masked_fraction", "bc_E", "bc_R")}


def pestov_report(g: SphereBundleGrid, bc_tol: float | None = None, strict: bool = False) -> PestovTerms:
    """All terms of the energy identity and its residual ``LHS - RHS``.

    Norms use trapezoid weights in ``r`` and skip masked cells.  The
    boundary conditions (``u = 0`` on E, ``u`` even on R) are measured on
    unmasked boundary cells; ``strict`` raises when they fail ``bc_tol``
    (default ``5 h``), otherwise the report flags it.
    """
    if math.hypot(*g.center) > 0:
        raise GeometryError("the term table is implemented for a concentric obstacle")
    Xg = apply_X(g)
    Vg = apply_V(g)
    VX = apply_V(Xg)
    XV = apply_X(Vg)
    mask = VX.mask | XV.mask
    t_vx = norm2(g, VX.values, mask)
    t_xv = norm2(g, XV.values, mask)
    t_x = norm2(g, Xg.values, mask)
    # boundary: kappa = -1/r_in on R (arc length r_in dpsi), kappa = +1/r_out on E
    Vu = Vg.values
    inner = np.where(mask[0], 0.0, Vu[0] ** 2).sum() * g.h_psi * g.h_theta
    outer = np.where(mask[-1], 0.0, Vu[-1] ** 2).sum() * g.h_psi * g.h_theta
    b_R = inner  # -(kappa) * r_in = +1
    b_E = -outer  # -(kappa) * r_out = -1
    rhs = t_xv + t_x + b_R + b_E
    bc_E = float(np.max(np.abs(np.where(g.mask[-1], 0.0, g.values[-1]))))
    odd = np.abs(g.values[0] - reflect_theta(g, 0))
    bc_R = float(np.max(np.where(g.mask[0], 0.0, odd)))
    tol = 5 * g.h if bc_tol is None else bc_tol
    ok = bc_E <= tol and bc_R <= tol
    if strict and not ok:
        raise BoundaryConditionError(
            f"boundary conditions violated: |u| on E up to {bc_E:.3g}, odd part on R up to {bc_R:.3g}")
    return PestovTerms(t_vx, t_xv, t_x, b_R + b_E, b_R, b_E, t_vx - rhs, g.h,
                       float(mask.mean()), bc_E, bc_R, ok)


def synthetic_grid(r_in: float, n_r: int, n_psi: int, n_theta: int,
                   func: Callable | None = None) -> SphereBundleGrid:
    """Grid filled with a smooth ``u(r, psi, theta)`` (nothing masked).

    The default vanishes at ``r = 1`` and is even under the reflection on
    the obstacle, so it meets both boundary conditions.
    """
    r, psi, theta = make_grid(r_in, n_r, n_psi, n_theta)
    R = r[:, None, None]
    P = psi[None, :, None]
    T = theta[None, None, :]
    if func is None:
        func = default_synthetic
    vals = np.broadcast_to(func(R, P, T), (n_r, n_psi, n_theta)).astype(float)
    return SphereBundleGrid(r, psi, theta, vals.copy(), np.zeros(vals.shape, bool), r_in)


def default_synthetic(r, psi, theta):
    phi = theta - psi
    return (1 - r) * (1 + r * r) * (np.sin(phi) + np.cos(2 * phi)) * (1 + 0.3 * np.cos(psi))


# -- refinement studies -------------------------------------------------------


def observed_order(hs, errs) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    hs = np.log(np.asarray(hs, float))
    es = np.log(np.asarray(errs, float))
    return float(np.polyfit(hs, es, 1)[0])


def transport_residual(g: SphereBundleGrid, f: ScalarField | Callable):
    """``X u + f`` on the grid with its mask."""
    Xg = apply_X(g)
    R = g.r[:, None, None]
    P = g.psi[None, :, None]
    x = R * np.cos(P) + 0.0 * g.theta[None, None, :]
    y = R * np.sin(P) + 0.0 * g.theta[None, None, :]
    return Xg.values + np.asarray(f(x, y)), Xg.mask


@dataclass
class RefinementStudy:
    """Transport residual medians on nested grids.

    ``common_median`` is taken over the coarse-grid nodes that are unmasked
    at every level, so each level is measured on the same set of points.
    ``median`` uses every unmasked cell of the level and is reported for
    reference only; its sample set shrinks towards the grazing set as the
    mask narrows.
    """
    levels: list[int]
    h: list[float]
    median: list[float]
    common_median: list[float]
    common_fraction: float
    masked_fraction: list[float]
    bc_error: list[float]

    @property
    def ratios(self) -> list[float]:
        m = self.common_median
        return [m[i] / m[i + 1] if m[i + 1] > 0 else math.inf for i in range(len(m) - 1)]

    @property
    def order(self) -> float:
        return observed_order(self.h, self.common_median)


def transport_refinement(domain: Domain2D, f: ScalarField | Callable, base: int = 32,
                         n_levels: int = 3, threads: int = 1) -> RefinementStudy:
    """Refine ``n x n x n`` grids by doubling ``n`` (``n + 1`` radial nodes keep them nested)."""
    levels = [base * 2 ** i for i in range(n_levels)]
    res_c, mask_c = [], []
    hs, meds, masked, bcs = [], [], [], []
    for n in levels:
        g = build_uf(domain, f, n + 1, n, n, threads=threads)
        res, mask = transport_residual(g, f)
        a = np.abs(res)
        s = n // base
        res_c.append(a[::s, ::s, ::s])
        mask_c.append(mask[::s, ::s, ::s])
        hs.append(g.h)
        meds.append(float(np.median(a[~mask])) if (~mask).any() else math.nan)
        masked.append(g.masked_fraction)
        bcs.append(reflection_bc_error(g))
    common = ~np.logical_or.reduce(mask_c)
    if not common.any():
        raise ValueError("no grid node is unmasked at every level; use a larger base grid")
    cm = [float(np.median(a[common])) for a in res_c]
    return RefinementStudy(levels, hs, meds, cm, float(common.mean()), masked, bcs)


def reflection_bc_error(g: SphereBundleGrid) -> float:
    odd = np.abs(g.values[0] - reflect_theta(g, 0))
    return float(np.max(np.where(g.mask[0], 0.0, odd)))


@dataclass
class StabilityReport:
    Vu_E: float
    f_norm: float
    ratio: float
    grid: tuple[int, int, int]


def stability_probe(domain: Domain2D, f: ScalarField | Callable, n_r: int = 32, n_psi: int = 32,
                    n_theta: int = 32, threads: int = 1) -> StabilityReport:
    """``||V u^f||^2`` over ``E x S^1``, ``||f||^2`` over the annulus and their ratio.

    The ratio ``||f||^2 / ||V u^f||^2`` is a lower bound for any constant in
    a stability estimate of the form ``C ||V u^f||^2 >= ||f||^2``.  It is
    NaN when both norms vanish.
    """
    g = build_uf(domain, f, n_r, n_psi, n_theta, threads=threads)
    Vu = apply_V(g).values[-1]
    vu2 = float(np.sum(Vu ** 2) * g.h_psi * g.h_theta * g.r_out)
    R = g.r[:, None]
    P = g.psi[None, :]
    fv = np.asarray(f(R * np.cos(P), R * np.sin(P)))
    wr = np.full(len(g.r), g.h_r)
    wr[0] *= 0.5
    wr[-1] *= 0.5
    f2 = float(np.sum(fv ** 2 * (wr * g.r)[:, None]) * g.h_psi)
    if vu2 == 0.0:
        ratio = math.nan if f2 == 0.0 else math.inf
    else:
        ratio = f2 / vu2
    return StabilityReport(vu2, f2, ratio, (n_r, n_psi, n_theta))


__all__ = [
    "SphereBundleGrid", "make_grid", "build_uf", "trace_annulus", "apply_X", "apply_V",
    "norm2", "pestov_report", "PestovTerms", "reflect_theta", "even_odd_split",
    "synthetic_grid", "default_synthetic", "observed_order", "transport_residual",
    "reflection_bc_error", "stability_probe", "transport_refinement", "RefinementStudy", "StabilityReport", "BoundaryConditionError",
    "EPS_TAN", "MASK_DILATION",
]
