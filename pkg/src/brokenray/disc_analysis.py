"""Fourier-Abel analysis of the broken ray transform in the unit disc.

Writing ``f(r, theta) = sum_k exp(i k theta) a_k(r)``, a chord whose midpoint
direction is ``phi`` and whose distance to the centre is ``z`` picks up
``exp(i k phi) A_|k| a_k(z)`` from the k-th component, where ``A_k`` is the
generalised Abel transform.  A broken ray with ``n`` chords rotated by
``alpha`` therefore sees ``A_|k| a_k(z)`` times the phase sum
``sum_j exp(i k (iota + (j + 1/2) alpha))``.  The two recovery pipelines
below exploit this:

* :func:`recover_radial` -- many reflections average out every ``k != 0``
  component, leaving the Abel transform of the circular mean ``a_0``.
* :func:`recover_band_limited` -- rotating a ray family separates the
  components of a finitely banded ``f``; each is then undone by inverting
  ``A_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .billiard import disc_ray
from .transform import QuadratureSpec, ScalarField, path_integral

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class DegeneratePhase(ArithmeticError):
    """The phase sum of a Fourier component vanishes for this chord angle."""


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class RadialProfile:
    """Samples of ``a_k`` on a uniform grid over ``[0, 1]``, linear in between."""

    k: int
    r: np.ndarray
    values: np.ndarray

    def __call__(self, rr):
        rr = np.asarray(rr, dtype=float)
        vals = np.asarray(self.values)
        if np.iscomplexobj(vals):
            out = np.interp(rr, self.r, vals.real) + 1j * np.interp(rr, self.r, vals.imag)
        else:
            out = np.interp(rr, self.r, vals)
        return np.where((rr >= self.r[0]) & (rr <= self.r[-1]), out, 0.0)

    @property
    def breakpoints(self) -> np.ndarray:
        return self.r


# -- Fourier profiles ---------------------------------------------------------


def fourier_profiles(field: ScalarField | Callable, k_max: int, r_grid,
                     n_theta: int) -> list[RadialProfile]:
    """Angular Fourier coefficients ``a_k(r_i)`` for ``|k| <= k_max`` by the DFT.

    Exact for fields whose angular band limit is below ``n_theta / 2``.
    """
    if n_theta < 2 * k_max + 1:
        raise ValueError(f"{n_theta} angular samples cannot resolve |k| <= {k_max}")
    r = np.asarray(r_grid, dtype=float)
    theta = 2 * math.pi * np.arange(n_theta) / n_theta
    x = r[:, None] * np.cos(theta)[None, :]
    y = r[:, None] * np.sin(theta)[None, :]
    samples = field(x, y)
    coeffs = np.fft.fft(samples, axis=1) / n_theta
    out = []
    for k in range(-k_max, k_max + 1):
        out.append(RadialProfile(k, r, coeffs[:, k % n_theta]))
    return out


def synthesize(profiles: Sequence[RadialProfile], r, theta):
    """``sum_k exp(i k theta) a_k(r)`` from a list of profiles."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(np.broadcast(r, theta).shape, dtype=complex)
    for p in profiles:
        out = out + np.exp(1j * p.k * theta) * p(r)
    return out


# -- generalised Abel transforms ----------------------------------------------


def abel_k(profile, k: int, rho: float, panels: int = 48) -> complex | float:
    """Generalised Abel transform ``A_|k| a(rho)`` on the unit disc.

    Integrates ``a(sqrt(rho^2 + s^2)) * ((rho + i s)/sqrt(rho^2 + s^2))^k``
    over the chord ``|s| <= sqrt(1 - rho^2)``.  The odd part in ``s``
    cancels, leaving ``2 * integral_0^S a(r) cos(k * atan(s / rho)) ds``.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho={rho} outside [0, 1]")
    if rho == 1.0:
        return 0.0
    S = math.sqrt(1.0 - rho * rho)
    if isinstance(profile, RadialProfile):
        rb = profile.r[(profile.r > rho) & (profile.r < 1.0)]
        cuts = np.concatenate([[0.0], np.sqrt(rb * rb - rho * rho), [S]])
        # a couple of panels per cut interval
        edges = np.unique(np.concatenate([np.linspace(a, b, 3) for a, b in zip(cuts[:-1], cuts[1:])]))
    else:
        edges = np.linspace(0.0, S, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    s = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    r = np.sqrt(rho * rho + s * s)
    ang = np.cos(abs(k) * np.arctan2(s, rho))
    vals = np.asarray(profile(r)) * ang
    out = 2.0 * (vals @ w)
    return complex(out) if np.iscomplexobj(out) else float(out)


def abel_matrix(k: int, z_nodes, r_grid) -> np.ndarray:
    """Collocation matrix of ``A_|k|`` acting on piecewise-linear profiles.

    Column ``j`` is ``A_|k|`` of the hat function at ``r_grid[j]`` sampled
    at ``z_nodes``.  Integration in the chord parameter is split at the
    hat-function knots, so each panel sees a smooth integrand.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    z_nodes = np.asarray(z_nodes, dtype=float)
    n_r = len(r_grid)
    M = np.zeros((len(z_nodes), n_r))
    kk = abs(k)
    for i, z in enumerate(z_nodes):
        if z >= r_grid[-1]:
            continue
        knots = r_grid[r_grid > z]
        s_knots = np.concatenate([[0.0], np.sqrt(knots * knots - z * z)])
        a, b = s_knots[:-1], s_knots[1:]
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        s = mid[:, None] + half[:, None] * _GL_X[None, :]
        w = half[:, None] * _GL_W[None, :]
        r = np.sqrt(z * z + s * s)
        ang = np.cos(kk * np.arctan2(s, z))
        # hat interval index: r lies in [r_grid[j], r_grid[j+1]]
        j = np.clip(np.searchsorted(r_grid, r, side="right") - 1, 0, n_r - 2)
        t = (r - r_grid[j]) / (r_grid[j + 1] - r_grid[j])
        contrib = 2.0 * w * ang
        np.add.at(M[i], j.ravel(), (contrib * (1 - t)).ravel())
        np.add.at(M[i], (j + 1).ravel(), (contrib * t).ravel())
    return M


def invert_abel_k(k: int, z_nodes, values, r_grid, tikhonov: float = 1e-8) -> RadialProfile:
    """Solve ``A_|k| a = values`` for a piecewise-linear ``a`` by regularised least squares.

    The Tikhonov weight is ``tikhonov * ||M||_2`` for the collocation matrix ``M``.
    For ``k != 0`` the value at the origin is pinned to zero: a hat function
    sitting at ``r = 0`` is nearly invisible to ``A_k`` once ``k >= 3`` and
    would otherwise pick up an arbitrary coefficient.  Keep ``r_grid``
    coarser than ``z_nodes`` for the same reason.
    """
    M = abel_matrix(k, z_nodes, r_grid)
    first = 1 if k != 0 else 0  # a_k(0) = 0 for k != 0 when f is continuous
    M = M[:, first:]
    lam = tikhonov * np.linalg.norm(M, 2)
    n_r = M.shape[1]
    A = np.vstack([M, lam * np.eye(n_r)])
    b = np.concatenate([np.asarray(values), np.zeros(n_r, dtype=np.asarray(values).dtype)])
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    sol = np.concatenate([np.zeros(first, dtype=sol.dtype), sol])
    return RadialProfile(k, np.asarray(r_grid, float), sol)


def abel_invert(z, g, edge_fit: int = 6) -> np.ndarray:
    """Invert the classical Abel transform ``g = A_0 a`` sampled on ``z``.

    Uses ``a(r) = -1/pi * integral_r^1 g'(rho) / sqrt(rho^2 - r^2) d rho``
    with ``g'`` from central differences (one-sided at the ends) and exact
    integration of its linear interpolant against the kernel.  A jump of
    ``a`` at ``r = 1`` gives ``g`` a square-root edge that differences cannot
    resolve, so ``a(1)`` is fitted from the last samples and the matching
    ``2 a(1) sqrt(1 - rho^2)`` is removed before differentiating.
    """
    z = np.asarray(z, dtype=float)
    g = np.asarray(g)
    if z.ndim != 1 or len(z) < 3 or np.any(np.diff(z) <= 0):
        raise ValueError("z grid must be strictly increasing with at least 3 samples")
    if z[0] < 0 or z[-1] > 1 + 1e-12:
        raise ValueError("z grid must lie in [0, 1]")
    if np.iscomplexobj(g):
        return abel_invert(z, g.real, edge_fit) + 1j * abel_invert(z, g.imag, edge_fit)
    edge = 0.0
    if z[-1] >= 1 - 1e-12 and len(z) > edge_fit + 3:
        zz = z[-edge_fit - 1:-1]
        A = np.column_stack([np.ones(edge_fit), 1 - zz, (1 - zz) ** 2])
        c, *_ = np.linalg.lstsq(A, g[-edge_fit - 1:-1] / (2 * np.sqrt(1 - zz * zz)), rcond=None)
        edge = float(c[0])
    rem = g - 2 * edge * np.sqrt(np.clip(1 - z * z, 0.0, None))
    gp = np.gradient(rem, z, edge_order=2)
    if z[0] == 0.0:
        gp[0] = 0.0  # g is even in rho
    n = len(z)
    a = np.zeros(n)
    for i in range(n - 1):
        r = z[i]
        za, zb = z[i:-1], z[i + 1:]
        da, db = gp[i:-1], gp[i + 1:]
        c1 = (db - da) / (zb - za)
        c0 = da - c1 * za
        sa = np.sqrt(np.maximum(za * za - r * r, 0.0))
        sb = np.sqrt(np.maximum(zb * zb - r * r, 0.0))
        if r == 0.0:
            # kernel 1/rho: the first cell has c0 = 0 because gp[0] = 0 and gp is linear
            log_term = np.zeros_like(za)
            pos = za > 0
            log_term[pos] = np.log(zb[pos] / za[pos])
            log_term[~pos] = 0.0
            integral = c1 * (sb - sa) + c0 * log_term
        else:
            integral = c0 * (np.log(zb + sb) - np.log(za + sa)) + c1 * (sb - sa)
        a[i] = -integral.sum() / math.pi
    a[-1] = np.nan if z[-1] < 1 - 1e-12 else 0.0
    if z[-1] < 1 - 1e-12:
        a[-1] = a[-2]
    return a + edge


# -- BRT oracle ---------------------------------------------------------------


def _angle_in_arc(theta: float, start: float, end: float, tol: float) -> bool:
    twopi = 2 * math.pi
    width = end - start
    if width >= twopi - tol:
        return True
    s = (theta - start) % twopi
    return s <= width + tol or s >= twopi - tol


class DiscBRTOracle:
    """Answers BRT queries for closed-form rays in the unit disc.

    Only rays whose end points lie in the closure of E are answered;
    ``e_arcs=None`` makes the whole circle E.  ``e_points`` adds isolated
    points (a singleton set of tomography).
    """

    def __init__(self, field: ScalarField, e_arcs: Sequence[tuple[float, float]] | None = None,
                 e_points: Sequence[float] = (), quad: QuadratureSpec | None = None,
                 tol: float = 1e-9):
        self.field = field
        self.e_arcs = None if e_arcs is None else [tuple(map(float, a)) for a in e_arcs]
        self.e_points = [float(p) for p in e_points]
        self.quad = quad or QuadratureSpec()
        self.tol = tol
        self.calls = 0

    def in_e(self, theta: float) -> bool:
        if self.e_arcs is None:
            return True
        for p in self.e_points:
            d = (theta - p) % (2 * math.pi)
            if min(d, 2 * math.pi - d) <= self.tol:
                return True
        return any(_angle_in_arc(theta, a, b, self.tol) for a, b in self.e_arcs)

    def __call__(self, iota: float, alpha: float, n: int):
        ray, params = disc_ray(iota, alpha, n)
        if not (self.in_e(params.iota) and self.in_e(params.kappa)):
            raise OracleError(f"ray ({iota:.6g}, {alpha:.6g}, {n}) has an end point outside E")
        self.calls += 1
        return path_integral(self.field, ray.vertices, self.quad)


# -- recovery pipelines -------------------------------------------------------


def phase_sum(k: int, alpha: float, n: int) -> complex:
    """``sum_{j<n} exp(i k (j + 1/2) alpha)``."""
    j = np.arange(n)
    return complex(np.exp(1j * k * (j + 0.5) * alpha).sum())


def best_closed_ray(z: float, n_min: int, n_max: int) -> tuple[int, int]:
    """``(m, n)`` with ``gcd(m, n) = 1``, ``n_min <= n <= n_max``, and
    ``cos(pi m / n)`` closest to ``z``: the ray with chord angle
    ``2 pi m / n`` returns to its start after exactly ``n`` chords."""
    target = math.acos(min(max(z, -1.0), 1.0)) / math.pi
    best = None
    for n in range(max(n_min, 2), n_max + 1):
        for m in (math.floor(n * target), math.ceil(n * target)):
            if not 1 <= m < n or math.gcd(m, n) != 1:
                continue
            err = abs(math.cos(math.pi * m / n) - z)
            if best is None or err < best[0] - 1e-15 or (abs(err - best[0]) <= 1e-15 and n > best[2]):
                best = (err, m, n)
    if best is None:
        raise ValueError(f"no closed ray for z={z}")
    return best[1], best[2]


@dataclass
class RadialRecovery:
    z: np.ndarray
    g: np.ndarray
    profile: RadialProfile
    nodes: np.ndarray  # (z_node, g_node, n)
    report: dict = field(default_factory=dict)


def _radial_nodes(oracle, z_targets, n_max, mode, e_angle, n_min):
    rows = {}
    for z in z_targets:
        if mode == "singleton":
            m, n = best_closed_ray(z, n_min, n_max)
            alpha = 2 * math.pi * m / n
            key = (m, n)
            if key in rows:
                continue
            zn = math.cos(alpha / 2)
        else:
            n = n_max
            alpha = 2 * math.acos(z)
            zn = z
            key = (round(z, 15), n)
        rows[key] = (zn, oracle(e_angle, alpha, n) / n, n)
    nodes = np.array(sorted(rows.values()))
    return nodes


def recover_radial(oracle, z_grid, n_max: int = 200, mode: str = "singleton",
                   e_angle: float = 0.0, n_min: int | None = None,
                   study: Sequence[int] = ()) -> RadialRecovery:
    """Recover the circular mean ``a_0`` from many-reflection broken rays.

    ``mode='singleton'``: every ray starts and ends at the single E point
    ``e_angle``, so its chord angle is ``2 pi m / n`` with ``gcd(m, n) = 1``
    and ``n`` between ``n_min`` (default ``n_max // 2``) and ``n_max``; the
    chord midpoints are then equally spaced and ``BRT / n`` equals
    ``A_0 a_0(z)`` up to components with ``|k| >= n``.  ``mode='open'`` uses
    exactly ``n_max`` chords at ``alpha = 2 acos(z)`` and needs E to contain
    both end points.

    ``study`` lists smaller ``n_max`` values whose estimates are compared
    with the final one; the differences are reported as the empirical
    convergence in ``n``.
    """
    z_grid = np.asarray(z_grid, dtype=float)
    if mode not in ("singleton", "open"):
        raise ValueError("mode must be 'singleton' or 'open'")
    n_lo = n_min if n_min is not None else max(2, n_max // 2)
    targets = z_grid[(z_grid > 0) & (z_grid < 1)]

    def estimate(nm, nl):
        nodes = _radial_nodes(oracle, targets, nm, mode, e_angle, nl)
        zs = np.concatenate([nodes[:, 0], [1.0]])
        gs = np.concatenate([nodes[:, 1], [0.0]])
        if zs[0] > 0:
            # g is even in z: mirror the first node
            zs = np.concatenate([[-zs[0]], zs])
            gs = np.concatenate([[gs[0]], gs])
        order = np.argsort(zs)
        zs, gs = zs[order], gs[order]
        if np.iscomplexobj(gs):
            g = np.interp(z_grid, zs, gs.real) + 1j * np.interp(z_grid, zs, gs.imag)
        else:
            g = np.interp(z_grid, zs, gs)
        return nodes, g

    nodes, g = estimate(n_max, n_lo)
    a = abel_invert(z_grid, g)
    report = {"mode": mode, "n_max": n_max, "n_min": n_lo if mode == "singleton" else n_max,
              "distinct_nodes": int(len(nodes)),
              "max_node_gap": float(np.max(np.min(np.abs(targets[:, None] - nodes[None, :, 0]), axis=1)))
              if len(nodes) else 0.0}
    convergence = []
    for nm in study:
        _, g_s = estimate(nm, max(2, nm // 2) if mode == "singleton" else nm)
        convergence.append((int(nm), float(np.max(np.abs(g_s - g)))))
    report["convergence"] = convergence
    return RadialRecovery(z_grid, g, RadialProfile(0, z_grid, a), nodes, report)


@dataclass
class BandRecovery:
    profiles: list[RadialProfile]
    data: dict  # k -> (z_nodes, A_k a_k samples)
    skipped: dict  # k -> list of skipped z values
    report: dict = field(default_factory=dict)


def _choose_segments(alpha: float, room: float, n_default: int, n_cap: int = 5000) -> int | None:
    """Smallest ``n >= n_default`` whose end point advances by at most ``room``
    (mod 2 pi) past the start while staying at least ``room / 3`` away."""
    twopi = 2 * math.pi
    for n in range(n_default, n_cap):
        adv = (n * alpha) % twopi
        if room / 3 <= adv <= room:
            return n
    return None


def recover_band_limited(oracle, K: int, z_grid, rotations=None, n: int = 3,
                         r_grid=None, e_arc: tuple[float, float] | None = None,
                         window: float | None = None, phase_tol: float = 1e-3,
                         tikhonov: float = 1e-8) -> BandRecovery:
    """Recover ``a_k`` for ``|k| <= K`` from rotated families of disc rays.

    For each ``z`` the chord angle is ``alpha = 2 acos(z)``.  Rays are
    rotated over ``rotations`` (start angles); because ``f`` has no
    components beyond ``K``, the BRT is a trigonometric polynomial of degree
    ``K`` in the rotation angle and its coefficients are found by least
    squares (the DFT when the rotations are uniform over the circle).  The
    ``k``-th coefficient divided by the phase sum is ``A_|k| a_k(z)``; each
    component is then recovered by :func:`invert_abel_k`.

    With ``e_arc=(start, end)`` the set of tomography is an arc: rotations
    stay inside a window at the start of the arc and the segment count is
    raised until the end points of every rotated ray land in the arc too.
    """
    z_grid = np.asarray(z_grid, dtype=float)
    ks = np.arange(-K, K + 1)
    if e_arc is None:
        if rotations is None:
            rotations = 2 * math.pi * np.arange(2 * K + 1) / (2 * K + 1)
        rotations = np.asarray(rotations, dtype=float)
        room = None
    else:
        width = (e_arc[1] - e_arc[0]) % (2 * math.pi) or 2 * math.pi
        W = window if window is not None else width / 3
        if rotations is None:
            rotations = np.linspace(0.0, W, 2 * K + 1)
        rotations = e_arc[0] + np.asarray(rotations, dtype=float)
        room = width - W
    if len(rotations) < 2 * K + 1:
        raise ValueError("need at least 2K+1 rotations")
    V = np.exp(1j * np.outer(rotations, ks))
    data = {int(k): ([], []) for k in ks}
    skipped = {int(k): [] for k in ks}
    used_n = []
    for z in z_grid:
        if not 0 < z < 1:
            continue
        alpha = 2 * math.acos(z)
        nn = n if room is None else _choose_segments(alpha, room, n)
        if nn is None:
            for k in ks:
                skipped[int(k)].append(float(z))
            continue
        used_n.append(nn)
        b = np.array([oracle(float(io), alpha, nn) for io in rotations], dtype=complex)
        c, *_ = np.linalg.lstsq(V, b, rcond=None)
        for idx, k in enumerate(ks):
            P = phase_sum(int(k), alpha, nn)
            if abs(P) < phase_tol * nn:
                skipped[int(k)].append(float(z))
                continue
            data[int(k)][0].append(float(z))
            data[int(k)][1].append(c[idx] / P)
    if r_grid is None:
        r_grid = np.linspace(0.0, 1.0, max(17, len(z_grid) // 2 + 1))
    profiles = []
    for k in ks:
        zs, vals = data[int(k)]
        if len(zs) < 3:
            raise DegeneratePhase(f"too few usable chord distances for k={k}")
        zs_arr = np.concatenate([np.asarray(zs), [1.0]])
        vals_arr = np.concatenate([np.asarray(vals), [0.0]])
        profiles.append(invert_abel_k(int(k), zs_arr, vals_arr, r_grid, tikhonov))
    packed = {k: (np.asarray(v[0]), np.asarray(v[1])) for k, v in data.items()}
    report = {"K": K, "rotations": len(rotations), "segments": sorted(set(used_n)),
              "skipped": {k: len(v) for k, v in skipped.items()}}
    return BandRecovery(profiles, packed, skipped, report)


def rotate_field(field: ScalarField, angle: float) -> ScalarField:
    """``f`` rotated counter-clockwise by ``angle``."""
    c, s = math.cos(angle), math.sin(angle)

    def g(x, y):
        return field(c * x + s * y, -s * x + c * y)

    return ScalarField(g, None, None, f"rot({field.name},{angle})", field.is_complex)


def angular_derivative(field: ScalarField, h: float = 1e-4) -> ScalarField:
    """``d f / d theta`` by a fourth-order central difference in the rotation angle."""

    def g(x, y):
        def at(t):
            c, s = math.cos(t), math.sin(t)
            return field(c * x - s * y, s * x + c * y)

        return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)

    return ScalarField(g, None, None, f"d_theta({field.name})", field.is_complex)


__all__ = [
    "RadialProfile", "fourier_profiles", "synthesize", "abel_k", "abel_matrix", "invert_abel_k",
    "abel_invert", "DiscBRTOracle", "OracleError", "DegeneratePhase", "phase_sum",
    "best_closed_ray", "recover_radial", "RadialRecovery", "recover_band_limited",
    "BandRecovery", "rotate_field", "angular_derivative",
]
