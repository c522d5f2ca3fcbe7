"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances and runtime limits are the stated ones; a criterion fails if any
check or the wall-clock limit fails.
"""
import math
import time
from pathlib import Path

import numpy as np

from brokenray.billiard import disc_ray, make_family_start, periodic_square, trace_broken_ray
from brokenray.boundary_det import arc_integral_from_brt, boundary_values_on_E
from brokenray.cli import EXIT_OK, run
from brokenray.counterexamples import (bump_profile, disc_periodic_null_field, plateau_profile,
                                       radial_control_field, verify_periodic)
from brokenray.disc_analysis import (DiscBRTOracle, abel_invert, abel_k, recover_band_limited,
                                     recover_radial, synthesize)
from brokenray.geometry import Domain2D, UnitSpeedState, reflect_direction
from brokenray.pestov import observed_order, pestov_report, synthetic_grid, transport_refinement
from brokenray.transform import QuadratureSpec, ScalarField, _circle_crossings, path_integral
from brokenray.unfold import (corner_square_brt, corner_square_reconstruct, glue_cone_field,
                              lift_periodic_ray, square_corner_lift, torus_integral,
                              unfold_cone_ray, unfold_polyline)

SCENES = Path(__file__).resolve().parents[1] / "scenes"


def report(k, checks, elapsed, limit):
    """Print one line for criterion ``k`` and fail on any failed check."""
    checks = dict(checks)
    checks[f"runtime {elapsed:.1f}s < {limit:g}s"] = elapsed < limit
    ok = all(checks.values())
    detail = "; ".join(f"{name} [{'ok' if good else 'FAILED'}]" for name, good in checks.items())
    print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def graded_breaks(p0, p1):
    # unit-circle crossings plus panels graded towards the foot of the
    # perpendicular from the origin, where e^{ik theta} turns fastest
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    d = p1 - p0
    L2 = float(d @ d)
    foot = -float(p0 @ d) / L2
    rho = abs(p0[0] * d[1] - p0[1] * d[0]) / math.sqrt(L2)
    scale = 2.0 ** np.arange(-2, 8)
    ts = foot + np.concatenate([[0.0], scale, -scale]) * rho / math.sqrt(L2)
    ts = ts[(ts > 0) & (ts < 1)]
    return np.concatenate([_circle_crossings(p0, p1, (0.0, 0.0), 1.0), ts])


def unit_disc_field(func, is_complex=False):
    return ScalarField.polar(lambda r, t: func(r, t) * (r <= 1), support=(-1, 1, -1, 1),
                             is_complex=is_complex, breaks=graded_breaks)


def chord(rho, phi):
    e = np.array([math.cos(phi), math.sin(phi)])
    t = np.array([-e[1], e[0]])
    s = math.sqrt(1 - rho * rho)
    return np.array([rho * e - s * t, rho * e + s * t])


def test_criterion_1(rng):
    t0 = time.perf_counter()
    n = 10_000
    ang = rng.uniform(0, 2 * math.pi, n)
    nu = np.column_stack([np.cos(ang), np.sin(ang)])
    v = rng.normal(size=(n, 2))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    w = reflect_direction(v, nu)
    tangent = np.column_stack([-nu[:, 1], nu[:, 0]])
    inv = np.max(np.abs(reflect_direction(w, nu) - v))
    norm = np.max(np.abs(np.linalg.norm(w, axis=1) - 1))
    tang = np.max(np.abs(np.sum(w * tangent, 1) - np.sum(v * tangent, 1)))
    flip = np.max(np.abs(np.sum(w * nu, 1) + np.sum(v * nu, 1)))
    report(1, {f"involution {inv:.1e}": inv <= 1e-12, f"norm {norm:.1e}": norm <= 1e-12,
               f"tangential {tang:.1e}": tang <= 1e-12, f"normal flip {flip:.1e}": flip <= 1e-12},
           time.perf_counter() - t0, 1.0)


def test_criterion_2(rng):
    t0 = time.perf_counter()
    worst_trace = worst_wind = 0.0
    done = 0
    while done < 100:
        iota, alpha, n = rng.uniform(0, 2 * math.pi), rng.uniform(0.05, 2 * math.pi - 0.05), int(rng.integers(1, 13))
        ray, p = disc_ray(iota, alpha, n)
        # interior vertices landing on an end point would end the traced ray early
        if any(abs(math.remainder(iota + j * alpha - p.kappa, 2 * math.pi)) < 1e-6 for j in range(1, n)):
            continue
        worst_wind = max(worst_wind, abs(n * alpha - (2 * math.pi * p.m + p.kappa - iota)))
        dom = Domain2D.disc(e_arcs=[], e_points_angles=[iota, p.kappa])
        traced = trace_broken_ray(dom, UnitSpeedState(ray.vertices[0], ray.vertices[1] - ray.vertices[0]))
        if traced.n_segments != n:
            worst_trace = math.inf
        else:
            worst_trace = max(worst_trace, float(np.max(np.abs(traced.vertices - ray.vertices))))
        done += 1
    report(2, {f"tracer {worst_trace:.1e}": worst_trace <= 1e-9,
               f"winding {worst_wind:.1e}": worst_wind <= 1e-10},
           time.perf_counter() - t0, 5.0)


def _cone_worst(opening, n_rays, rng):
    gc = ScalarField.gaussian((0.4 * math.cos(opening / 2), 0.4 * math.sin(opening / 2)), 0.15)
    G = glue_cone_field(gc, round(math.pi / opening), 1.0)
    dom = Domain2D.cone_sector(opening, 1.0)
    arc = dom.pieces[1].curve.length
    worst = 0.0
    for _ in range(n_rays):
        start = make_family_start(dom, 1, rng.uniform(0.05, 0.95) * arc, rng.uniform(-1.4, 1.4))
        ray = trace_broken_ray(dom, start)
        un = unfold_cone_ray(opening, ray)
        worst = max(worst, abs(path_integral(gc, ray.vertices) - path_integral(G, un.segment)))
    return worst


def test_criterion_3(rng):
    t0 = time.perf_counter()
    half = _cone_worst(math.pi, 50, rng)  # the cone of opening pi is the half-plane
    cone = _cone_worst(math.pi / 3, 50, rng)
    gs = ScalarField.gaussian((0.55, 0.45), 0.12)
    lift = square_corner_lift(gs)
    dom = Domain2D.square(1, "REER")
    sq, done = 0.0, 0
    while done < 50:
        res = corner_square_brt(gs, rng.uniform(-1.3, 1.3), rng.uniform(0, math.pi), dom)
        if res is None:
            continue
        ray, val, _ = res
        sq = max(sq, abs(val - path_integral(lift, unfold_polyline(ray).segment)))
        done += 1
    report(3, {f"half-plane {half:.1e}": half <= 1e-8, f"pi/3 cone {cone:.1e}": cone <= 1e-8,
               f"corner square {sq:.1e}": sq <= 1e-8},
           time.perf_counter() - t0, 30.0)


def test_criterion_4():
    t0 = time.perf_counter()
    phantom = ScalarField.gaussian((0.55, 0.45), 0.12) + ScalarField.gaussian((0.3, 0.75), 0.08, 0.6)
    rec = corner_square_reconstruct(phantom, n_angles=180, n_offsets=256, grid=256, threads=4)
    X, Y = np.meshgrid(rec.image.xs, rec.image.ys, indexing="ij")
    truth = phantom(X, Y)
    err = float(np.linalg.norm(rec.image.values - truth) / np.linalg.norm(truth))
    report(4, {f"relative L2 {err:.4f}": err <= 0.1}, time.perf_counter() - t0, 120.0)


def bump(r):
    r = np.asarray(r, float)
    inside = (r > 0.2) & (r < 0.8)
    q = np.clip((r - 0.2) * (0.8 - r), 1e-300, None)
    return np.where(inside, np.exp(-0.09 / q), 0.0)


def test_criterion_5(rng):
    t0 = time.perf_counter()
    prof = lambda r: r * (1 - r * r)  # noqa: E731
    worst = 0.0
    for _ in range(20):
        rho, phi = rng.uniform(0.01, 0.99), rng.uniform(0, 2 * math.pi)
        for k in range(6):
            f = unit_disc_field(lambda r, t: np.exp(1j * k * t) * prof(r), is_complex=True)
            v = path_integral(f, chord(rho, phi), QuadratureSpec(64))
            worst = max(worst, abs(v - np.exp(1j * k * phi) * abel_k(prof, k, rho)))
    z = np.linspace(0, 1, 512)
    a = abel_invert(z, np.array([abel_k(bump, 0, q) for q in z]))
    rt = float(np.linalg.norm(a - bump(z)) / np.linalg.norm(bump(z)))
    report(5, {f"abel_k vs quadrature {worst:.1e}": worst <= 1e-8,
               f"Abel round trip {rt:.4f}": rt <= 0.02},
           time.perf_counter() - t0, 30.0)


def test_criterion_6():
    t0 = time.perf_counter()
    z = np.linspace(0, 1, 257)
    oracle = DiscBRTOracle(ScalarField.disc_indicator(0.5), e_arcs=[], e_points=[0.0],
                           quad=QuadratureSpec(8))
    rec = recover_radial(oracle, z, n_max=200)
    away = np.abs(z - 0.5) > 0.05
    rad = math.sqrt(np.mean((rec.profile.values - (z <= 0.5))[away] ** 2))

    rng = np.random.default_rng(1)
    K = 3
    coef = rng.normal(size=(K + 1, 3)) + 1j * rng.normal(size=(K + 1, 3))

    def prof(k):
        c = coef[abs(k)]
        base = lambda r: (c[0] + c[1] * r * r + c[2] * r ** 4) * (1 - r * r) ** 2 * r ** abs(k)  # noqa: E731
        if k == 0:
            return lambda r: base(r).real
        return base if k > 0 else (lambda r: np.conj(base(r)))

    profs = {k: prof(k) for k in range(-K, K + 1)}

    def F(r, t):
        return sum(np.exp(1j * k * t) * profs[k](r) for k in profs).real

    band = recover_band_limited(DiscBRTOracle(unit_disc_field(F), quad=QuadratureSpec(16)), K,
                                np.linspace(0.01, 0.99, 80), n=3)
    R, T = np.meshgrid(np.linspace(0, 1, 101), np.linspace(0, 2 * math.pi, 64, endpoint=False),
                       indexing="ij")
    truth = F(R, T)
    bl = float(np.linalg.norm(synthesize(band.profiles, R, T).real - truth) / np.linalg.norm(truth))
    report(6, {f"radial indicator L2 away from jump {rad:.4f}": rad <= 0.05,
               f"band K=3 relative L2 {bl:.4f}": bl <= 0.05},
           time.perf_counter() - t0, 120.0)


def test_criterion_7():
    t0 = time.perf_counter()
    fx = ScalarField.expression("x")
    arc = (-math.pi / 3, math.pi / 3)
    schedule = [math.pi / 2 ** j for j in range(3, 8)]
    rep = arc_integral_from_brt(fx, Domain2D.disc(), arc, schedule)
    exact = math.sqrt(3)  # integral of cos over the arc
    errs = [abs(row[2] - exact) for row in rep.rows]
    mono = all(b < a for a, b in zip(errs[:-1], errs[1:]))
    lim = abs(rep.limit - exact)
    dom = Domain2D.disc(e_arcs=[arc])
    bv = boundary_values_on_E(fx, dom, arc, alpha=math.pi / 128)
    worst = float(np.max(np.abs(bv.values - np.cos(bv.theta))))
    report(7, {"arc errors decrease along the schedule": mono and rep.monotone,
               f"extrapolated arc integral {lim:.1e}": lim <= 1e-6,
               f"f on E at alpha=pi/128 {worst:.1e}": worst <= 5e-3},
           time.perf_counter() - t0, 60.0)


def test_criterion_8():
    t0 = time.perf_counter()
    g = ScalarField.gaussian((0.2, 0.5), 0.2)
    st = transport_refinement(Domain2D.annulus(), g, base=32, n_levels=3, threads=4)
    ratios = st.ratios
    bc = max(e / h for e, h in zip(st.bc_error, st.h))
    grids = [synthetic_grid(0.3, n, n, n) for n in (16, 32, 64)]
    rows = [pestov_report(gr) for gr in grids]
    order = observed_order([r.h for r in rows], [abs(r.residual) for r in rows])
    report(8, {"transport ratios " + ", ".join(f"{r:.2f}" for r in ratios): min(ratios) >= 1.5,
               f"reflection BC max err/h {bc:.1e}": bc <= 5,
               f"synthetic Pestov order {order:.2f}": order >= 1},
           time.perf_counter() - t0, 300.0)


def test_criterion_9(rng):
    t0 = time.perf_counter()
    null = verify_periodic(disc_periodic_null_field(bump_profile(0.4, 0.8)), 12, 8, threads=4)
    ctrl = verify_periodic(radial_control_field(plateau_profile()), 12, 8, threads=4)
    cmin = min(abs(r.value) for r in ctrl.rows)
    f = ScalarField.gaussian((0.4, 0.6), 0.15, support=(0, 1, 0, 1))
    worst, seen = 0.0, set()
    while len(seen) < 20:
        p, q = int(rng.integers(0, 6)), int(rng.integers(1, 6))
        if math.gcd(p, q) != 1 or (p, q) in seen:
            continue
        seen.add((p, q))
        pr = periodic_square(p, q, float(rng.uniform(0.05, 0.95)))
        worst = max(worst, abs(path_integral(f, pr.vertices) - torus_integral(f, lift_periodic_ray(pr))))
    report(9, {f"null field max |BRT| {null.max_abs:.1e}": null.max_abs <= 1e-9,
               f"control min |BRT| {cmin:.3f}": cmin > 0.1,
               f"square vs torus {worst:.1e}": worst <= 1e-8},
           time.perf_counter() - t0, 60.0)


CLI_RUNS = [
    ["trace", "--scene", str(SCENES / "annulus.scene"), "--start=-1,0.2", "--direction", "0.1",
     "--out", "{out}/trace.csv"],
    ["brt", "--scene", str(SCENES / "annulus.scene"), "--field", str(SCENES / "gauss.field"),
     "--points", "12", "--angles", "6", "--out", "{out}/brt.csv"],
    ["brt", "--scene", str(SCENES / "disc.scene"), "--field", str(SCENES / "x.field"),
     "--alphas", "0.5,1.0,2.0", "--iotas", "0,1", "--n", "7", "--out", "{out}/brt_disc.csv"],
    ["radon", "--field", str(SCENES / "gauss.field"), "--n-angles", "60", "--n-offsets", "64",
     "--out", "{out}/radon.csv"],
    ["unfold-reconstruct", "--field", str(SCENES / "gauss.field"), "--n-angles", "60",
     "--n-offsets", "96", "--grid", "64", "--out", "{out}/unfold"],
    ["disc-recover", "--field", str(SCENES / "disc_phantom.field"), "--n-max", "60", "--nz", "33",
     "--out", "{out}/disc"],
    ["boundary-recover", "--field", str(SCENES / "x.field"), "--e-arc=-1:1", "--resolution", "9",
     "--out", "{out}/boundary"],
    ["pestov-check", "--scene", str(SCENES / "annulus.scene"), "--field", str(SCENES / "gauss.field"),
     "--grid", "17x16x16", "--refine", "{out}/refine.csv", "--refine-base", "16",
     "--out", "{out}/pestov.csv"],
    ["counterexample", "--q-max", "6", "--phases", "4", "--out", "{out}/counter"],
    ["shadow", "--scene", str(SCENES / "sealed_pocket.scene"), "--points", "60", "--angles", "12",
     "--cell", "0.1", "--out", "{out}/shadow"],
]


def _run_all(out: Path, threads: int) -> dict:
    codes = [run(["--threads", str(threads)] + [a.format(out=out) for a in argv]) for argv in CLI_RUNS]
    assert codes == [EXIT_OK] * len(CLI_RUNS), codes
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


def test_criterion_10(tmp_path):
    t0 = time.perf_counter()
    a = _run_all(tmp_path / "a", 1)
    b = _run_all(tmp_path / "b", 1)
    c = _run_all(tmp_path / "c", 4)
    n_csv = sum(name.endswith(".csv") for name in a)
    diff_runs = sorted(k for k in a if a[k] != b.get(k)) + sorted(set(b) - set(a))
    diff_threads = sorted(k for k in a if a[k] != c.get(k)) + sorted(set(c) - set(a))
    report(10, {f"{n_csv} CSV files written": n_csv >= len(CLI_RUNS),
                f"repeat run differs in {diff_runs or 'none'}": not diff_runs,
                f"threads 1 vs 4 differs in {diff_threads or 'none'}": not diff_threads},
           time.perf_counter() - t0, 300.0)
