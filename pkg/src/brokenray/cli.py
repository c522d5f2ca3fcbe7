"""Command-line front end.

Every subcommand reads a scene and/or field file, runs one pipeline and
writes CSV (and for images PGM) outputs.  Exit codes: 0 on success, 1 for
usage errors (bad flags, malformed or missing files), 2 for numerical
failures, with a one-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .billiard import TracingError, disc_ray, trace_broken_ray
from .boundary_det import NoiseFloorError, arc_integral_from_brt, boundary_values_on_E
from .counterexamples import (EmptyShadow, RaySampling, bump_profile, disc_periodic_null_field,
                              null_field_from_shadow, plateau_profile, radial_control_field,
                              reachability_shadow, sampling_states, verify_periodic)
from .disc_analysis import (DiscBRTOracle, OracleError, recover_band_limited,
                            recover_radial)
from .geometry import Domain2D, GeometryError, UnitSpeedState
from .pestov import BoundaryConditionError, build_uf, pestov_report, transport_refinement
from .transform import (DiscRayFamily, QuadratureSpec, StartFamily, brt_scan, radon_sinogram)
from .unfold import UnfoldError, corner_square_reconstruct

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

NUMERICAL_ERRORS = (TracingError, ArithmeticError, OracleError, NoiseFloorError, EmptyShadow,
                    BoundaryConditionError, UnfoldError, np.linalg.LinAlgError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _interval(text: str) -> tuple[float, float]:
    v = _floats(text.replace(":", " "))
    if len(v) != 2:
        raise argparse.ArgumentTypeError(f"expected start:end, got {text!r}")
    return v[0], v[1]


def _grid3(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected NRxNPSIxNTHETA, got {text!r}")
    return tuple(int(p) for p in parts)


# -- subcommands ----------------------------------------------------------------


def cmd_trace(a) -> int:
    dom = io.read_scene(a.scene)
    if a.n is not None:
        if dom.variant != "disc":
            raise UsageError("--n (closed-form ray) needs a disc scene")
        if a.alpha is None:
            raise UsageError("--n needs --alpha")
        ray, _ = disc_ray(a.start_angle, a.alpha, a.n, dom.params["radius"])
    else:
        if a.start is None or a.direction is None:
            raise UsageError("give --n with --alpha (disc), or --start X,Y with --direction ANGLE")
        x = _floats(a.start)
        v = (math.cos(a.direction), math.sin(a.direction))
        ray = trace_broken_ray(dom, UnitSpeedState(np.array(x), np.array(v)),
                               a.max_reflections, a.max_length)
    io.write_ray_csv(a.out, ray)
    return EXIT_OK


def cmd_brt(a) -> int:
    dom = io.read_scene(a.scene)
    f = io.read_field(a.field)
    quad = QuadratureSpec(a.points_per_unit)
    if a.alphas:
        if dom.variant != "disc":
            raise UsageError("--alphas needs a disc scene")
        iotas = _floats(a.iotas) if a.iotas else [0.0]
        fam = DiscRayFamily(iotas, _floats(a.alphas), a.n)
    else:
        states, _, _ = sampling_states(dom, RaySampling(a.points, a.angles))
        fam = StartFamily(states, a.max_reflections, a.max_length)
    rows = brt_scan(dom, f, fam, quad, a.threads)
    io.write_scan_csv(a.out, rows)
    return EXIT_OK


def cmd_radon(a) -> int:
    f = io.read_field(a.field)
    R = a.half_width
    if f.support is None:
        f = replace(f, support=(-R, R, -R, R))
    drho = 2 * R / a.n_offsets
    rhos = -R + (np.arange(a.n_offsets) + 0.5) * drho
    phis = math.pi * np.arange(a.n_angles) / a.n_angles
    sino = radon_sinogram(f, rhos, phis, QuadratureSpec(a.points_per_unit), threads=a.threads)
    io.write_sinogram_csv(a.out, sino)
    return EXIT_OK


def cmd_unfold_reconstruct(a) -> int:
    f = io.read_field(a.field)
    rec = corner_square_reconstruct(f, a.n_angles, a.n_offsets, a.grid,
                                    QuadratureSpec(a.points_per_unit), a.window, a.threads)
    out = Path(a.out)
    io.write_sinogram_csv(out / "sinogram.csv", rec.sinogram)
    io.write_grid_csv(out / "image.csv", rec.image.xs, rec.image.ys, rec.image.values)
    io.write_pgm(out / "image.pgm", rec.image.values)
    io.write_csv(out / "report.csv", ["corner_hits", "max_line_mismatch"],
                 [(rec.corner_hits, rec.max_line_mismatch)])
    return EXIT_OK


def cmd_disc_recover(a) -> int:
    f = io.read_field(a.field)
    out = Path(a.out)
    z = np.linspace(0.0, 1.0, a.nz)
    quad = QuadratureSpec(a.points_per_unit)
    if a.mode == "radial":
        oracle = DiscBRTOracle(f, e_arcs=[], e_points=[a.e_angle], quad=quad)
        rec = recover_radial(oracle, z, a.n_max, "singleton", a.e_angle)
        io.write_profiles(out, [rec.profile])
        io.write_csv(out / "nodes.csv", ["z", "g", "n"],
                     [(float(r[0]), float(np.real(r[1])), int(np.real(r[2]))) for r in rec.nodes])
        log = [("mode", "radial"), ("n_max", a.n_max), ("oracle_calls", oracle.calls),
               ("max_node_gap", rec.report["max_node_gap"])]
    else:
        e_arc = _interval(a.e_arc) if a.e_arc else None
        oracle = DiscBRTOracle(f, e_arcs=None if e_arc is None else [e_arc], quad=quad)
        rec = recover_band_limited(oracle, a.K, z[1:-1], n=a.n, e_arc=e_arc)
        io.write_profiles(out, rec.profiles)
        log = [("mode", "band"), ("K", a.K), ("oracle_calls", oracle.calls),
               ("segments", " ".join(map(str, rec.report["segments"])))]
    io.write_csv(out / "run_log.csv", ["key", "value"], log)
    return EXIT_OK


def cmd_boundary_recover(a) -> int:
    f = io.read_field(a.field)
    e_arc = _interval(a.e_arc)
    dom = Domain2D.disc(1.0, [e_arc])
    quad = QuadratureSpec(a.points_per_unit)
    bv = boundary_values_on_E(f, dom, e_arc, a.resolution, a.alpha, quad=quad,
                              max_noise=a.max_noise)
    out = Path(a.out)
    io.write_csv(out / "values.csv", ["theta", "value", "cumulative"],
                 zip(bv.theta, bv.values, bv.cumulative))
    alphas = [a.alpha * 2 ** k for k in range(4, -1, -1)]
    rep = arc_integral_from_brt(f, dom, e_arc, alphas, quad=quad)
    io.write_csv(out / "arc_convergence.csv", ["alpha", "n", "value", "extrapolated", "err"],
                 rep.rows)
    return EXIT_OK


def cmd_pestov_check(a) -> int:
    dom = io.read_scene(a.scene)
    f = io.read_field(a.field)
    n_r, n_psi, n_th = a.grid
    g = build_uf(dom, f, n_r, n_psi, n_th, threads=a.threads)
    terms = pestov_report(g, strict=a.strict)
    row = terms.as_row()
    io.write_csv(a.out, list(row.keys()), [list(row.values())])
    if a.refine:
        st = transport_refinement(dom, f, a.refine_base, 3, a.threads)
        io.write_csv(a.refine, ["n", "h", "median", "common_median", "masked_fraction", "bc_error"],
                     zip(st.levels, st.h, st.median, st.common_median, st.masked_fraction,
                         st.bc_error))
    return EXIT_OK


def cmd_counterexample(a) -> int:
    out = Path(a.out)
    r0, r1 = _interval(a.support)
    prof = bump_profile(r0, r1)
    null = verify_periodic(disc_periodic_null_field(prof), a.q_max, a.phases, threads=a.threads)
    ctrl = verify_periodic(radial_control_field(plateau_profile()), a.q_max, a.phases,
                           threads=a.threads)
    io.write_csv(out / "periodic_null.csv", ["p", "q", "theta0", "value", "err"],
                 [(r.p, r.q, r.theta0, r.value, r.err) for r in null.rows])
    io.write_csv(out / "periodic_control.csv", ["p", "q", "theta0", "value", "err"],
                 [(r.p, r.q, r.theta0, r.value, r.err) for r in ctrl.rows])
    io.write_csv(out / "summary.csv", ["field", "max_abs", "max_err", "field_norm"],
                 [("null", null.max_abs, null.max_err, null.field_norm),
                  ("control", ctrl.max_abs, ctrl.max_err, ctrl.field_norm)])
    return EXIT_OK


def cmd_shadow(a) -> int:
    dom = io.read_scene(a.scene)
    sampling = RaySampling(a.points, a.angles, a.max_reflections, a.max_length)
    rep = reachability_shadow(dom, sampling, a.cell, a.threads)
    out = Path(a.out)
    io.write_pgm(out / "shadow.pgm", rep.shadow.astype(float))
    io.write_pgm(out / "visited.pgm", rep.visited.astype(float))
    summ = rep.summary()
    io.write_csv(out / "report.csv", list(summ.keys()), [list(summ.values())])
    (out / "caveat.txt").write_text(rep.caveat + "\n")
    if a.null_field:
        nf = null_field_from_shadow(dom, rep, threads=a.threads)
        io.write_csv(out / "null_field.csv", ["cx", "cy", "radius", "max_abs", "field_norm"],
                     [(nf.center[0], nf.center[1], nf.radius, nf.max_abs, nf.field_norm)])
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="brokenray", description="Broken ray transform toolkit.")
    p.add_argument("--threads", type=int, default=1, help="worker threads (outputs do not depend on it)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(func=fn)
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (overrides the global flag)")
        return sp

    sp = add("trace", cmd_trace, "Trace one broken ray and write its vertices.")
    sp.add_argument("--scene", required=True, help="scene file")
    sp.add_argument("--start-angle", type=float, default=0.0, help="disc: angle of the first vertex")
    sp.add_argument("--alpha", type=float, help="disc: central angle per chord")
    sp.add_argument("--n", type=int, help="disc: number of chords")
    sp.add_argument("--start", help="generic start point X,Y")
    sp.add_argument("--direction", type=float, help="generic start direction angle (rad)")
    sp.add_argument("--max-reflections", type=int, default=10_000)
    sp.add_argument("--max-length", type=float, default=10_000.0)
    sp.add_argument("--out", required=True, help="ray CSV")

    sp = add("brt", cmd_brt, "Broken ray transform over a ray family.")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--field", required=True)
    sp.add_argument("--alphas", help="disc family: chord angles (comma separated)")
    sp.add_argument("--iotas", help="disc family: start angles (comma separated)")
    sp.add_argument("--n", type=int, help="disc family: chord count (default: closing count)")
    sp.add_argument("--points", type=int, default=20, help="generic family: start points on E")
    sp.add_argument("--angles", type=int, default=10, help="generic family: directions per point")
    sp.add_argument("--max-reflections", type=int, default=10_000)
    sp.add_argument("--max-length", type=float, default=10_000.0)
    sp.add_argument("--points-per-unit", type=float, default=16)
    sp.add_argument("--out", required=True)

    sp = add("radon", cmd_radon, "Parallel-beam sinogram of a field.")
    sp.add_argument("--field", required=True)
    sp.add_argument("--n-angles", type=int, default=180)
    sp.add_argument("--n-offsets", type=int, default=128)
    sp.add_argument("--half-width", type=float, default=1.0,
                    help="offsets cover [-w, w]; fields without a support are cut to [-w, w]^2")
    sp.add_argument("--points-per-unit", type=float, default=16)
    sp.add_argument("--out", required=True)

    sp = add("unfold-reconstruct", cmd_unfold_reconstruct,
             "Corner-square BRT data unfolded to lines and inverted by filtered back-projection.")
    sp.add_argument("--field", required=True)
    sp.add_argument("--n-angles", type=int, default=180)
    sp.add_argument("--n-offsets", type=int, default=256)
    sp.add_argument("--grid", type=int, default=256)
    sp.add_argument("--window", default="hann")
    sp.add_argument("--points-per-unit", type=float, default=16)
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("disc-recover", cmd_disc_recover, "Fourier profile recovery from disc BRT data.")
    sp.add_argument("--field", required=True)
    sp.add_argument("--mode", choices=("radial", "band"), default="radial")
    sp.add_argument("--n-max", type=int, default=200, help="radial: largest chord count")
    sp.add_argument("--e-angle", type=float, default=0.0, help="radial: the single E point")
    sp.add_argument("--K", type=int, default=3, help="band: highest Fourier index")
    sp.add_argument("--n", type=int, default=3, help="band: chords per ray")
    sp.add_argument("--e-arc", help="band: E arc start:end (default whole circle)")
    sp.add_argument("--nz", type=int, default=81, help="samples of z in [0, 1]")
    sp.add_argument("--points-per-unit", type=float, default=16)
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("boundary-recover", cmd_boundary_recover,
             "Values of a field on an E arc of the unit disc from near-tangent rays.")
    sp.add_argument("--field", required=True)
    sp.add_argument("--e-arc", required=True, help="start:end angles")
    sp.add_argument("--resolution", type=int, default=33)
    sp.add_argument("--alpha", type=float, default=math.pi / 128)
    sp.add_argument("--max-noise", type=float, default=1e-3)
    sp.add_argument("--points-per-unit", type=float, default=32)
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("pestov-check", cmd_pestov_check, "Energy identity terms for u^f on an annulus.")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--field", required=True)
    sp.add_argument("--grid", type=_grid3, default=(32, 32, 32), help="NRxNPSIxNTHETA")
    sp.add_argument("--strict", action="store_true", help="fail when boundary conditions are violated")
    sp.add_argument("--refine", help="also write a transport refinement study to this CSV")
    sp.add_argument("--refine-base", type=int, default=32)
    sp.add_argument("--out", required=True)

    sp = add("counterexample", cmd_counterexample,
             "Periodic null field a(r)cos(theta) on the disc with a radial control.")
    sp.add_argument("--support", default="0.4:0.8", help="radial bump support r0:r1")
    sp.add_argument("--q-max", type=int, default=12)
    sp.add_argument("--phases", type=int, default=8)
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("shadow", cmd_shadow, "Cells never reached by rays started on E.")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--points", type=int, default=200)
    sp.add_argument("--angles", type=int, default=50)
    sp.add_argument("--cell", type=float, default=0.05)
    sp.add_argument("--max-reflections", type=int, default=2000)
    sp.add_argument("--max-length", type=float, default=200.0)
    sp.add_argument("--null-field", action="store_true", help="also build and verify a null field")
    sp.add_argument("--out", required=True, help="output directory")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "brokenray: error: missing command\n")
        return args.func(args)
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except UsageError as exc:
        sys.stderr.write(str(exc).rstrip("\n") + "\n")
        return EXIT_USAGE
    except (io.ConfigError, FileNotFoundError) as exc:
        sys.stderr.write(f"brokenray: {type(exc).__name__}: {exc}\n")
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        sys.stderr.write(f"brokenray: numerical failure: {type(exc).__name__}: {exc}\n")
        return EXIT_NUMERIC
    except (GeometryError, ValueError) as exc:
        sys.stderr.write(f"brokenray: {type(exc).__name__}: {exc}\n")
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
