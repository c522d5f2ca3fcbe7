"""Scene and field files, CSV tables and PGM images.

Scenes and fields are INI files read with :mod:`configparser`; the schema
is documented in ``docs/scene_format.md``.  Every float written to CSV uses
17 significant digits so that identical inputs give identical bytes.
"""

from __future__ import annotations

import configparser
import csv
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import TAG_E, TAG_R, Domain2D
from .transform import ScalarField


class ConfigError(ValueError):
    """Malformed scene or field file."""


def fmt(x) -> str:
    """Fixed 17-significant-digit text for numbers; other values pass through ``str``."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# -- tables -------------------------------------------------------------------


def write_ray_csv(path, ray) -> Path:
    rows = [(k, float(p[0]), float(p[1]), tag or "I", bool(tan))
            for k, (p, tag, tan) in enumerate(zip(ray.vertices, _ray_tags(ray), ray.tangential))]
    return write_csv(path, ["vertex", "x", "y", "tag", "tangential"], rows)


def _ray_tags(ray):
    if ray.tags:
        return ray.tags
    return ["" if d is None else d.tag for d in ray.data]


def write_sinogram_csv(path, sino) -> Path:
    vals = np.asarray(sino.values)
    rows = ((float(r), float(p), float(np.real(vals[i, j])), float(np.imag(vals[i, j])))
            for i, r in enumerate(sino.rhos) for j, p in enumerate(sino.phis))
    return write_csv(path, ["rho", "phi", "value_re", "value_im"], rows)


def write_scan_csv(path, rows) -> Path:
    """BRT scan rows: parameter columns, then value, error and status."""
    if not rows:
        return write_csv(path, ["value_re", "value_im", "err", "status"], [])
    keys = list(rows[0].params.keys())
    out = ([*(r.params.get(k, math.nan) for k in keys), float(np.real(r.value)),
            float(np.imag(r.value)), float(r.err), r.status] for r in rows)
    return write_csv(path, [*keys, "value_re", "value_im", "err", "status"], out)


def write_profile_csv(path, profile) -> Path:
    v = np.asarray(profile.values)
    rows = ((float(r), float(np.real(a)), float(np.imag(a))) for r, a in zip(profile.r, v))
    return write_csv(path, ["r", "re", "im"], rows)


def write_profiles(directory, profiles) -> list[Path]:
    """One ``profile_k<k>.csv`` per Fourier index (negative indices as ``m``)."""
    directory = Path(directory)
    out = []
    for p in profiles:
        name = f"profile_k{p.k}.csv" if p.k >= 0 else f"profile_km{-p.k}.csv"
        out.append(write_profile_csv(directory / name, p))
    return out


def write_grid_csv(path, xs, ys, values) -> Path:
    values = np.asarray(values)
    rows = ((float(x), float(y), float(values[i, j]))
            for i, x in enumerate(xs) for j, y in enumerate(ys))
    return write_csv(path, ["x", "y", "value"], rows)


# -- PGM ------------------------------------------------------------------------


def write_pgm(path, values, maxval: int = 65535) -> tuple[Path, Path]:
    """ASCII PGM (P2) of ``values[i, j]`` with ``i`` along x and ``j`` along y.

    Rows of the image run from top (largest y) to bottom.  Values are
    scaled linearly from ``[min, max]`` to ``[0, maxval]``; the range is
    written to ``<path>.minmax.txt``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    v = np.asarray(values, dtype=float)
    lo, hi = float(np.nanmin(v)), float(np.nanmax(v))
    span = hi - lo
    scaled = np.zeros_like(v) if span == 0 else (v - lo) / span * maxval
    img = np.rint(np.nan_to_num(scaled)).astype(np.int64).T[::-1]
    with open(path, "w", newline="\n") as fh:
        fh.write(f"P2\n{img.shape[1]} {img.shape[0]}\n{maxval}\n")
        for row in img:
            fh.write(" ".join(str(int(c)) for c in row) + "\n")
    side = Path(str(path) + ".minmax.txt")
    side.write_text(f"min {fmt(lo)}\nmax {fmt(hi)}\n")
    return path, side


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Inverse of :func:`write_pgm` up to scaling: returns ``(values[i, j], maxval)``."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if tokens[0] != "P2":
        raise ConfigError("not an ASCII PGM file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array(tokens[4:4 + w * h], dtype=np.int64).reshape(h, w)
    return data[::-1].T, maxval


# -- scenes ---------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _points(text: str) -> list[tuple[float, float]]:
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        xy = _floats(chunk)
        if len(xy) != 2:
            raise ConfigError(f"bad point {chunk!r}")
        pts.append((xy[0], xy[1]))
    return pts


def _intervals(text: str) -> list[tuple[float, float]]:
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        ab = _floats(chunk.replace(":", " "))
        if len(ab) != 2:
            raise ConfigError(f"bad interval {chunk!r}")
        out.append((ab[0], ab[1]))
    return out


def _tag(text: str) -> str:
    t = text.strip().upper()
    if t not in (TAG_E, TAG_R):
        raise ConfigError(f"tag must be E or R, got {text!r}")
    return t


def _load(path_or_text, is_text: bool) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        if is_text:
            cp.read_string(path_or_text)
        else:
            if not os.path.exists(path_or_text):
                raise FileNotFoundError(path_or_text)
            with open(path_or_text) as fh:
                cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return cp


def scene_from_config(cp: configparser.ConfigParser) -> Domain2D:
    if "scene" not in cp:
        raise ConfigError("missing [scene] section")
    s = cp["scene"]
    variant = s.get("variant", "").strip().lower()
    try:
        if variant == "disc":
            e_arcs = None
            if "e_arcs" in s:
                text = s["e_arcs"].strip().lower()
                e_arcs = [] if text in ("", "none") else _intervals(text)
            pts = _floats(s.get("e_points", ""))
            return Domain2D.disc(s.getfloat("radius", 1.0), e_arcs, pts)
        if variant == "square":
            return Domain2D.square(s.getfloat("side", 1.0), s.get("tags", "EEEE").strip())
        if variant == "cone":
            return Domain2D.cone_sector(s.getfloat("opening_angle"), s.getfloat("cap_radius", 1.0),
                                        _tag(s.get("arc_tag", TAG_E)), _tag(s.get("side_tag", TAG_R)))
        if variant == "annulus":
            c = _floats(s.get("inner_center", "0 0"))
            return Domain2D.annulus(s.getfloat("outer_radius", 1.0), s.getfloat("inner_radius", 0.3),
                                    (c[0], c[1]), _tag(s.get("outer_tag", TAG_E)),
                                    _tag(s.get("inner_tag", TAG_R)))
        if variant == "two_obstacle":
            obs = None
            if "obstacle1" in s or "obstacle2" in s:
                obs = [_points(s["obstacle1"]), _points(s["obstacle2"])]
            return Domain2D.two_obstacle(s.getfloat("outer_radius", 1.0), obs,
                                         _tag(s.get("outer_tag", TAG_E)),
                                         _tag(s.get("obstacle_tag", TAG_R)))
        if variant == "polygon":
            loops, tags = [], []
            k = 1
            while f"loop{k}" in s:
                pts = _points(s[f"loop{k}"])
                t = s.get(f"tags{k}", "").replace(",", "").replace(" ", "")
                if len(t) != len(pts):
                    raise ConfigError(f"tags{k} needs one letter per edge of loop{k}")
                loops.append(pts)
                tags.append([_tag(c) for c in t])
                k += 1
            if not loops:
                raise ConfigError("polygon scene needs loop1")
            return Domain2D.polygon_scene(loops, tags)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad {variant} scene: {exc}") from exc
    raise ConfigError(f"unknown scene variant {variant!r}")


def read_scene(path) -> Domain2D:
    return scene_from_config(_load(str(path), False))


def parse_scene(text: str) -> Domain2D:
    return scene_from_config(_load(text, True))


# -- fields ---------------------------------------------------------------------


def field_from_config(cp: configparser.ConfigParser, base_dir: str = ".") -> ScalarField:
    if "field" not in cp:
        raise ConfigError("missing [field] section")
    s = cp["field"]
    support = _floats(s["support"]) if "support" in s else None
    if support is not None and len(support) != 4:
        raise ConfigError("support needs xmin, xmax, ymin, ymax")
    try:
        if "expression" in s:
            return ScalarField.expression(s["expression"], support=tuple(support) if support else None)
        kind = s.get("kind", "").strip().lower()
        if kind == "gaussian":
            c = _floats(s.get("center", "0 0"))
            return ScalarField.gaussian((c[0], c[1]), s.getfloat("width", 0.15),
                                        s.getfloat("amplitude", 1.0),
                                        tuple(support) if support else None)
        if kind == "disc_indicator":
            c = _floats(s.get("center", "0 0"))
            return ScalarField.disc_indicator(s.getfloat("radius"), (c[0], c[1]))
        if kind == "constant":
            return ScalarField.constant(s.getfloat("value", 1.0), tuple(support) if support else None)
        if "grid" in s:
            gpath = Path(base_dir) / s["grid"].strip()
            if not gpath.exists():
                raise FileNotFoundError(str(gpath))
            vals = np.loadtxt(gpath, delimiter=",", ndmin=2)
            o = _floats(s.get("origin", "0 0"))
            return ScalarField.grid(vals, (o[0], o[1]), s.getfloat("cell", 1.0), gpath.name)
    except FileNotFoundError:
        raise
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad field: {exc}") from exc
    raise ConfigError("field needs expression, kind or grid")


def read_field(path) -> ScalarField:
    path = str(path)
    return field_from_config(_load(path, False), os.path.dirname(os.path.abspath(path)))


def parse_field(text: str, base_dir: str = ".") -> ScalarField:
    return field_from_config(_load(text, True), base_dir)


__all__ = [
    "ConfigError", "fmt", "write_csv", "read_csv", "write_ray_csv", "write_sinogram_csv",
    "write_scan_csv", "write_profile_csv", "write_profiles", "write_grid_csv", "write_pgm",
    "read_pgm", "read_scene", "parse_scene", "scene_from_config", "read_field", "parse_field",
    "field_from_config",
]
