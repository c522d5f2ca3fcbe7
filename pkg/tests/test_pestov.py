import math

import numpy as np
import pytest

from brokenray.geometry import Domain2D, GeometryError
from brokenray.pestov import (BoundaryConditionError, apply_V, apply_X, build_uf, even_odd_split,
                              observed_order, pestov_report, reflection_bc_error, stability_probe,
                              synthetic_grid, transport_refinement, transport_residual)
from brokenray.transform import ScalarField

GAUSS = ScalarField.gaussian((0.2, 0.5), 0.2)


@pytest.fixture(scope="module")
def annulus():
    return Domain2D.annulus()


@pytest.fixture(scope="module")
def gauss_grid(annulus):
    return build_uf(annulus, GAUSS, 33, 32, 32)


def theta_grid(func, n=16, r_in=0.3):
    return synthetic_grid(r_in, n, n, n, func)


# -- u^f ---------------------------------------------------------------------------


def test_uf_of_zero_field(annulus):
    g = build_uf(annulus, ScalarField.constant(0.0), 8, 8, 8)
    assert np.all(g.values == 0)


def test_uf_of_one_head_on_and_outward(annulus):
    g = build_uf(annulus, ScalarField.constant(1.0), 8, 8, 8)
    # x = (-1, 0): psi index 4; theta = 0 points at the obstacle
    assert g.values[-1, 4, 0] == pytest.approx(1.4, abs=1e-12)
    # x = (1, 0) with v = (1, 0) leaves at once
    assert g.values[-1, 0, 0] == pytest.approx(0.0, abs=1e-15)


def test_uf_rejects_eccentric_obstacle():
    dom = Domain2D.annulus(1.0, 0.3, (0.2, 0.0))
    with pytest.raises(GeometryError):
        build_uf(dom, GAUSS, 8, 8, 8)


def test_uf_rejects_other_scenes():
    with pytest.raises(GeometryError):
        build_uf(Domain2D.disc(), GAUSS, 8, 8, 8)


def test_transport_residual_small_on_unmasked_cells(gauss_grid):
    res, mask = transport_residual(gauss_grid, GAUSS)
    assert np.median(np.abs(res[~mask])) <= 5 * gauss_grid.h
    assert 0 < gauss_grid.masked_fraction < 1


def test_v_of_transport_residual_small(gauss_grid):
    vx = apply_V(apply_X(gauss_grid))
    assert np.median(np.abs(vx.values[~vx.mask])) <= 5 * gauss_grid.h


def test_reflection_condition_on_obstacle(gauss_grid):
    assert reflection_bc_error(gauss_grid) <= 1e-8
    _, odd = even_odd_split(gauss_grid, 0)
    assert np.max(np.where(gauss_grid.mask[0], 0.0, np.abs(odd))) <= 5 * gauss_grid.h


def test_uf_vanishes_on_outgoing_e(gauss_grid):
    g = gauss_grid
    outgoing = np.cos(g.angle_diff()) > 0.2
    assert np.max(np.abs(g.values[-1][outgoing])) <= 1e-14


def test_transport_refinement_nested():
    study = transport_refinement(Domain2D.annulus(), GAUSS, base=16, n_levels=3)
    assert study.levels == [16, 32, 64]
    assert all(r >= 1.5 for r in study.ratios)
    assert study.order >= 1.5
    assert 0 < study.common_fraction <= 1
    assert max(study.bc_error) <= 1e-8
    mf = study.masked_fraction
    assert mf[0] > mf[1] > mf[2]


# -- X and V -------------------------------------------------------------------------


def test_X_of_x1_and_V_of_x1():
    g = theta_grid(lambda r, p, t: r * np.cos(p) + 0 * t, 64)
    expect = np.cos(g.theta)[None, None, :]
    # exact in r; the periodic psi difference of cos(psi) is off by h^2 / 6
    assert np.max(np.abs(apply_X(g).values - expect)) <= g.h_psi ** 2 / 6 + 1e-12
    assert np.max(np.abs(apply_V(g).values)) == 0.0


def test_X_and_V_of_sin_theta():
    g = theta_grid(lambda r, p, t: np.sin(t) + 0 * r * p)
    assert np.max(np.abs(apply_X(g).values)) <= 1e-13
    vv = apply_V(g).values
    assert np.max(np.abs(vv - np.cos(g.theta))) <= 2 * g.h_theta ** 2


def test_X_and_V_second_order():
    def u(r, p, t):
        return r * r * np.sin(p) * np.cos(t) + r ** 3 * np.cos(2 * p - t)

    def xu(r, p, t):
        # v . grad with u in Cartesian form: x1 = r cos p, x2 = r sin p
        ur = 2 * r * np.sin(p) * np.cos(t) + 3 * r * r * np.cos(2 * p - t)
        up = r * r * np.cos(p) * np.cos(t) - 2 * r ** 3 * np.sin(2 * p - t)
        return np.cos(t - p) * ur + np.sin(t - p) / r * up

    def vu(r, p, t):
        return -r * r * np.sin(p) * np.sin(t) + r ** 3 * np.sin(2 * p - t)

    hs, ex, ev = [], [], []
    for n in (16, 32, 64):
        g = theta_grid(u, n)
        R, P, T = np.meshgrid(g.r, g.psi, g.theta, indexing="ij")
        ex.append(np.max(np.abs(apply_X(g).values - xu(R, P, T))))
        ev.append(np.max(np.abs(apply_V(g).values - vu(R, P, T))))
        hs.append(g.h)
    assert observed_order(hs, ex) >= 1.8
    assert observed_order(hs, ev) >= 1.8


# -- the identity -------------------------------------------------------------------


def test_zero_u_gives_zero_terms():
    t = pestov_report(theta_grid(lambda r, p, th: 0 * r * p * th))
    assert t.VXu == t.XVu == t.Xu == t.boundary == t.residual == 0.0


def test_theta_independent_u():
    hs, res = [], []
    for n in (16, 32, 64):
        t = pestov_report(theta_grid(lambda r, p, th: (1 - r) ** 2 * (1 + r) + 0 * p * th, n))
        assert t.XVu == 0.0 and t.boundary == 0.0
        hs.append(t.h)
        res.append(abs(t.VXu - t.Xu) / t.Xu)
    assert res[-1] <= 1e-2
    assert observed_order(hs, res) >= 1


def test_w_sin_theta_residual_converges():
    hs, res = [], []
    for n in (16, 32, 64):
        t = pestov_report(theta_grid(lambda r, p, th: (1 - r) * (1 + r) * np.sin(th - p), n))
        assert t.bc_ok
        hs.append(t.h)
        res.append(abs(t.residual))
    C = res[-1] / hs[-1]
    assert C < 10
    assert observed_order(hs, res) >= 1


def test_default_synthetic_order():
    grids = [synthetic_grid(0.3, n, n, n) for n in (16, 32, 64)]
    rows = [pestov_report(g) for g in grids]
    assert all(r.bc_ok for r in rows)
    assert observed_order([r.h for r in rows], [abs(r.residual) for r in rows]) >= 1


def test_strict_report_rejects_boundary_violation():
    g = theta_grid(lambda r, p, t: 1 + 0 * r * p * t, 64)
    assert not pestov_report(g).bc_ok
    with pytest.raises(BoundaryConditionError):
        pestov_report(g, strict=True)


# -- stability probe ----------------------------------------------------------------


def test_stability_of_zero_field(annulus):
    rep = stability_probe(annulus, ScalarField.constant(0.0), 8, 8, 8)
    assert rep.Vu_E == 0.0 and rep.f_norm == 0.0 and math.isnan(rep.ratio)


def test_stability_of_radial_gaussian(annulus):
    rep = stability_probe(annulus, ScalarField.radial(lambda r: np.exp(-(r - 0.6) ** 2 / 0.02)), 17, 16, 16)
    assert rep.Vu_E > 0 and rep.f_norm > 0
    assert 0 < rep.ratio < math.inf


def test_stability_ratio_depends_on_support(annulus):
    near = stability_probe(annulus, ScalarField.gaussian((0.85, 0.0), 0.08), 17, 16, 16)
    deep = stability_probe(annulus, ScalarField.gaussian((0.45, 0.0), 0.08), 17, 16, 16)
    assert near.ratio != deep.ratio
    assert all(0 < r.ratio < math.inf for r in (near, deep))
