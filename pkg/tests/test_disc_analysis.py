import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brokenray.billiard import disc_ray
from brokenray.disc_analysis import (DiscBRTOracle, OracleError, RadialProfile, abel_invert, abel_k,
                                     angular_derivative, best_closed_ray, fourier_profiles,
                                     invert_abel_k, phase_sum, recover_band_limited,
                                     recover_radial, rotate_field, synthesize)
from brokenray.transform import QuadratureSpec, ScalarField, _circle_crossings, path_integral


def graded_breaks(p0, p1):
    """Circle crossings plus panels graded towards the point nearest the origin,
    where the angular factor of an e^{ik theta} field varies on the scale rho."""
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


def bump(r):
    r = np.asarray(r, float)
    inside = (r > 0.2) & (r < 0.8)
    q = np.clip((r - 0.2) * (0.8 - r), 1e-300, None)
    return np.where(inside, np.exp(-0.09 / q), 0.0)


def chord(rho, phi):
    e = np.array([math.cos(phi), math.sin(phi)])
    t = np.array([-e[1], e[0]])
    S = math.sqrt(1 - rho * rho)
    return np.array([rho * e - S * t, rho * e + S * t])


# -- Fourier profiles ---------------------------------------------------------------


def test_profiles_of_constant():
    r = np.linspace(0, 1, 11)
    profs = fourier_profiles(ScalarField.constant(1.0), 3, r, 16)
    for p in profs:
        expect = 1.0 if p.k == 0 else 0.0
        assert np.allclose(p.values, expect, atol=1e-15)


def test_profiles_of_r_cos_theta():
    r = np.linspace(0, 1, 11)
    profs = {p.k: p for p in fourier_profiles(ScalarField.expression("x"), 3, r, 16)}
    assert np.allclose(profs[1].values, r / 2, atol=1e-15)
    assert np.allclose(profs[-1].values, r / 2, atol=1e-15)
    for k in (0, 2, -2, 3, -3):
        assert np.allclose(profs[k].values, 0, atol=1e-15)


def test_profiles_resynthesize_gaussian():
    g = ScalarField.gaussian((0.3, -0.2), 0.4)
    r = np.linspace(0, 1, 21)
    profs = fourier_profiles(g, 24, r, 64)
    th = np.linspace(0, 2 * math.pi, 17)
    R, T = np.meshgrid(r, th, indexing="ij")
    est = synthesize(profs, R, T).real
    assert np.max(np.abs(est - g(R * np.cos(T), R * np.sin(T)))) <= 1e-6


def test_profiles_conjugate_symmetry_for_real_field(rng):
    g = ScalarField.gaussian((0.3, -0.2), 0.4)
    profs = {p.k: p for p in fourier_profiles(g, 5, np.linspace(0, 1, 9), 16)}
    for k in range(1, 6):
        assert np.allclose(profs[-k].values, np.conj(profs[k].values), atol=1e-15)


def test_profiles_reject_undersampling():
    with pytest.raises(ValueError):
        fourier_profiles(ScalarField.constant(1.0), 4, [0.5], 8)


# -- generalized Abel -------------------------------------------------------------


def test_abel_k_constant_chord():
    assert abel_k(lambda r: np.ones_like(r), 0, 0.6) == pytest.approx(1.6, abs=1e-13)


@pytest.mark.parametrize("k", [0, 1, 4])
def test_abel_k_of_zero(k):
    assert abel_k(lambda r: np.zeros_like(r), k, 0.3) == 0.0


def test_abel_k1_linear_profile_matches_line_quadrature():
    f = unit_disc_field(lambda r, t: np.exp(1j * t) * r, is_complex=True)
    phi = 0.7
    v = path_integral(f, chord(0.5, phi), QuadratureSpec(64))
    assert abs(v / np.exp(1j * phi) - abel_k(lambda r: r, 1, 0.5)) <= 1e-8


def test_phase_identity_random_lines(rng):
    prof = lambda r: r * (1 - r * r)  # noqa: E731
    for _ in range(20):
        rho, phi = rng.uniform(0.01, 0.99), rng.uniform(0, 2 * math.pi)
        for k in range(6):
            f = unit_disc_field(lambda r, t: np.exp(1j * k * t) * prof(r), is_complex=True)
            v = path_integral(f, chord(rho, phi), QuadratureSpec(64))
            assert abs(v - np.exp(1j * k * phi) * abel_k(prof, k, rho)) <= 1e-8


def test_abel_k_rejects_rho_out_of_range():
    with pytest.raises(ValueError):
        abel_k(lambda r: r, 0, 1.2)


def test_invert_abel_k_round_trip():
    r = np.linspace(0, 1, 101)
    z = np.concatenate([np.linspace(0.01, 0.99, 80), [1.0]])
    for k in range(4):
        pr = lambda s: (1 - s * s) ** 2 * s ** k * (1 + s)  # noqa: E731
        g = np.array([abel_k(pr, k, q) for q in z])
        p = invert_abel_k(k, z, g, np.linspace(0, 1, 65))
        assert np.linalg.norm(p(r) - pr(r)) / np.linalg.norm(pr(r)) <= 2e-3


# -- Abel inversion ---------------------------------------------------------------


def test_abel_invert_unit_profile():
    z = np.linspace(0, 1, 512)
    a = abel_invert(z, 2 * np.sqrt(1 - z * z))
    assert np.max(np.abs(a - 1)) <= 0.02


def test_abel_invert_zero():
    z = np.linspace(0, 1, 64)
    assert np.all(abel_invert(z, np.zeros(64)) == 0)


def test_abel_invert_bump_round_trip():
    z = np.linspace(0, 1, 512)
    g = np.array([abel_k(bump, 0, q) for q in z])
    a = abel_invert(z, g)
    assert np.linalg.norm(a - bump(z)) / np.linalg.norm(bump(z)) <= 0.02


def test_abel_invert_rejects_bad_grid():
    with pytest.raises(ValueError):
        abel_invert(np.array([0.0, 0.5, 0.4, 1.0]), np.zeros(4))


# -- oracle and closed rays -----------------------------------------------------------


def test_singleton_oracle_refuses_open_ray():
    orc = DiscBRTOracle(ScalarField.constant(1.0), e_arcs=[], e_points=[0.0])
    with pytest.raises(OracleError):
        orc(0.0, 1.0, 3)
    assert orc(0.0, 2 * math.pi / 5, 5) == pytest.approx(10 * math.sin(math.pi / 5), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.02, 0.98))
def test_best_closed_ray_returns_to_start(z):
    m, n = best_closed_ray(z, 50, 100)
    assert math.gcd(m, n) == 1 and 50 <= n <= 100
    assert abs(math.cos(math.pi * m / n) - z) <= math.pi / 50
    kappa = disc_ray(0.0, 2 * math.pi * m / n, n)[1].kappa
    assert abs(math.remainder(kappa, 2 * math.pi)) <= 1e-9


def test_phase_sum_vanishes_at_roots_of_unity():
    assert abs(phase_sum(1, 2 * math.pi / 3, 3)) <= 1e-12
    assert abs(phase_sum(0, 0.4, 7) - 7) <= 1e-12


# -- pipelines ----------------------------------------------------------------------


def singleton_oracle(f):
    return DiscBRTOracle(f, e_arcs=[], e_points=[0.0], quad=QuadratureSpec(8))


def test_recover_radial_indicator():
    z = np.linspace(0, 1, 257)
    rec = recover_radial(singleton_oracle(ScalarField.disc_indicator(0.5)), z, n_max=200)
    truth = (z <= 0.5).astype(float)
    away = np.abs(z - 0.5) > 0.05
    assert math.sqrt(np.mean((rec.profile.values - truth)[away] ** 2)) <= 0.05
    assert rec.report["mode"] == "singleton" and rec.report["n_max"] == 200


def test_recover_radial_of_x_is_zero():
    z = np.linspace(0, 1, 129)
    rec = recover_radial(singleton_oracle(ScalarField.expression("x")), z, n_max=200)
    assert np.max(np.abs(rec.profile.values)) <= 0.01


def test_recover_radial_gaussian():
    z = np.linspace(0, 1, 129)
    f = ScalarField.radial(lambda r: np.exp(-r * r / 0.08))
    rec = recover_radial(singleton_oracle(f), z, n_max=200)
    truth = np.exp(-z * z / 0.08)
    assert np.linalg.norm(rec.profile.values - truth) / np.linalg.norm(truth) <= 0.02


def test_band_k0_agrees_with_radial():
    f = unit_disc_field(lambda r, t: (1 - r * r) ** 2)
    z = np.linspace(0.01, 0.99, 60)
    band = recover_band_limited(DiscBRTOracle(f, quad=QuadratureSpec(16)), 0, z, n=3)
    r = np.linspace(0, 1, 51)
    a0 = band.profiles[0]
    assert a0.k == 0
    assert np.linalg.norm(a0(r) - (1 - r * r) ** 2) / np.linalg.norm((1 - r * r) ** 2) <= 0.01


def test_band_r_cos_theta():
    f = unit_disc_field(lambda r, t: r * np.cos(t))
    z = np.linspace(0.01, 0.99, 80)
    rec = recover_band_limited(DiscBRTOracle(f, quad=QuadratureSpec(16)), 1, z, n=3)
    a1 = [p for p in rec.profiles if p.k == 1][0]
    r = np.linspace(0, 1, 101)
    assert np.linalg.norm(a1(r) - r / 2) / np.linalg.norm(r / 2) <= 0.03


def test_band_three_random_profiles():
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

    rec = recover_band_limited(DiscBRTOracle(unit_disc_field(F), quad=QuadratureSpec(16)), K,
                               np.linspace(0.01, 0.99, 80), n=3)
    r = np.linspace(0, 1, 101)
    th = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    R, T = np.meshgrid(r, th, indexing="ij")
    est = synthesize(rec.profiles, R, T).real
    tru = F(R, T)
    assert math.sqrt(((est - tru) ** 2 * R).sum() / (tru ** 2 * R).sum()) <= 0.05


def test_band_requires_enough_rotations():
    with pytest.raises(ValueError):
        recover_band_limited(DiscBRTOracle(ScalarField.constant(1.0)), 2, [0.5], rotations=[0, 1, 2])


# -- rotation principles ----------------------------------------------------------------


def test_rotation_covariance(rng):
    f = ScalarField.gaussian((0.3, 0.2), 0.2)
    for _ in range(10):
        beta, iota = rng.uniform(0, 2 * math.pi, 2)
        alpha, n = rng.uniform(0.3, 3.0), int(rng.integers(1, 8))
        a = path_integral(rotate_field(f, beta), disc_ray(iota, alpha, n)[0].vertices)
        b = path_integral(f, disc_ray(iota - beta, alpha, n)[0].vertices)
        assert abs(a - b) <= 1e-9


def test_angular_derivative_of_vanishing_scan():
    f = unit_disc_field(lambda r, t: bump(r) * np.cos(t))
    df = angular_derivative(f)
    for p, q in ((1, 3), (2, 5)):
        for iota in 2 * math.pi * np.arange(6) / 6:
            verts = disc_ray(iota, 2 * math.pi * p / q, q)[0].vertices
            assert abs(path_integral(f, verts)) <= 1e-8
            assert abs(path_integral(df, verts)) <= 1e-8


def test_radial_profile_zero_outside_grid():
    p = RadialProfile(0, np.linspace(0, 1, 5), np.ones(5))
    assert p(1.5) == 0.0 and p(0.3) == 1.0
