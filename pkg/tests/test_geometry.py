import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brokenray.geometry import (CornerError, Domain2D, GeometryError, UnitSpeedState,
                                boundary_data, contains, reflect_direction)

angles = st.floats(0.0, 2 * math.pi, allow_nan=False)


def unit(a):
    return np.array([math.cos(a), math.sin(a)])


@pytest.mark.parametrize("v, nu, expected", [
    ((math.sqrt(2) / 2, math.sqrt(2) / 2), (0, 1), (math.sqrt(2) / 2, -math.sqrt(2) / 2)),
    ((1, 0), (0, 1), (1, 0)),
    ((0, 1), (0, 1), (0, -1)),
])
def test_reflect_examples(v, nu, expected):
    assert np.allclose(reflect_direction(v, nu), expected, atol=1e-15)


@settings(max_examples=300, deadline=None)
@given(angles, angles)
def test_reflection_is_involution_and_flips_normal(a, b):
    v, nu = unit(a), unit(b)
    w = reflect_direction(v, nu)
    assert abs(np.linalg.norm(w) - 1) < 1e-12
    assert np.allclose(reflect_direction(w, nu), v, atol=1e-12)
    assert abs(w @ nu + v @ nu) < 1e-12
    t = np.array([-nu[1], nu[0]])
    assert abs(w @ t - v @ t) < 1e-12


def test_boundary_data_disc_point():
    d = boundary_data(Domain2D.disc(), 0, 0.0)
    assert np.allclose(d.point, (1, 0)) and np.allclose(d.normal, (1, 0))
    assert d.curvature == pytest.approx(1.0)
    assert d.second_fundamental_form == d.curvature


def test_boundary_data_square_bottom_side():
    sq = Domain2D.square()
    for t in (0.2, 0.5, 0.9):
        d = boundary_data(sq, 0, t)
        assert np.allclose(d.normal, (0, -1)) and d.curvature == 0


def test_boundary_data_annulus_obstacle():
    ann = Domain2D.annulus(inner_radius=0.3)
    d = boundary_data(ann, 1, 0.1)
    assert abs(d.curvature) == pytest.approx(1 / 0.3)
    assert d.curvature < 0
    assert d.tag == "R"


def test_boundary_data_errors():
    with pytest.raises(GeometryError):
        boundary_data(Domain2D.disc(), 0, 10.0)
    with pytest.raises(CornerError):
        boundary_data(Domain2D.square(), 0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.2, 3.0), angles)
def test_disc_normals_and_curvature(radius, theta):
    dom = Domain2D.disc(radius)
    d = boundary_data(dom, 0, radius * theta)
    assert np.allclose(d.normal, unit(theta), atol=1e-12)
    assert abs(d.curvature - 1 / radius) < 1e-12


@pytest.mark.parametrize("dom, p, inside", [
    (Domain2D.disc(), (0, 0), True),
    (Domain2D.disc(), (2, 0), False),
    (Domain2D.annulus(), (0.1, 0), False),
    (Domain2D.annulus(), (0.5, 0), True),
    (Domain2D.disc(), (1, 0), True),
])
def test_contains(dom, p, inside):
    assert contains(dom, p) is inside


def test_unit_speed_state_is_normalised():
    s = UnitSpeedState(np.zeros(2), np.array([2.0, 0.0]))
    assert abs(np.linalg.norm(s.v) - 1) < 1e-12
    with pytest.raises(GeometryError):
        UnitSpeedState(np.zeros(2), np.zeros(2))


def test_scene_validation():
    with pytest.raises(GeometryError):
        Domain2D.annulus(inner_radius=0.9, inner_center=(0.5, 0))
    with pytest.raises(GeometryError):
        Domain2D.square(tags="EEE")


def test_disc_tags_partition():
    dom = Domain2D.disc(e_arcs=[(0, math.pi / 2)])
    assert [p.tag for p in dom.pieces] == ["E", "R"]
    assert sum(p.curve.length for p in dom.pieces) == pytest.approx(2 * math.pi)
    # the closure of E wins at the junction
    assert dom.tag_at((0.0, 1.0)) == "E"
    assert dom.tag_at((-1.0, 0.0)) == "R"


def test_singleton_e_point():
    dom = Domain2D.disc(e_arcs=[], e_points_angles=[0.0])
    assert dom.tag_at((1.0, 0.0)) == "E"
    assert dom.tag_at((0.0, 1.0)) == "R"
