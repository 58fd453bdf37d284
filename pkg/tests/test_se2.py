import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiralanchor.se2 import (
    J,
    LatticeSpec,
    SE2Element,
    act_on_point,
    apply_J,
    compose,
    inverse,
    lattice_element,
    nearest_lattice_point,
    rotation,
)

angles = st.floats(-20, 20, allow_nan=False)
coords = st.floats(-50, 50, allow_nan=False)
elements = st.builds(lambda th, x, y: SE2Element(th, (x, y)), angles, coords, coords)


def test_compose_quarter_turns():
    g = SE2Element(np.pi / 2, (1, 0))
    h = compose(g, g)
    assert h.allclose(SE2Element(np.pi, (1, 1)))


def test_identity_and_inverse():
    g = SE2Element(1.3, (0.2, -4.0))
    e = SE2Element.identity()
    assert compose(e, g).allclose(g)
    assert compose(g, e).allclose(g)
    assert compose(g, inverse(g)).allclose(e)
    assert compose(inverse(g), g).allclose(e)


def test_theta_normalized_at_construction():
    assert SE2Element(-np.pi / 2).theta == pytest.approx(3 * np.pi / 2)
    assert 0 <= SE2Element(7 * np.pi).theta < 2 * np.pi


@pytest.mark.parametrize(
    "g, z, expected",
    [
        (SE2Element(np.pi / 2, (0, 0)), (1, 0), (0, 1)),
        (SE2Element(0.0, (3, 4)), (1, 1), (4, 5)),
        (SE2Element(np.pi, (1, 0)), (1, 0), (0, 0)),
    ],
)
def test_act_on_point(g, z, expected):
    np.testing.assert_allclose(act_on_point(g, z), expected, atol=1e-15)


def test_apply_J():
    np.testing.assert_array_equal(apply_J([1.0, 0.0]), [0.0, -1.0])
    v = np.array([0.3, -1.7])
    w = v
    for _ in range(4):
        w = apply_J(w)
    np.testing.assert_array_equal(w, v)
    np.testing.assert_array_equal(apply_J(apply_J(v)), -v)
    np.testing.assert_allclose(J, rotation(-np.pi / 2), atol=1e-16)


@settings(max_examples=200, deadline=None)
@given(elements, elements, elements)
def test_compose_associative(a, b, c):
    assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), atol=1e-12 * 100)


@settings(max_examples=200, deadline=None)
@given(elements, elements, coords, coords)
def test_action_is_homomorphism(g2, g1, x, y):
    z = np.array([x, y])
    lhs = act_on_point(compose(g2, g1), z)
    rhs = act_on_point(g2, act_on_point(g1, z))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(z).max() + 100))


@settings(max_examples=200, deadline=None)
@given(angles, coords, coords)
def test_J_commutes_with_rotations(theta, x, y):
    v = np.array([x, y])
    np.testing.assert_allclose(rotation(theta) @ apply_J(v), apply_J(rotation(theta) @ v), atol=1e-12 * (1 + abs(x) + abs(y)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 3), st.integers(-5, 5), st.integers(-5, 5))
def test_lattice_elements_preserve_unit_lattice(q, m, n):
    g = lattice_element(q, (m, n))
    grid = np.array([(i, j) for i in range(-3, 4) for j in range(-3, 4)], dtype=float)
    img = act_on_point(g, grid)
    np.testing.assert_allclose(img, np.round(img), atol=1e-12)


def test_lattice_element_rejects_fractional_shift():
    with pytest.raises(ValueError):
        lattice_element(1, (0.5, 0))


def _brute_nearest(lattice, z, radius=4):
    best = None
    cm, cn = (int(round(c)) for c in (np.asarray(z) - lattice.origin) / lattice.spacing)
    for m in range(cm - radius, cm + radius + 1):
        for n in range(cn - radius, cn + radius + 1):
            pt = np.array(lattice.origin) + lattice.spacing * np.array([m, n])
            d = np.hypot(*(np.asarray(z) - pt))
            if best is None or d < best[1] - 1e-12:
                best = (pt, d)
    return best


def test_nearest_lattice_point_examples():
    pt, d = nearest_lattice_point(LatticeSpec(4 * np.pi), (6, 6))
    np.testing.assert_array_equal(pt, [0, 0])
    assert d == pytest.approx(np.sqrt(72))
    pt, d = nearest_lattice_point(LatticeSpec(1.0), (0.4, 0.4))
    np.testing.assert_array_equal(pt, [0, 0])
    assert d == pytest.approx(0.4 * np.sqrt(2))
    pt, d = nearest_lattice_point(LatticeSpec(1.0), (0.5, 0.0))
    np.testing.assert_array_equal(pt, [0, 0])
    assert d == 0.5


@settings(max_examples=200, deadline=None)
@given(coords, coords, st.floats(0.5, 13))
def test_nearest_lattice_point_matches_enumeration(x, y, spacing):
    lat = LatticeSpec(spacing, (0.25, -0.5))
    z = (x / 10, y / 10)
    pt, d = nearest_lattice_point(lat, z)
    _, d_ref = _brute_nearest(lat, z)
    assert d == pytest.approx(d_ref, abs=1e-12)


def test_lattice_spacing_positive():
    with pytest.raises(ValueError):
        LatticeSpec(0.0)
