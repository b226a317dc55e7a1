import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuspwind.errors import AffineGenerator, NotInUpperHalfPlane, NotParabolic, PoleAtInput
from cuspwind.hyperbolic import (
    IDENTITY, Kind, Mobius, ParabolicCusp, apply, classify, compose, cusp_of, derivative,
    hyperbolic_distance, isometric_circle, parabolic_from_cusp, parabolic_power, parabolic_power_apply,
)

finite = st.floats(-5, 5, allow_nan=False)


@st.composite
def mobius(draw):
    a, b, c = draw(finite), draw(finite), draw(st.floats(0.1, 5))
    d = (1 + b * c) / a if abs(a) > 0.1 else draw(finite)
    if abs(a) <= 0.1:
        b = (a * d - 1) / c
    return Mobius(a, b, c, d)


def test_apply_examples():
    assert apply(IDENTITY, 0.7) == 0.7
    assert apply(Mobius(1, 1, 0, 1), 2) == 3
    assert apply(Mobius(1, 0, 1, 1), 1) == 0.5


def test_apply_pole():
    with pytest.raises(PoleAtInput):
        apply(Mobius(1, 0, 1, 1), -1.0)


def test_derivative_examples():
    assert derivative(IDENTITY, 3.3) == 1
    assert derivative(Mobius(1, 0, 1, 1), 1) == 0.25


def test_normalization():
    m = Mobius(2, 0, 0, 2)
    assert abs(m.a * m.d - m.b * m.c - 1) <= 1e-12
    assert Mobius(-1, -1, 0, -1) == Mobius(1, 1, 0, 1)


def test_distance_examples():
    assert hyperbolic_distance(1j, 1j) == 0
    assert hyperbolic_distance(1j, 2j) == pytest.approx(math.log(2), abs=1e-14)
    assert hyperbolic_distance(1j, 1 + 1j) == pytest.approx(math.acosh(1.5), abs=1e-14)
    with pytest.raises(NotInUpperHalfPlane):
        hyperbolic_distance(1j, -1j)


def test_classify():
    assert classify(Mobius(1, 1, 0, 1)) is Kind.PARABOLIC
    assert classify(Mobius(2, 0, 0, 0.5)) is Kind.HYPERBOLIC
    assert classify(Mobius(0, -1, 1, 0)) is Kind.ELLIPTIC
    assert classify(IDENTITY) is Kind.IDENTITY


def test_isometric_circle():
    assert isometric_circle(Mobius(1, 0, 1, 1)) == (-1, 1)
    assert isometric_circle(Mobius(3, -2, 2, -1)) == (0.5, 0.5)
    m = Mobius(Fraction(3), Fraction(8), Fraction(1), Fraction(3))
    assert isometric_circle(m.inverse())[0] == m.a / m.c
    with pytest.raises(AffineGenerator):
        isometric_circle(Mobius(1, 1, 0, 1))


def test_parabolic_from_cusp():
    assert parabolic_from_cusp(ParabolicCusp(0, 1)) == Mobius(1, 0, 1, 1)
    # tau^-1 sigma tau with tau(x) = x - p, by explicit matrix products
    tau = np.array([[1, -1], [0, 1]])
    sigma = np.array([[1, 0], [2, 1]])
    expected = np.linalg.inv(tau) @ sigma @ tau
    assert np.allclose(parabolic_from_cusp(ParabolicCusp(1, 2)).as_array(), expected)
    assert np.allclose(expected, [[3, -2], [2, -1]])


def test_cusp_of():
    assert cusp_of(Mobius(1, 0, 1, 1)) == (ParabolicCusp(0, 1), 1)
    assert cusp_of(Mobius(3, -2, 2, -1)) == (ParabolicCusp(1, 2), 1)
    assert cusp_of(Mobius(1, 0, -1, 1)) == (ParabolicCusp(0, 1), -1)
    with pytest.raises(NotParabolic):
        cusp_of(Mobius(2, 0, 0, 0.5))
    with pytest.raises(AffineGenerator):
        cusp_of(Mobius(1, 1, 0, 1))


@given(st.floats(-10, 10), st.floats(0.05, 10))
def test_cusp_round_trip(p, w):
    c, o = cusp_of(parabolic_from_cusp(ParabolicCusp(p, w)))
    assert o == 1
    assert c.p == pytest.approx(p, abs=1e-9 * max(1, abs(p)))
    assert c.w == pytest.approx(w, rel=1e-12)


def test_parabolic_power_apply_examples():
    c = ParabolicCusp(0, 1)
    assert parabolic_power_apply(c, 3, 1) == 0.25
    assert parabolic_power_apply(c, 0, 0.3) == 0.3
    assert parabolic_power_apply(c, 3, Fraction(1)) == Fraction(1, 4)
    with pytest.raises(PoleAtInput):
        parabolic_power_apply(c, 2, Fraction(-1, 2))


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(0.2, 3), st.integers(-300, 300), st.floats(-4, 4))
def test_parabolic_power_matches_iteration(p, w, n, x):
    c = ParabolicCusp(p, w)
    m = parabolic_from_cusp(c) if n >= 0 else parabolic_from_cusp(c).inverse()
    if abs(1 + n * w * (x - p)) < 1e-3:
        return
    y = x
    try:
        for _ in range(abs(n)):
            y = apply(m, y)
    except PoleAtInput:
        return
    assert parabolic_power_apply(c, n, x) == pytest.approx(y, abs=1e-8, rel=1e-8)
    assert np.allclose(parabolic_power(c, n).as_array(), m.power(abs(n)).as_array(), atol=1e-8)


@given(mobius(), mobius(), finite)
def test_composition_and_cocycle(g, h, x):
    try:
        hx = apply(h, x)
        lhs = apply(compose(g, h), x)
        rhs = apply(g, hx)
        dl = derivative(compose(g, h), x)
        dr = derivative(g, hx) * derivative(h, x)
    except PoleAtInput:
        return
    assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-6)
    assert dl == pytest.approx(dr, rel=1e-6)


@given(mobius(), finite, finite)
def test_two_point_conformality(g, x1, x2):
    try:
        y1, y2 = apply(g, x1), apply(g, x2)
        d1, d2 = derivative(g, x1), derivative(g, x2)
    except PoleAtInput:
        return
    lhs = (y1 - y2) ** 2
    assert lhs == pytest.approx(d1 * d2 * (x1 - x2) ** 2, rel=1e-6, abs=1e-12)


def test_inverse_distance_symmetry():
    m = Mobius(3, 8, 1, 3)

    def orbit(g):
        return (g.a * 1j + g.b) / (g.c * 1j + g.d)

    assert hyperbolic_distance(1j, orbit(m.inverse())) == pytest.approx(hyperbolic_distance(1j, orbit(m)))
