"""Möbius transformations of the upper half-plane and its real boundary.

Entries may be floats or ``fractions.Fraction``.  With exact unit-determinant
input every operation here stays exact, which the orbit checks in
``boundary`` rely on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

import numpy as np

from .errors import (
    AffineGenerator,
    NotInUpperHalfPlane,
    NotParabolic,
    PoleAtInput,
)

DET_TOL = 1e-12
CLASS_TOL = 1e-9
POINT_RTOL = 1e-10
POLE_RTOL = 1e-15


class Kind(enum.Enum):
    IDENTITY = "identity"
    PARABOLIC = "parabolic"
    HYPERBOLIC = "hyperbolic"
    ELLIPTIC = "elliptic"


def _is_exact(*vals) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in vals)


@dataclass(frozen=True)
class Mobius:
    """Matrix [[a, b], [c, d]] normalized to ad - bc = 1 and trace >= 0."""

    a: Real
    b: Real
    c: Real
    d: Real

    def __post_init__(self):
        a, b, c, d = self.a, self.b, self.c, self.d
        det = a * d - b * c
        if not _is_exact(a, b, c, d) and abs(det - 1) <= DET_TOL * max(1.0, abs(a * d) + abs(b * c)):
            det = 1  # unimodular up to rounding; products of long words cancel badly here
        if det <= 0:
            raise ValueError(f"determinant must be positive, got {det}")
        if det != 1:
            if _is_exact(a, b, c, d):
                # sqrt of a rational is rarely rational: fall back to floats
                a, b, c, d = float(a), float(b), float(c), float(d)
            r = math.sqrt(float(det))
            a, b, c, d = a / r, b / r, c / r, d / r
        tr = a + d
        flip = tr < 0 or (abs(tr) <= CLASS_TOL and (a < 0 or (a == 0 and b < 0)))
        if flip:
            a, b, c, d = -a, -b, -c, -d
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def trace(self):
        return self.a + self.d

    @property
    def exact(self) -> bool:
        return _is_exact(self.a, self.b, self.c, self.d)

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=float)

    def to_float(self) -> "Mobius":
        return Mobius(float(self.a), float(self.b), float(self.c), float(self.d))

    def __matmul__(self, other: "Mobius") -> "Mobius":
        return compose(self, other)

    def inverse(self) -> "Mobius":
        return Mobius(self.d, -self.b, -self.c, self.a)

    def power(self, n: int) -> "Mobius":
        if n < 0:
            return self.inverse().power(-n)
        out, base = IDENTITY, self
        while n:
            if n & 1:
                out = out @ base
            base = base @ base
            n >>= 1
        return out


IDENTITY = Mobius(1, 0, 0, 1)


@dataclass(frozen=True)
class ParabolicCusp:
    """Fixed point p and width w of a parabolic generator."""

    p: Real
    w: Real

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError(f"cusp width must be positive, got {self.w}")


def compose(g: Mobius, h: Mobius) -> Mobius:
    """The map x -> g(h(x))."""
    return Mobius(
        g.a * h.a + g.b * h.c,
        g.a * h.b + g.b * h.d,
        g.c * h.a + g.d * h.c,
        g.c * h.b + g.d * h.d,
    )


def inverse(m: Mobius) -> Mobius:
    return m.inverse()


def _denominator(m: Mobius, x):
    den = m.c * x + m.d
    if isinstance(x, np.ndarray):
        scale = np.maximum(np.abs(m.c * x) + abs(m.d), 1.0)
        if np.any(np.abs(den) <= POLE_RTOL * scale):
            raise PoleAtInput("cx + d vanishes for some input")
    elif _is_exact(den):
        if den == 0:
            raise PoleAtInput(f"cx + d = 0 at x = {x}")
    elif abs(den) <= POLE_RTOL * max(abs(m.c * x) + abs(m.d), 1.0):
        raise PoleAtInput(f"cx + d = {den} at x = {x}")
    return den


def apply(m: Mobius, x):
    """(ax + b)/(cx + d) on a boundary point or an array of them."""
    den = _denominator(m, x)
    return (m.a * x + m.b) / den


def derivative(m: Mobius, x):
    """|g'(x)| = 1/(cx + d)^2 for a unit-determinant matrix."""
    den = _denominator(m, x)
    return 1 / (den * den)


def hyperbolic_distance(z1: complex, z2: complex) -> float:
    z1, z2 = complex(z1), complex(z2)
    if z1.imag <= 0 or z2.imag <= 0:
        raise NotInUpperHalfPlane(f"points {z1}, {z2} must have positive imaginary part")
    arg = 1.0 + abs(z1 - z2) ** 2 / (2.0 * z1.imag * z2.imag)
    return math.acosh(arg)


def apply_interior(m: Mobius, z: complex) -> complex:
    """Action on a point of the upper half-plane."""
    a, b, c, d = (float(v) for v in (m.a, m.b, m.c, m.d))
    return (a * z + b) / (c * z + d)


def classify(m: Mobius) -> Kind:
    a, b, c, d = (float(v) for v in (m.a, m.b, m.c, m.d))
    if abs(b) <= CLASS_TOL and abs(c) <= CLASS_TOL and abs(a - d) <= CLASS_TOL:
        return Kind.IDENTITY
    t = abs(a + d)
    if abs(t - 2.0) <= CLASS_TOL:
        return Kind.PARABOLIC
    return Kind.HYPERBOLIC if t > 2.0 else Kind.ELLIPTIC


def isometric_circle(m: Mobius):
    """(center, radius) of the circle |cz + d| = 1."""
    if m.c == 0:
        raise AffineGenerator("c = 0: the map fixes infinity and has no isometric circle")
    return -m.d / m.c, 1 / abs(m.c)


def parabolic_from_cusp(cusp: ParabolicCusp) -> Mobius:
    """Matrix of x -> p + (x-p)/(1 + w(x-p)), i.e. translate, shear, translate back."""
    p, w = cusp.p, cusp.w
    return Mobius(1 + p * w, -p * p * w, w, 1 - p * w)


def cusp_of(m: Mobius):
    """Return ``(cusp, orientation)`` for a parabolic matrix.

    Orientation is +1 when ``parabolic_from_cusp(cusp)`` reproduces ``m`` and
    -1 when it reproduces ``m`` inverted.  The positive element is the one whose
    lower-left entry is positive; conjugating by a translation leaves that
    entry unchanged.
    """
    if classify(m) is not Kind.PARABOLIC:
        raise NotParabolic(f"trace {m.trace} is not +-2")
    if m.c == 0:
        raise AffineGenerator("parabolic element fixing infinity")
    p = (m.a - m.d) / (2 * m.c)
    orientation = 1 if m.c > 0 else -1
    return ParabolicCusp(p, abs(m.c)), orientation


def parabolic_power_apply(cusp: ParabolicCusp, n: int, x):
    """n-th iterate of the generator built from ``cusp``, in closed form.

    Negative n iterates the inverse.  Works elementwise on arrays.
    """
    y = x - cusp.p
    den = 1 + n * cusp.w * y
    if isinstance(den, np.ndarray):
        if np.any(np.abs(den) <= POLE_RTOL * (1 + np.abs(n * cusp.w * y))):
            raise PoleAtInput("parabolic power hits infinity")
    elif _is_exact(den):
        if den == 0:
            raise PoleAtInput(f"parabolic power {n} sends {x} to infinity")
    elif abs(den) <= POLE_RTOL * (1 + abs(n * cusp.w * y)):
        raise PoleAtInput(f"parabolic power {n} sends {x} to infinity")
    return cusp.p + y / den


def parabolic_power_derivative(cusp: ParabolicCusp, n: int, x):
    den = 1 + n * cusp.w * (x - cusp.p)
    return 1 / (den * den)


def parabolic_power(cusp: ParabolicCusp, n: int) -> Mobius:
    """Matrix of the n-th power, I + n(g - I) since (g - I)^2 = 0."""
    g = parabolic_from_cusp(cusp)
    return Mobius(1 + n * (g.a - 1), n * g.b, n * g.c, 1 + n * (g.d - 1))


def points_close(x, y) -> bool:
    return abs(x - y) <= POINT_RTOL * max(1.0, abs(x), abs(y))
