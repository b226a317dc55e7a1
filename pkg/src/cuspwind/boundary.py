"""Bowen-Series coding, the block process (X_k), running maxima and the induced map.

On a_g the map T acts as g.  A point's code is the sequence of letters it
visits; maximal runs of one parabolic letter form a block, and X_k is the
length of the k-th block.  Parabolic runs are skipped in O(1): for x in a_gamma
put u = w|x - p| in (0, 2); gamma^j(x) stays in a_gamma exactly for
j < 1/u - 1/2, so the run has length ceil(1/u - 1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import NotInD, NotInPartition, OrbitEscaped, PoleAtInput
from .group import FuchsianGroup
from .hyperbolic import apply, derivative, parabolic_power_apply

CUSP_GUARD = 1e-13
NO_LIMIT = 10**18


def _exact(x) -> bool:
    return isinstance(x, (int, Fraction))


def _tables(group: FuchsianGroup, exact: bool):
    if exact:
        if group.exact is None:
            raise ValueError("exact arithmetic needs a group spec with rational entries")
        return group.exact, group.exact_intervals, group.exact_cusps
    return group.matrices, [(iv.lo, iv.hi) for iv in group.intervals], group.cusps


def locate(group: FuchsianGroup, x):
    """Letter whose open interval contains x, or None for a gap.

    Parabolic fixed points are endpoints of two intervals and return None.
    """
    _, intervals, _ = _tables(group, _exact(x))
    for k, (lo, hi) in enumerate(intervals):
        if lo < x < hi:
            return k
    return None


def locate_many(group: FuchsianGroup, x: np.ndarray) -> np.ndarray:
    """Vectorized locate; gaps are -1."""
    A = group.arrays()
    x = np.asarray(x, dtype=float)
    k = np.searchsorted(A["lo_sorted"], x, side="right") - 1
    kk = np.maximum(k, 0)
    ok = (k >= 0) & (x < A["hi_sorted"][kk]) & (x > A["lo_sorted"][kk])
    return np.where(ok, A["order"][kk], -1)


def run_length(cusp, orientation: int, x):
    """Number of consecutive letters gamma^{orientation} in the code of x in a_gamma."""
    u = cusp.w * (cusp.p - x) if orientation > 0 else cusp.w * (x - cusp.p)
    if u <= 0:
        raise NotInPartition("point is not on the cusp side of p")
    if _exact(u):
        return max(1, math.ceil(1 / u - Fraction(1, 2)))
    t = 1.0 / u - 0.5
    return max(1, int(math.ceil(t))) if t < 9e18 else NO_LIMIT


def run_length_many(group: FuchsianGroup, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Vectorized first-block length; 1 for hyperbolic letters and gaps."""
    A = group.arrays()
    li = np.maximum(labels, 0)
    par = A["parabolic"][li] & (labels >= 0)
    u = A["w"][li] * np.abs(x - A["p"][li])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(par & (u > 0), 1.0 / np.where(u > 0, u, 1.0) - 0.5, 0.0)
    k = np.ceil(np.minimum(t, 9e18))
    return np.where(par, np.maximum(k, 1), 1).astype(np.int64)


def step(group: FuchsianGroup, x):
    """One application of T: returns (T(x), letter)."""
    g = locate(group, x)
    if g is None:
        raise NotInPartition(f"{x} lies in no interval")
    mats, _, _ = _tables(group, _exact(x))
    return apply(mats[g], x), g


@dataclass(frozen=True)
class Itinerary:
    """Run-length encoded code of a point: ``runs`` holds (letter, count) pairs."""

    runs: tuple
    start: object
    escaped_at: int | None
    parabolic: frozenset
    end: object = None  # the point reached after the recorded letters

    @classmethod
    def from_letters(cls, letters, parabolic, start=None, escaped_at=None):
        runs = []
        for c in letters:
            if runs and runs[-1][0] == c:
                runs[-1][1] += 1
            else:
                runs.append([c, 1])
        return cls(tuple((c, n) for c, n in runs), start, escaped_at, frozenset(parabolic))

    @property
    def n_letters(self) -> int:
        return sum(n for _, n in self.runs)

    @property
    def letters(self) -> tuple:
        out = []
        for c, n in self.runs:
            out.extend([c] * n)
        return tuple(out)


def itinerary(group: FuchsianGroup, x, n_letters: int, max_blocks: int | None = None) -> Itinerary:
    """The first ``n_letters`` letters of the T-orbit code of x.

    Parabolic runs are taken in one closed-form jump.  The orbit is cut when it
    lands in a gap, hits a pole, comes within 1e-13 of a cusp point (floats
    only) or, through rounding, re-enters the interval of the inverse letter.
    With ``max_blocks`` the coding stops once that many blocks are complete.
    Passing a Fraction switches to exact arithmetic.
    """
    exact = _exact(x)
    mats, _, cusps = _tables(group, exact)
    runs: list = []
    count, blocks_done, escaped = 0, 0, None
    prev = None
    cur = x
    while count < n_letters:
        g = locate(group, cur)
        if g is None or (prev is not None and g == (prev ^ 1)):
            escaped = count
            break
        try:
            if g in cusps:
                cusp, o = cusps[g]
                if not exact and abs(cur - cusp.p) < CUSP_GUARD:
                    escaped = count
                    break
                k = run_length(cusp, o, cur)
                take = min(k, n_letters - count)
                cur = parabolic_power_apply(cusp, o * take, cur)
            else:
                take = 1
                cur = apply(mats[g], cur)
        except PoleAtInput:
            escaped = count
            break
        if runs and runs[-1][0] == g:
            runs[-1][1] += take
        else:
            if runs and runs[-1][0] in cusps:
                blocks_done += 1
            runs.append([g, take])
        if g not in cusps:
            blocks_done += 1
        count += take
        prev = g
        if max_blocks is not None and blocks_done >= max_blocks + 1:
            break
    return Itinerary(tuple((c, n) for c, n in runs), x, escaped, frozenset(cusps), cur)


class BlockSequence(NamedTuple):
    blocks: tuple  # (letter, length) pairs
    pending: bool  # a trailing parabolic run was dropped

    @property
    def X(self) -> np.ndarray:
        return np.array([n for _, n in self.blocks], dtype=np.int64)


def blocks(it: Itinerary) -> BlockSequence:
    """Collapse an itinerary to blocks; a trailing parabolic run is censored."""
    out = []
    runs = list(it.runs)
    pending = bool(runs) and runs[-1][0] in it.parabolic
    if pending:
        runs = runs[:-1]
    for c, n in runs:
        if c in it.parabolic:
            out.append((c, n))
        else:
            out.extend([(c, 1)] * n)
    return BlockSequence(tuple(out), pending)


class MaximaSeries(NamedTuple):
    y: np.ndarray


def maxima(bs) -> MaximaSeries:
    X = bs.X if isinstance(bs, BlockSequence) else np.asarray(bs)
    if len(X) == 0:
        return MaximaSeries(np.zeros(0, dtype=X.dtype if hasattr(X, "dtype") else np.int64))
    return MaximaSeries(np.maximum.accumulate(X))


def in_D(group: FuchsianGroup, x) -> bool:
    """Whether the first block of x has length one (a single application test)."""
    g = locate(group, x)
    if g is None:
        raise NotInPartition(f"{x} lies in no interval")
    if g not in group.cusps:
        return True
    mats, _, _ = _tables(group, _exact(x))
    try:
        y = apply(mats[g], x)
    except PoleAtInput:
        return True
    return locate(group, y) != g


def _exits_after(group, cusp, o, g, y, j) -> bool:
    """True once gamma^{j+1}(y) has left a_g."""
    try:
        z = parabolic_power_apply(cusp, o * (j + 1), y)
    except PoleAtInput:
        return True
    return locate(group, z) != g


def induced_step(group: FuchsianGroup, x):
    """First return to D = {X_1 = 1}: returns (T^rho(x), rho).

    The return time is found by galloping on the monotone predicate
    "gamma^(j+1) has left a_gamma", evaluated with closed-form powers, so it
    does not reuse the run-length formula.
    """
    if not in_D(group, x):
        raise NotInD(f"{x} has a first block longer than one")
    mats, _, cusps = _tables(group, _exact(x))
    g0 = locate(group, x)
    try:
        y = apply(mats[g0], x)
    except PoleAtInput as exc:
        raise OrbitEscaped("orbit reached infinity") from exc
    g = locate(group, y)
    if g is None or g == (g0 ^ 1):
        raise OrbitEscaped("orbit left the partition")
    if g not in cusps or in_D(group, y):
        return y, 1
    cusp, o = cusps[g]
    if not _exact(y) and abs(y - cusp.p) < CUSP_GUARD:
        raise OrbitEscaped("orbit too close to a cusp point")
    hi = 1
    while not _exits_after(group, cusp, o, g, y, hi):
        hi *= 2
        if hi > NO_LIMIT:
            raise OrbitEscaped("parabolic run does not terminate")
    lo = hi // 2  # predicate false at lo (or lo == 0 is the untested start)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _exits_after(group, cusp, o, g, y, mid):
            hi = mid
        else:
            lo = mid
    j = hi if not _exits_after(group, cusp, o, g, y, 0) else 0
    try:
        return parabolic_power_apply(cusp, o * j, y), 1 + j
    except PoleAtInput as exc:
        raise OrbitEscaped("orbit reached infinity") from exc


class BlockReturnCheck(NamedTuple):
    mismatches: int
    compared: int
    escaped: bool


def verify_block_return_identity(group: FuchsianGroup, x, n: int) -> BlockReturnCheck:
    """Compare X_{m+1}(x) with rho(T_D^{m-1} x) for m = 1..n.

    Only the common prefix is compared when either computation escapes.
    """
    if not in_D(group, x):
        raise NotInD(f"{x} has a first block longer than one")
    X = blocks(itinerary(group, x, NO_LIMIT, max_blocks=n + 1)).X
    rhos = []
    cur = x
    escaped = False
    for _ in range(n):
        try:
            cur, rho = induced_step(group, cur)
        except OrbitEscaped:
            escaped = True
            break
        rhos.append(rho)
    m = min(len(rhos), max(len(X) - 1, 0))
    if m < n:
        escaped = True
    mism = int(np.sum(np.asarray(X[1:m + 1]) != np.asarray(rhos[:m], dtype=np.int64)))
    return BlockReturnCheck(mism, m, escaped)


def admissible_next(group: FuchsianGroup, g: int) -> list:
    """Letters that may start the block following a block of letter g."""
    bad = {g ^ 1} | ({g} if g in group.cusps else set())
    return [h for h in range(group.n_letters) if h not in bad]


def point_with_code(group: FuchsianGroup, code_blocks, tail=Fraction(1, 3)):
    """Exact point whose code begins with the given (letter, length) blocks.

    The point is g1^-n1 ... gk^-nk (x0), with x0 placed at relative position
    ``tail`` inside an interval admissible after the last block.
    """
    mats, intervals, cusps = _tables(group, True)
    last = code_blocks[-1][0]
    h = admissible_next(group, last)[0]
    lo, hi = intervals[h]
    x = lo + (hi - lo) * Fraction(tail)
    for g, n in reversed(code_blocks):
        if g in cusps:
            cusp, o = cusps[g]
            x = parabolic_power_apply(cusp, -o * n, x)
        else:
            for _ in range(n):
                x = apply(mats[g ^ 1], x)
    return x


def random_code(group: FuchsianGroup, rng: np.random.Generator, n_blocks: int,
                max_power: int = 10_000, start_in_D: bool = True) -> list:
    """Random admissible block sequence; parabolic lengths are log-uniform."""
    out = []
    prev = None
    for k in range(n_blocks):
        choices = admissible_next(group, prev) if prev is not None else list(range(group.n_letters))
        if not choices:
            raise ValueError("the group admits no infinite codes (its limit set is a single point)")
        g = int(rng.choice(choices))
        if g in group.cusps and not (start_in_D and k == 0):
            n = int(math.exp(rng.uniform(0, math.log(max_power))))
            n = max(1, min(n, max_power))
        else:
            n = 1
        out.append((g, n))
        prev = g
    return out


def block_time_increments(group: FuchsianGroup, x, n_blocks: int):
    """Block lengths X_k and the cocycle log|(T^{X_k})'| along the orbit of x.

    Returns ``(X, I)`` arrays for the complete blocks reached before escape.
    """
    mats, _, cusps = _tables(group, _exact(x))
    it = itinerary(group, x, NO_LIMIT, max_blocks=n_blocks)
    bs = blocks(it)
    X, I = [], []
    cur = x
    for g, n in bs.blocks[:n_blocks]:
        if g in cusps:
            cusp, o = cusps[g]
            den = 1 + o * n * cusp.w * (cur - cusp.p)
            I.append(-2.0 * math.log(abs(float(den))))
            cur = parabolic_power_apply(cusp, o * n, cur)
        else:
            I.append(math.log(float(derivative(mats[g], cur))))
            cur = apply(mats[g], cur)
        X.append(n)
    return np.array(X, dtype=np.int64), np.array(I)
