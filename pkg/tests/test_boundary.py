import math
from fractions import Fraction

import numpy as np
import pytest

from cuspwind.boundary import (
    NO_LIMIT, BlockSequence, Itinerary, blocks, block_time_increments, in_D, induced_step, itinerary,
    locate, locate_many, maxima, point_with_code, random_code, run_length, step,
    verify_block_return_identity,
)
from cuspwind.errors import NotInD, NotInPartition, PoleAtInput
from cuspwind.gauss import cf_digits, single_cusp_point, trial_rng
from cuspwind.hyperbolic import ParabolicCusp, apply, derivative


def naive_letters(group, x, n):
    """Step-by-step T orbit code, stopping at gaps and poles."""
    out = []
    for _ in range(n):
        g = locate(group, x)
        if g is None or (out and g == (out[-1] ^ 1)):
            break
        out.append(g)
        try:
            x = step(group, x)[0]
        except PoleAtInput:
            break
    return out


def random_rationals(rng, lo, hi, k):
    return [Fraction(lo) + (Fraction(hi) - Fraction(lo)) * Fraction(int(rng.integers(1, 10**9)), 10**9)
            for _ in range(k)]


def test_locate_examples(single_cusp):
    assert locate(single_cusp, -1) == 0
    assert locate(single_cusp, 3) is None
    assert locate(single_cusp, 0) is None
    assert list(locate_many(single_cusp, np.array([-1.0, 3.0, 0.0, 1.0]))) == [0, -1, -1, 1]


def test_step_examples(single_cusp):
    assert step(single_cusp, -0.5) == (-1, 0)
    with pytest.raises(PoleAtInput):
        step(single_cusp, Fraction(-1))
    with pytest.raises(NotInPartition):
        step(single_cusp, 3)


@pytest.mark.parametrize("name", ["two_cusp", "cusp_hyp"])
def test_step_never_lands_in_inverse_interval(name, request):
    g = request.getfixturevalue(name)
    rng = np.random.default_rng(1)
    for iv_code, iv in enumerate(g.intervals):
        for x in rng.uniform(iv.lo, iv.hi, 200):
            try:
                y, lab = step(g, x)
            except PoleAtInput:
                continue
            assert lab == iv_code
            assert locate(g, y) != (lab ^ 1)


@pytest.mark.parametrize("name", ["two_cusp", "cusp_hyp", "single_cusp"])
def test_accelerated_itinerary_matches_naive(name, request):
    g = request.getfixturevalue(name)
    rng = np.random.default_rng(2)
    lo = min(iv.lo for iv in g.intervals) - 0.5
    hi = max(iv.hi for iv in g.intervals) + 0.5
    points = random_rationals(rng, lo, hi, 500)
    if name != "single_cusp":
        points += [point_with_code(g, random_code(g, rng, 6, max_power=30), tail=Fraction(1, 7))
                   for _ in range(500)]
    for x in points:
        assert list(itinerary(g, x, 100).letters) == naive_letters(g, x, 100)


def test_cusp_point_escapes_at_once(two_cusp):
    it = itinerary(two_cusp, -2.0, 10)
    assert it.n_letters == 0 and it.escaped_at == 0


def test_first_block_brute_force(single_cusp):
    c = ParabolicCusp(0, 1)
    rng = np.random.default_rng(3)
    for x in random_rationals(rng, -2, 0, 1000):
        k = 0
        y = x
        while -2 < y < 0:
            k += 1
            y = y / (1 + y) if y != -1 else None
            if y is None:
                break
        assert run_length(c, 1, x) == k
        assert blocks(itinerary(single_cusp, x, 10**6)).pending  # the only run is censored
        assert itinerary(single_cusp, x, 10**6).runs[0] == (0, k)


def test_blocks_examples():
    P = {0, 1}
    it = Itinerary.from_letters([0, 0, 0, 4, 1, 1, 6], P)
    assert list(blocks(it).X) == [3, 1, 2, 1]
    assert list(blocks(Itinerary.from_letters([4, 6, 4], P)).X) == [1, 1, 1]
    bs = blocks(Itinerary.from_letters([0, 0], P))
    assert len(bs.X) == 0 and bs.pending


def test_maxima_examples():
    assert list(maxima(np.array([3, 1, 2])).y) == [3, 3, 3]
    assert list(maxima(BlockSequence(((0, 1), (2, 4), (0, 2), (2, 9)), False)).y) == [1, 4, 4, 9]


def test_maxima_limsup_cross_check():
    rng = np.random.default_rng(4)
    X = rng.pareto(1.0, 5000) + 1
    q = np.sqrt(np.arange(1, 5001))
    Y = maxima(X).y
    direct = np.array([X[:n].max() for n in range(1, 5001)])
    assert np.array_equal(Y, direct)
    assert np.all(Y / q <= np.maximum.accumulate(X / q) + 1e-12)


def test_induced_step_hyperbolic_code(cusp_hyp):
    x = point_with_code(cusp_hyp, [(0, 1), (0, 1), (2, 3), (1, 1)])
    y, rho = induced_step(cusp_hyp, x)
    assert rho == 1 and y == apply(cusp_hyp.exact[0], x)


@pytest.mark.parametrize("k", [1, 2, 7, 40, 1000])
def test_induced_step_parabolic_run(two_cusp, k):
    x = point_with_code(two_cusp, [(0, 1), (2, k), (1, 1)])
    y, rho = induced_step(two_cusp, x)
    assert rho == k
    z = x
    for _ in range(k):
        z = step(two_cusp, z)[0]
    assert y == z


def test_induced_step_requires_D(two_cusp):
    x = point_with_code(two_cusp, [(0, 3), (2, 1)])
    assert not in_D(two_cusp, x)
    with pytest.raises(NotInD):
        induced_step(two_cusp, x)


@pytest.mark.parametrize("name", ["two_cusp", "cusp_hyp"])
def test_two_induced_steps_compose(name, request):
    g = request.getfixturevalue(name)
    for t in range(30):
        code = random_code(g, trial_rng(5, t), 6, max_power=50)
        x = point_with_code(g, code)
        y1, r1 = induced_step(g, x)
        y2, r2 = induced_step(g, y1)
        z = x
        for _ in range(r1 + r2):
            z = step(g, z)[0]
        assert y2 == z


@pytest.mark.parametrize("name", ["two_cusp", "cusp_hyp"])
def test_block_return_identity_exact(name, request):
    g = request.getfixturevalue(name)
    for t in range(50):
        code = random_code(g, trial_rng(6, t), 22, max_power=10**4)
        x = point_with_code(g, code)
        r = verify_block_return_identity(g, x, 20)
        assert r.mismatches == 0 and r.compared == 20
        assert list(blocks(itinerary(g, x, NO_LIMIT, max_blocks=21)).X[:21]) == [n for _, n in code[:21]]


def test_block_return_identity_n1(two_cusp, cusp_hyp):
    x = point_with_code(cusp_hyp, [(0, 1), (1 ^ 1, 1), (2, 1)])
    assert verify_block_return_identity(cusp_hyp, x, 1).mismatches == 0
    x = point_with_code(two_cusp, [(0, 1), (2, 5), (0, 1)])
    r = verify_block_return_identity(two_cusp, x, 1)
    assert r.mismatches == 0 and r.compared == 1


def test_block_return_identity_escaped_prefix(two_cusp):
    r = verify_block_return_identity(two_cusp, 3.2, 50)
    assert r.escaped and r.mismatches == 0 and r.compared < 50


@pytest.mark.parametrize("name", ["two_cusp", "cusp_hyp"])
def test_blocks_shift_compatible(name, request):
    g = request.getfixturevalue(name)
    for t in range(30):
        code = random_code(g, trial_rng(7, t), 8, max_power=200)
        x = point_with_code(g, code)
        X = blocks(itinerary(g, x, NO_LIMIT, max_blocks=8)).X
        y = x
        for _ in range(X[0]):
            y = step(g, y)[0]
        assert list(blocks(itinerary(g, y, NO_LIMIT, max_blocks=7)).X[:7]) == list(X[1:8])


def test_random_code_needs_infinite_codes(single_cusp):
    with pytest.raises(ValueError):
        random_code(single_cusp, np.random.default_rng(0), 3)


def test_gauss_digit_matches_single_cusp_block(single_cusp):
    rng = np.random.default_rng(8)
    for y in rng.uniform(1e-6, 1, 1000):
        x = single_cusp_point(y)
        assert itinerary(single_cusp, x, 10**9).runs[0] == (0, cf_digits(y, 1)[0])


def test_block_time_increments(two_cusp):
    code = [(0, 1), (2, 12), (1, 1), (3, 4), (0, 1), (2, 2), (0, 1)]
    x = point_with_code(two_cusp, code)
    X, I = block_time_increments(two_cusp, x, 6)
    assert list(X) == [n for _, n in code[:6]]
    # the increments add up to log |(T^6 blocks)'(x)| computed letter by letter
    total, z = 0.0, x
    for _ in range(int(X.sum())):
        g = locate(two_cusp, z)
        total += math.log(float(derivative(two_cusp.exact[g], z)))
        z = step(two_cusp, z)[0]
    assert I.sum() == pytest.approx(total, rel=1e-10)
