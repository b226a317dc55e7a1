"""Continued fractions: the Gauss map, digit streams, and the Galambos and Philipp constants.

Digit streams are produced in double precision.  After ``RENEWAL`` digits the
state no longer carries information, so it is replaced by a fresh draw from
the Gauss measure, x = 2^U - 1; the digit process is stationary under that
measure and mixing, so the laws tested here are unaffected.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numba
import numpy as np

from .errors import Terminated

LOG2 = math.log(2.0)
RENEWAL = 40


def trial_rng(seed: int, trial_id: int) -> np.random.Generator:
    """Counter-based stream for one trial; independent of how trials are scheduled."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 0x5EED_C0DE], dtype=np.uint64)
    counter = np.array([0, 0, 0, trial_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def gauss_map(x):
    """x -> 1/x mod 1 on (0, 1)."""
    y = 1 / x
    return y - math.floor(y)


def cf_digits(x, n: int) -> tuple:
    """First n continued-fraction digits of x in (0, 1).

    Fractions are expanded exactly and raise Terminated, carrying the digits
    found, once they run out.  Floats are expanded in double precision.
    """
    if not 0 < x < 1:
        raise ValueError(f"x = {x} must lie in (0, 1)")
    exact = isinstance(x, (int, Fraction))
    out = []
    for _ in range(n):
        if x == 0:
            raise Terminated(out)
        y = 1 / x
        a = math.floor(y)
        out.append(int(a))
        x = y - a
        if not exact and x == 0.0 and len(out) < n:
            raise Terminated(out)
    return tuple(out)


def convergents(digits) -> list:
    """Pairs (p_k, q_k) of [0; a_1, ..., a_k] for k = 1..len(digits)."""
    p0, q0, p1, q1 = 1, 0, 0, 1
    out = []
    for a in digits:
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        out.append((p1, q1))
    return out


def reconstruction_bound(digits) -> float:
    """Bound 1/(q_n q_{n+1}) on |x - p_n/q_n|, with q_{n+1} >= q_n + q_{n-1}."""
    cv = convergents(digits)
    qn = cv[-1][1]
    qm = cv[-2][1] if len(cv) > 1 else 1
    return 1.0 / (qn * (qn + qm))


def galambos_cdf(s):
    """Limit law exp(-1/(s log 2)) of max_{k<=n} a_k / n."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.exp(-1.0 / (s * LOG2))
    return out if out.ndim else float(out)


def philipp_constant() -> float:
    return 1.0 / LOG2


def digit_pmf(m) -> float:
    """Gauss-measure probability that the first digit equals m."""
    return math.log2(1 + 1 / (m * (m + 2)))


def digit_pmf_lebesgue(m) -> float:
    """Lebesgue probability that the first digit of a uniform point equals m."""
    return 1 / m - 1 / (m + 1)


@numba.njit(cache=True, nogil=True)
def _digits_kernel(x0, renew_u, n, renewal, out):
    x = x0
    r = 0
    used = 0
    k = 0
    while k < n:
        if used == renewal or x <= 0.0:
            x = 2.0 ** renew_u[r] - 1.0
            r += 1
            used = 0
            if x <= 0.0:
                continue
        y = 1.0 / x
        a = math.floor(y)
        out[k] = a
        x = y - a
        used += 1
        k += 1
    return r


@numba.njit(cache=True, nogil=True)
def _max_kernel(x0, renew_u, n, renewal):
    x = x0
    r = 0
    used = 0
    k = 0
    best = 0.0
    while k < n:
        if used == renewal or x <= 0.0:
            x = 2.0 ** renew_u[r] - 1.0
            r += 1
            used = 0
            if x <= 0.0:
                continue
        y = 1.0 / x
        a = math.floor(y)
        if a > best:
            best = a
        x = y - a
        used += 1
        k += 1
    return best


def _draws(seed: int, trial_id: int, n: int, renewal: int):
    rng = trial_rng(seed, trial_id)
    x0 = rng.random()
    while x0 == 0.0:
        x0 = rng.random()
    # a zero state forces an early renewal; the margin covers those draws
    u = rng.random(n // renewal + 16)
    return x0, u


@dataclass
class CFStream:
    x0: float
    digits: np.ndarray  # float64, digits can exceed the int64 range
    renewed: bool


def cf_stream(seed: int, trial_id: int, n: int, renewal: int = RENEWAL) -> CFStream:
    x0, u = _draws(seed, trial_id, n, renewal)
    out = np.empty(n)
    _digits_kernel(x0, u, n, renewal, out)
    return CFStream(x0, out, n > renewal)


def cf_streams(seed: int, trials: int, n: int, renewal: int = RENEWAL, workers: int = 1,
               first_trial: int = 0) -> np.ndarray:
    """Digit streams of shape (trials, n); row t uses trial id first_trial + t."""
    out = np.empty((trials, n))

    def run(t):
        x0, u = _draws(seed, first_trial + t, n, renewal)
        _digits_kernel(x0, u, n, renewal, out[t])

    _map(run, range(trials), workers)
    return out


def max_digit_samples(n: int, trials: int, seed: int, workers: int = 1, renewal: int = RENEWAL) -> np.ndarray:
    """max_{k<=n} a_k for a uniform start point, one sample per trial."""
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    out = np.empty(trials)

    def run(t):
        x0, u = _draws(seed, t, n, renewal)
        out[t] = _max_kernel(x0, u, n, renewal)

    _map(run, range(trials), workers)
    return out


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1:
        for i in items:
            fn(i)
        return
    chunks = [items[i::workers] for i in range(workers)]
    with ThreadPoolExecutor(workers) as ex:
        list(ex.map(lambda c: [fn(i) for i in c], chunks))


def single_cusp_point(y: float) -> float:
    """Point of a_gamma = (-2, 0) in the cusp group (p=0, w=1) whose first block is a_1(y).

    With u = -x the block length is ceil(1/u - 1/2); taking y = 2u/(2 + u)
    turns that into floor(1/y) away from the countably many ties.
    """
    return -2 * y / (2 - y)
