"""Extreme values of the block process: simulation, Frechet fits, D'(u_n), liminf and Khintchine tracks.

Every limit is reported as a final-window statistic together with its trend,
never as a single number.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import brentq
from scipy.stats import beta as beta_dist

from . import gauss
from .boundary import NO_LIMIT, blocks, itinerary
from .errors import FitDiverged, InsufficientMass, SamplerExhausted
from .group import FuchsianGroup
from .gauss import trial_rng

TABLE_VERSION = 1


class SamplerKind(enum.Enum):
    PATTERSON_ATOMIC = "PattersonAtomic"
    SYMBOLIC_MARKOV = "SymbolicMarkov"
    CF_UNIFORM = "CFUniform"


@dataclass(frozen=True)
class SamplerSpec:
    kind: SamplerKind
    seed: int
    params: object = None  # PattersonAtoms, SymbolicMarkov, or None

    @property
    def approximate(self) -> bool:
        return self.kind is SamplerKind.SYMBOLIC_MARKOV


@dataclass
class SimulationResult:
    n: int
    Y: np.ndarray  # Y_n per trial (the maximum over the blocks reached when censored)
    censored: np.ndarray  # fewer than n blocks were available
    blocks_reached: np.ndarray
    streams: np.ndarray | None = None
    label: str = ""

    @property
    def trials(self) -> int:
        return len(self.Y)

    def table(self) -> str:
        """Sample table as versioned CSV: trial_id, Y_n, censored."""
        buf = io.StringIO()
        buf.write(f"# cuspwind sample table v{TABLE_VERSION}; n={self.n}; sampler={self.label}\n")
        buf.write("trial_id,Y_n,censored\n")
        for t, (y, c) in enumerate(zip(self.Y, self.censored)):
            buf.write(f"{t},{repr(float(y))},{int(c)}\n")
        return buf.getvalue()


# ---------------------------------------------------------------- symbolic proxy


@dataclass
class SymbolicMarkov:
    """First-order chain on block letters with per-letter block-length laws.

    ``transition[g, h]`` is the probability that a block of letter g is
    followed by one of letter h.  Parabolic letters draw their length from
    ``length_cdf[g]`` up to ``n_table`` and from a discrete Pareto tail with
    survival ~ n^(1 - 2 delta) beyond it.  This is an approximation of a
    measure absolutely continuous with respect to m_delta and is labeled so.
    """

    transition: np.ndarray
    parabolic: np.ndarray
    length_cdf: np.ndarray  # (letters, n_table + 1), cdf over lengths 1..n_table, last entry < 1
    tail_mass: np.ndarray  # probability of a length beyond n_table
    n_table: int
    delta: float
    initial: np.ndarray

    @classmethod
    def from_atoms(cls, group: FuchsianGroup, atoms, phi=None, coding=None, n_table: int | None = None):
        from .patterson import PhiField, code_atoms, resolved_tail_limit

        phi = phi or PhiField(group, atoms)
        coding = coding or code_atoms(group, atoms)
        delta = atoms.delta
        nl = group.n_letters
        ok = ~coding.censored1
        val = np.zeros(len(atoms))
        val[ok] = atoms.weights[ok] * phi(atoms.points[ok], coding.label1[ok])
        T = np.zeros((nl, nl))
        np.add.at(T, (coding.label1[ok], coding.label2[ok]), val[ok])
        for g in range(nl):
            T[g, g ^ 1] = 0.0
            if g in group.cusps:
                T[g, g] = 0.0
        if np.any(T.sum(1) <= 0):
            raise InsufficientMass("some letter has no observed successor")
        T /= T.sum(1, keepdims=True)
        if n_table is None:
            n_table = max(2, resolved_tail_limit(group, atoms.depth_L, atoms.shell_width))
        par = np.array([g in group.cusps for g in range(nl)])
        cdf = np.ones((nl, n_table + 1))
        tail = np.zeros(nl)
        # lengths from complete second blocks of atoms starting in D
        D = coding.in_D & (coding.label2 >= 0) & (coding.label3 >= 0)
        for g in np.flatnonzero(par):
            sel = D & (coding.label2 == g)
            mass = np.bincount(np.minimum(coding.X2[sel], n_table + 1), val[sel], minlength=n_table + 2)
            pmf = mass[1:n_table + 1].astype(float)
            if pmf.sum() <= 0:
                raise InsufficientMass(f"no complete blocks of letter {g}")
            # extend the last resolved values by the n^(-2 delta) law
            c = np.mean(pmf[n_table // 2:] * np.arange(n_table // 2 + 1, n_table + 1) ** (2 * delta))
            tail_p = c * _hurwitz_tail(2 * delta, n_table + 1)
            total = pmf.sum() + tail_p
            cdf[g, 1:] = np.cumsum(pmf) / total
            cdf[g, 0] = 0.0
            tail[g] = tail_p / total
        pi = np.bincount(coding.label1[ok], val[ok], minlength=nl)
        return cls(T, par, cdf, tail, int(n_table), float(delta), pi / pi.sum())


def _hurwitz_tail(s: float, n0: int) -> float:
    from scipy.special import zeta

    return float(zeta(s, n0))


@numba.njit(cache=True, nogil=True)
def _markov_kernel(cumT, parab, cdf, n_table, delta, first, u, n, out_stream, keep):
    g = first
    best = 0.0
    nl = cumT.shape[0]
    for k in range(n):
        if parab[g]:
            v = u[2 * k]
            if v < cdf[g, n_table]:
                lo, hi = 1, n_table
                while lo < hi:
                    mid = (lo + hi) // 2
                    if cdf[g, mid] > v:
                        hi = mid
                    else:
                        lo = mid + 1
                x = float(lo)
            else:
                w = (v - cdf[g, n_table]) / (1.0 - cdf[g, n_table])
                w = max(w, 1e-300)
                x = math.ceil((n_table + 0.5) * (1.0 - w) ** (-1.0 / (2.0 * delta - 1.0)))
        else:
            x = 1.0
        if keep:
            out_stream[k] = x
        if x > best:
            best = x
        v = u[2 * k + 1]
        h = 0
        while h < nl - 1 and cumT[g, h] <= v:
            h += 1
        g = h
    return best


def _symbolic_trial(model: SymbolicMarkov, seed: int, t: int, n: int, keep: bool):
    rng = trial_rng(seed, t)
    first = int(np.searchsorted(np.cumsum(model.initial), rng.random(), side="right"))
    first = min(first, len(model.initial) - 1)
    u = rng.random(2 * n)
    out = np.empty(n if keep else 1)
    best = _markov_kernel(np.cumsum(model.transition, axis=1), model.parabolic, model.length_cdf,
                          model.n_table, model.delta, first, u, n, out, keep)
    return best, (out if keep else None)


def _atomic_trial(group, atoms, seed, t, n, keep):
    rng = trial_rng(seed, t)
    j = int(np.searchsorted(np.cumsum(atoms.weights), rng.random() * atoms.weights.sum(), side="right"))
    x = float(atoms.points[min(j, len(atoms) - 1)])
    X = blocks(itinerary(group, x, NO_LIMIT, max_blocks=n)).X[:n]
    best = float(X.max()) if len(X) else 0.0
    stream = None
    if keep:
        stream = np.zeros(n)
        stream[:len(X)] = X
    return best, stream, len(X)


def simulate_maxima(group: FuchsianGroup | None, sampler: SamplerSpec, n: int, trials: int,
                    workers: int = 1, keep_streams: bool = False) -> SimulationResult:
    """Y_n for ``trials`` independent start points (or symbolic streams).

    Each trial draws from its own counter-based stream keyed by (seed,
    trial_id), so the output does not depend on ``workers``.  Atomic trials
    whose code ends before n blocks are flagged as censored.
    """
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    Y = np.zeros(trials)
    reached = np.full(trials, n, dtype=np.int64)
    streams = np.zeros((trials, n)) if keep_streams else None
    kind = sampler.kind
    if kind is SamplerKind.CF_UNIFORM:
        if keep_streams:
            streams = gauss.cf_streams(sampler.seed, trials, n, workers=workers)
            Y = streams.max(axis=1)
        else:
            Y = gauss.max_digit_samples(n, trials, sampler.seed, workers=workers)
        label = "CFUniform"
    elif kind is SamplerKind.SYMBOLIC_MARKOV:
        model = sampler.params

        def run(t):
            Y[t], s = _symbolic_trial(model, sampler.seed, t, n, keep_streams)
            if keep_streams:
                streams[t] = s

        gauss._map(run, range(trials), workers)
        label = "SymbolicMarkov (approximate sampler)"
    else:
        atoms = sampler.params

        def run(t):
            Y[t], s, reached[t] = _atomic_trial(group, atoms, sampler.seed, t, n, keep_streams)
            if keep_streams:
                streams[t] = s

        gauss._map(run, range(trials), workers)
        if np.all(reached < n):
            raise SamplerExhausted(f"no atom supplied {n} blocks at depth {atoms.depth_L}")
        label = "PattersonAtomic"
    return SimulationResult(n, Y, reached < n, reached, streams, label)


# ---------------------------------------------------------------- distribution checks


@dataclass
class EmpiricalCDF:
    s: np.ndarray
    F: np.ndarray
    samples: np.ndarray | None = None  # sorted normalized samples, for exact jump checks

    def at(self, s):
        if self.samples is None:
            raise ValueError("no samples stored")
        return np.searchsorted(self.samples, s, side="right") / len(self.samples)


def normalize(Y, delta: float, n: int) -> np.ndarray:
    return np.asarray(Y, dtype=float) ** (2 * delta - 1) / n


def empirical_cdf(samples, delta: float, n: int, s_grid=None) -> EmpiricalCDF:
    """Empirical distribution of Y_n^(2 delta - 1) / n on a grid of s."""
    z = np.sort(normalize(samples, delta, n))
    if len(z) == 0:
        raise ValueError("no samples")
    s = np.geomspace(0.2, 20, 400) if s_grid is None else np.asarray(s_grid, dtype=float)
    F = np.searchsorted(z, s, side="right") / len(z)
    return EmpiricalCDF(s, F, z)


def ks_against(cdf: EmpiricalCDF, kappa: float, s_range=None) -> float:
    """Sup distance between the empirical CDF and s -> exp(-kappa/s).

    The grid is always checked; when samples are stored, both one-sided limits
    at every jump inside the grid range are checked too.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    theory = lambda s: np.exp(-kappa / np.asarray(s, dtype=float))  # noqa: E731
    d = float(np.max(np.abs(cdf.F - theory(cdf.s))))
    if cdf.samples is not None:
        lo, hi = s_range if s_range is not None else (cdf.s.min(), cdf.s.max())
        z = cdf.samples
        m = len(z)
        inside = (z >= lo) & (z <= hi)
        if inside.any():
            zi = z[inside]
            right = np.searchsorted(z, zi, side="right") / m
            left = np.searchsorted(z, zi, side="left") / m
            G = theory(zi)
            d = max(d, float(np.max(np.abs(right - G))), float(np.max(np.abs(left - G))))
    return d


@dataclass
class FrechetFit:
    alpha: float
    beta: float
    se_alpha: float
    se_beta: float
    loglik: float
    n: int


def _frechet_loglik(y, alpha, beta):
    t = (beta / y) ** alpha
    return float(np.sum(math.log(alpha) + alpha * math.log(beta) - (alpha + 1) * np.log(y) - t))


def frechet_fit(samples) -> FrechetFit:
    """Maximum-likelihood fit of exp(-(beta/y)^alpha).

    For fixed alpha the likelihood is maximized by beta^-alpha = mean(y^-alpha);
    the profile score in alpha is solved by bracketing.
    """
    y = np.asarray(samples, dtype=float)
    y = y[y > 0]
    if len(y) < 100:
        raise ValueError("at least 100 positive samples are needed")
    ly = np.log(y)
    if np.ptp(ly) <= 1e-12 * max(1.0, float(np.abs(ly).max())):
        raise FitDiverged("samples are constant")
    ly_c = ly - ly.mean()

    def score(a):
        # derivative of the profile log-likelihood, written on centered logs
        e = -a * ly_c
        e -= e.max()
        w = np.exp(e)
        return 1 / a + float(np.sum(w * ly_c) / np.sum(w))

    lo, hi = 1e-3, 1.0
    while score(hi) > 0:
        hi *= 2
        if hi > 1e6:
            raise FitDiverged("shape parameter diverges")
    while score(lo) < 0:
        lo /= 2
        if lo < 1e-12:
            raise FitDiverged("shape parameter collapses")
    alpha = brentq(score, lo, hi, xtol=1e-12, rtol=1e-12)
    m = float(np.mean(np.exp(-alpha * ly_c)))
    beta = math.exp(ly.mean()) * m ** (-1 / alpha)
    n = len(y)
    # log Y is Gumbel with location log(beta) and scale 1/alpha; invert its Fisher information
    g1 = 1 - 0.5772156649015329
    se_a = alpha * math.sqrt(6 / n) / math.pi
    se_b = beta / alpha * math.sqrt((1 + 6 * g1 * g1 / math.pi ** 2) / n)
    return FrechetFit(float(alpha), float(beta), se_a, se_b, _frechet_loglik(y, alpha, beta), n)


@dataclass
class EvtSummary:
    n: int
    trials: int
    delta_used: float
    empirical_cdf: EmpiricalCDF
    frechet: FrechetFit | None
    ks_vs_theory: float
    kappa_reference: float
    censored: int = 0
    sampler: str = ""
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        f = self.frechet
        return {
            "n": self.n,
            "trials": self.trials,
            "delta_used": self.delta_used,
            "sampler": self.sampler,
            "censored_trials": self.censored,
            "kappa_reference": self.kappa_reference,
            "ks_vs_theory": self.ks_vs_theory,
            "frechet": None if f is None else {
                "alpha": f.alpha, "beta": f.beta, "se_alpha": f.se_alpha, "se_beta": f.se_beta,
            },
            "notes": self.notes,
        }


def summarize(result: SimulationResult, delta: float, kappa: float, s_grid=None) -> EvtSummary:
    ok = ~result.censored
    cdf = empirical_cdf(result.Y[ok], delta, result.n, s_grid)
    z = normalize(result.Y[ok], delta, result.n)
    try:
        fit = frechet_fit(z)
    except (FitDiverged, ValueError):
        fit = None
    notes = []
    if "approximate" in result.label:
        notes.append("approximate sampler: absolute continuity w.r.t. m_delta is not established")
    return EvtSummary(result.n, result.trials, delta, cdf, fit, ks_against(cdf, kappa), kappa,
                      int(result.censored.sum()), result.label, notes)


# ---------------------------------------------------------------- dependence diagnostics


@dataclass
class DPrimeRow:
    n: int
    k: int
    s: float
    statistic: float


def check_D_prime(streams, delta: float, s_grid, k_grid, n: int | None = None) -> list:
    """n * sum_{j=2}^{n/k} P(X_2^(2d-1) > v_n, X_{j+1}^(2d-1) > v_n) with v_n(s) = (n+1)s.

    Probabilities are averaged over trials and over starting positions, which
    is legitimate for stationary streams.
    """
    X = np.atleast_2d(np.asarray(streams, dtype=float))
    n = X.shape[1] if n is None else n
    X = X[:, :n]
    Z = X ** (2 * delta - 1)
    rows = []
    for s in s_grid:
        v = (n + 1) * s
        pos = [np.flatnonzero(z > v) for z in Z]
        for k in k_grid:
            maxlag = n // k - 1
            total = 0.0
            if maxlag >= 1:
                pairs = np.zeros(maxlag + 1)
                for p in pos:
                    if len(p) < 2:
                        continue
                    diff = p[None, :] - p[:, None]
                    d = diff[(diff >= 1) & (diff <= maxlag)]
                    np.add.at(pairs, d, 1)
                lags = np.arange(1, maxlag + 1)
                P = pairs[1:] / (len(Z) * (n - lags))
                total = float(P.sum())
            rows.append(DPrimeRow(int(n), int(k), float(s), n * total))
    return rows


@dataclass(frozen=True)
class BlockEvent:
    """Cylinder event: X_{i+r} lies in values[r] for every r (None means any value)."""

    values: tuple

    def indicator(self, X: np.ndarray) -> np.ndarray:
        m = len(self.values)
        N = X.shape[1] - m + 1
        out = np.ones((X.shape[0], N), bool)
        for r, vals in enumerate(self.values):
            if vals is not None:
                out &= np.isin(X[:, r:r + N], list(vals))
        return out


def mixing_diagnostic(streams, events, lag_grid, min_count: int = 20) -> dict:
    """eps(lag) = max over event pairs |P(A_i and B_{i+lag}) / (P(A) P(B)) - 1|.

    events is a list of BlockEvent (or unions given as lists of BlockEvent).
    """
    X = np.atleast_2d(np.asarray(streams))
    inds = []
    for ev in events:
        evs = ev if isinstance(ev, (list, tuple)) else [ev]
        N = X.shape[1] - max(len(e.values) for e in evs) + 1
        ind = np.zeros((X.shape[0], N), bool)
        for e in evs:
            ind |= e.indicator(X)[:, :N]
        if ind.sum() < min_count:
            raise InsufficientMass("an event is too rare for the stream length")
        inds.append(ind)
    out = {}
    for lag in lag_grid:
        worst = 0.0
        for A in inds:
            for B in inds:
                N = min(A.shape[1], B.shape[1]) - lag
                if N <= 0:
                    raise InsufficientMass(f"streams too short for lag {lag}")
                a, b = A[:, :N], B[:, lag:lag + N]
                pa, pb = a.mean(), b.mean()
                if pa == 0 or pb == 0:
                    raise InsufficientMass("event has no occurrences")
                worst = max(worst, abs((a & b).mean() / (pa * pb) - 1))
        out[int(lag)] = worst
    return out


# ---------------------------------------------------------------- almost-sure laws


def log_grid(n_min: int, n_max: int, points: int = 200) -> np.ndarray:
    return np.unique(np.round(np.geomspace(n_min, n_max, points)).astype(np.int64))


@dataclass
class LiminfTrack:
    grid: np.ndarray
    statistic: np.ndarray  # Y_n^(2 delta - 1) log log n / n at the grid points
    tail_infimum: np.ndarray  # inf over grid points >= n
    window_infimum: np.ndarray  # exact inf over all m in [n/10, n]


def _liminf_stat(Y, n, delta):
    return Y ** (2 * delta - 1) * np.log(np.log(n)) / n


def liminf_track(stream, delta: float, n_grid) -> LiminfTrack:
    """Normalized running maximum along a grid, its tail infimum and exact window infima.

    Between two jumps of Y the statistic decreases in n (for n >= 16), so the
    infimum over any window is attained at the ends of the plateaus of Y; the
    window infimum scans those ends exactly.
    """
    grid = np.asarray(n_grid, dtype=np.int64)
    if grid.min() < 16 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and start at n >= 16")
    X = np.asarray(stream, dtype=float)
    Y = np.maximum.accumulate(X[:grid.max()])
    stat = _liminf_stat(Y[grid - 1], grid.astype(float), delta)
    tail = np.minimum.accumulate(stat[::-1])[::-1]
    # plateau ends: positions m (1-based) where Y_{m+1} > Y_m, plus the end of the stream
    jumps = np.flatnonzero(np.diff(Y) > 0) + 1
    ends = np.unique(np.concatenate([jumps, [len(Y)]]))
    ends = ends[ends >= 16]
    end_stat = _liminf_stat(Y[ends - 1], ends.astype(float), delta)
    win = np.empty(len(grid))
    for i, n in enumerate(grid):
        lo = max(16, int(math.ceil(n / 10)))
        cand = [_liminf_stat(Y[n - 1], float(n), delta)]
        a, b = np.searchsorted(ends, lo), np.searchsorted(ends, n, side="right")
        if b > a:
            cand.append(end_stat[a:b].min())
        win[i] = min(cand)
    return LiminfTrack(grid, stat, tail, win)


def trend_slope(grid, values, decades: float = 1.0) -> float:
    """Least-squares slope of values against log10 n over the last ``decades``."""
    grid = np.asarray(grid, dtype=float)
    sel = grid >= grid.max() / 10 ** decades
    if sel.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log10(grid[sel]), np.asarray(values)[sel], 1)[0])


@dataclass
class LiminfBand:
    grid: np.ndarray
    median_track: np.ndarray  # median over streams of the window infimum
    final: float
    slope: float  # per decade, over the last decade
    slope_se: float  # bootstrap over streams
    in_band: bool
    flat_or_decreasing: bool


def liminf_band(streams, delta: float, n_grid, band, n_boot: int = 200, seed: int = 0) -> LiminfBand:
    """Band and trend test for the liminf law on a set of independent streams.

    The trend passes when the last-decade slope of the median track is not
    significantly positive (slope <= 2 bootstrap standard errors).
    """
    grid = np.asarray(n_grid, dtype=np.int64)
    W = np.array([liminf_track(s, delta, grid).window_infimum for s in streams])
    med = np.median(W, axis=0)
    slope = trend_slope(grid, med)
    rng = np.random.default_rng(seed)
    boots = [trend_slope(grid, np.median(W[rng.integers(0, len(W), len(W))], axis=0)) for _ in range(n_boot)]
    se = float(np.std(boots, ddof=1))
    final = float(med[-1])
    return LiminfBand(grid, med, final, slope, se, bool(band[0] <= final <= band[1]), bool(slope <= 2 * se))


@dataclass
class RatioTrack:
    grid: np.ndarray
    ratio: np.ndarray
    final_window_mean: float
    final_window_spread: float
    slope: float


def khintchine_track(stream, delta: float, n_grid, window: float = 10.0) -> RatioTrack:
    """log Y_n / log n along the grid; the limit is 1/(2 delta - 1).

    The final window covers n in [n_max/window, n_max] and its mean is taken
    over every n there, not just grid points.
    """
    grid = np.asarray(n_grid, dtype=np.int64)
    if grid.min() < 2:
        raise ValueError("n must be at least 2")
    X = np.asarray(stream, dtype=float)
    N = int(grid.max())
    Y = np.maximum.accumulate(X[:N])
    ratio = np.log(Y[grid - 1]) / np.log(grid)
    lo = max(2, int(N / window))
    ns = np.arange(lo, N + 1)
    full = np.log(Y[lo - 1:N]) / np.log(ns)
    return RatioTrack(grid, ratio, float(full.mean()), float(full.std()), trend_slope(grid, ratio))


def excursion_track(X, I, T_grid) -> RatioTrack:
    """max depth up to time T over log T, with depth log X_k and time t_n = sum of I_k.

    X are block lengths and I the matching increments log|(T^{X_k})'|; the
    depth carries an unknown bounded offset, so only the limit up to a band is
    meaningful.
    """
    X = np.asarray(X, dtype=float)
    t = np.cumsum(np.asarray(I, dtype=float))
    depth = np.maximum.accumulate(np.log(X))
    T = np.asarray(T_grid, dtype=float)
    k = np.searchsorted(t, T, side="right") - 1
    if np.any(k < 0):
        raise ValueError("time grid starts before the first block ends")
    if T.max() > t[-1]:
        raise ValueError("time grid extends beyond the available blocks")
    ratio = depth[k] / np.log(T)
    w = T >= T.max() / 10
    return RatioTrack(np.asarray(T_grid), ratio, float(ratio[w].mean()), float(ratio[w].std()),
                      trend_slope(T, ratio))


def running_time_mean(I) -> np.ndarray:
    I = np.asarray(I, dtype=float)
    return np.cumsum(I) / np.arange(1, len(I) + 1)


class Verdict(enum.Enum):
    EVIDENCE_ZERO = "EvidenceZero"
    EVIDENCE_INFINITY = "EvidenceInfinity"
    INCONCLUSIVE = "Inconclusive"


def clopper_pearson(k: int, n: int, level: float = 0.95):
    a = 1 - level
    lo = 0.0 if k == 0 else float(beta_dist.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass
class DichotomyResult:
    verdict: Verdict
    early: tuple  # (count, trials, lo, hi)
    late: tuple
    window_early: tuple
    window_late: tuple


def dichotomy_experiment(streams, delta: float, ell, min_length: int = 1024, min_trials: int = 20,
                         floor: float = 0.1) -> DichotomyResult:
    """Decide between limsup Y_n/ell_n = 0 and = infinity from exceedance counts.

    A trial exceeds in a window when X_n^(2 delta - 1) >= ell_n for some n in
    it.  With N the stream length the windows are [N/8, N/4) and [N/2, N].
    EvidenceZero: the 95% Clopper-Pearson upper bound of the late proportion is
    below ``floor`` (exceedances have stopped).  EvidenceInfinity: the late
    lower bound exceeds ``floor`` and at least half the early upper bound
    (exceedances keep occurring at a comparable rate in a window four times
    longer).  Otherwise, or for short or few streams, Inconclusive.
    """
    X = np.atleast_2d(np.asarray(streams, dtype=float))
    trials, N = X.shape
    ns = np.arange(1, N + 1, dtype=float)
    ell_v = np.asarray(ell(ns) if callable(ell) else ell, dtype=float)[:N]
    if np.any(ell_v <= 0):
        raise ValueError("ell must be positive")
    exceed = X ** (2 * delta - 1) >= ell_v[None, :]
    we, wl = (N // 8, N // 4), (N // 2, N)
    ce = int(exceed[:, we[0]:we[1]].any(axis=1).sum())
    cl = int(exceed[:, wl[0]:wl[1]].any(axis=1).sum())
    lo_e, hi_e = clopper_pearson(ce, trials)
    lo_l, hi_l = clopper_pearson(cl, trials)
    if N < min_length or trials < min_trials:
        v = Verdict.INCONCLUSIVE
    elif hi_l < floor:
        v = Verdict.EVIDENCE_ZERO
    elif lo_l > floor and lo_l >= hi_e / 2:
        v = Verdict.EVIDENCE_INFINITY
    else:
        v = Verdict.INCONCLUSIVE
    return DichotomyResult(v, (ce, trials, lo_e, hi_e), (cl, trials, lo_l, hi_l), we, wl)


@dataclass
class LimsupMaxResult:
    direct: float  # tail estimate of limsup p_n / q_n
    via_maxima: float  # tail estimate of limsup max_{k<=n} p_k / q_n
    inequality_holds: bool
    agree: bool


def limsup_max_check(p, q, tail: float = 0.5, tol: float = 1e-3) -> LimsupMaxResult:
    """Compare the two sides of the limsup-max principle on finite prefixes.

    limsups are estimated by the supremum over the last ``tail`` fraction of
    the prefix.  Also checks max_{k<=n} p_k / q_n <= max_{k<=n} p_k / q_k for
    every n, which holds for nondecreasing q.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(np.diff(q) < 0) or np.any(q <= 0):
        raise ValueError("q must be positive and nondecreasing")
    Y = np.maximum.accumulate(p)
    ratio_max = np.maximum.accumulate(p / q)
    ineq = bool(np.all(Y / q <= ratio_max * (1 + 1e-12) + 1e-300))
    start = int(len(p) * (1 - tail))
    a = float(np.max(p[start:] / q[start:]))
    b = float(np.max(Y[start:] / q[start:]))
    return LimsupMaxResult(a, b, ineq, abs(a - b) <= tol * max(1.0, abs(a), abs(b)))
