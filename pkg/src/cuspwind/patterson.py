"""Exponent of convergence, atomic Patterson measure, the density Phi and kappa(G).

Depth is measured as a hyperbolic radius R: the orbit points g(i) with
d(i, g(i)) <= R.  Atoms sit at the boundary projections of the orbit points in
the outer annulus R - W < d <= R, weighted by e^{-s d} (1 + xi^2)^delta.  The
last factor moves the conformal density seen from i onto the real line, where
derivatives are Euclidean.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .boundary import locate_many, run_length_many
from .errors import (
    DeltaOutOfRange,
    ExclusionUndefined,
    InsufficientTailMass,
    NonConvergentFit,
)
from .group import (
    DEFAULT_WORD_BUDGET,
    FuchsianGroup,
    OrbitBall,
    _dist_from_mats,
    orbit_ball,
    save_orbit_ball,
    load_orbit_ball,
    word_shells,
)
from .hyperbolic import apply, derivative

L_MIN = 8
S_MARGIN = 0.02
SHELL_WIDTH = 3.0
SELF_CUTOFF = 1e-8
N_MIN_TAIL = 4
TAIL_BUFFER = 0.0
DELTA_TOL = 0.02


def project(mats: np.ndarray) -> np.ndarray:
    """Endpoint of the geodesic ray from i through g(i), for a stack of matrices."""
    a, b, c, d = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]
    z = (a * 1j + b) / (c * 1j + d)
    zeta = (z - 1j) / (z + 1j)
    u = zeta / np.abs(zeta)
    return (1j * (1 + u) / (1 - u)).real


def orbit_points(mats: np.ndarray) -> np.ndarray:
    a, b, c, d = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]
    return (a * 1j + b) / (c * 1j + d)


def poincare_partial(group: FuchsianGroup, s: float, L: int, budget: int = DEFAULT_WORD_BUDGET) -> float:
    """Sum of exp(-s d(i, g(i))) over reduced words of length <= L, identity included."""
    total = 1.0
    for _, _, dist in word_shells(group, L, budget):
        total += float(np.exp(-s * dist).sum())
    return total


# ---------------------------------------------------------------- delta


@dataclass
class DeltaEstimate:
    delta: float
    uncertainty: float
    depth: float
    fit_se: float
    annulus_counts: np.ndarray
    residuals: np.ndarray
    fit_range: tuple
    previous: float | None = None
    warning: str | None = None

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "uncertainty": self.uncertainty,
            "depth": self.depth,
            "fit_se": self.fit_se,
            "delta_at_depth_minus_2": self.previous,
            "fit_range": list(self.fit_range),
            "annulus_counts": [int(v) for v in self.annulus_counts],
            "max_abs_residual": float(np.max(np.abs(self.residuals))) if len(self.residuals) else 0.0,
            "warning": self.warning,
        }


def _annulus_fit(dist: np.ndarray, R: float):
    """Root in s of the slope of log(sum over unit annulus of e^{-s d}) against the annulus index."""
    R_int = int(math.floor(R))
    j = np.ceil(dist).astype(np.int64)
    j = np.clip(j, 1, R_int)
    lo = max(2, R_int // 2)
    idx = np.arange(lo, R_int + 1)
    counts = np.bincount(j, minlength=R_int + 1)
    if len(idx) < 3 or np.any(counts[idx] == 0):
        raise NonConvergentFit(f"too few populated annuli at radius {R}")
    sel = j >= lo
    dj, jj = dist[sel], j[sel]

    def fit(s):
        S = np.bincount(jj, weights=np.exp(-s * (dj - jj)), minlength=R_int + 1)[idx]
        y = np.log(S) - s * idx
        A = np.vstack([idx, np.ones_like(idx)]).T.astype(float)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return coef, y - A @ coef

    def slope(s):
        return fit(s)[0][0]

    try:
        s0 = brentq(slope, 0.0, 2.5, xtol=1e-10)
    except ValueError as exc:
        raise NonConvergentFit("annulus growth never crosses zero on s in [0, 2.5]") from exc
    coef, res = fit(s0)
    n = len(idx)
    se = math.sqrt(float(res @ res) / max(n - 2, 1) / float(((idx - idx.mean()) ** 2).sum()))
    return s0, se, counts[1:], res, (int(lo), R_int)


def estimate_delta(group: FuchsianGroup, L: float, L_min: float = L_MIN, ball: OrbitBall | None = None,
                   budget: int = DEFAULT_WORD_BUDGET) -> DeltaEstimate:
    """Exponent of convergence from the growth of orbit-point annuli up to radius L.

    For each s, log sum_{j-1 < d <= j} e^{-s d} is fitted linearly in j over
    j in [L/2, L]; its slope is about delta - s, and the root in s is the
    estimate.  The uncertainty is the larger of half the change from radius
    L - 2 and twice the standard error of the fitted slope.
    """
    if L < L_min:
        raise ValueError(f"depth {L} is below the minimum {L_min}")
    if ball is None or ball.radius < L:
        ball = orbit_ball(group, L, budget=budget)
    dist = ball.dist[ball.dist <= L]
    d1, se, counts, res, rng = _annulus_fit(dist, L)
    d0 = None
    if L - 2 >= max(L_min - 2, 6):
        d0 = _annulus_fit(dist[dist <= L - 2], L - 2)[0]
    unc = max(abs(d1 - d0) / 2 if d0 is not None else 0.0, 2 * se)
    warning = None
    if d1 <= 0.5 + DELTA_TOL:
        warning = (f"estimated delta {d1:.4f} is not above 1/2; kappa and the Frechet law "
                   "need delta > 1/2")
    return DeltaEstimate(float(d1), float(unc), float(L), float(se), counts, res, rng, d0, warning)


# ---------------------------------------------------------------- atoms


@dataclass
class PattersonAtoms:
    """Weighted boundary points approximating m_delta."""

    points: np.ndarray
    weights: np.ndarray
    dist: np.ndarray
    exponent_s: float
    depth_L: float
    delta: float
    shell_width: float = SHELL_WIDTH
    normalized: bool = True
    digest: str = ""
    mats: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.points)

    def labels(self, group: FuchsianGroup) -> np.ndarray:
        return locate_many(group, self.points)


def patterson_atoms(group: FuchsianGroup, L: float, delta: float | None = None, s: float | None = None,
                    s_margin: float = S_MARGIN, shell_width: float = SHELL_WIDTH,
                    ball: OrbitBall | None = None, budget: int = DEFAULT_WORD_BUDGET) -> PattersonAtoms:
    """Atoms at projections of orbit points with L - shell_width < d <= L.

    delta defaults to the group's stored value; s defaults to delta + s_margin
    and must exceed delta.  The identity is never an atom, so L must be
    positive.
    """
    if L <= 0:
        raise ValueError("depth 0 leaves only the basepoint, whose projection is undefined")
    if delta is None:
        delta = group.delta
    if delta is None:
        raise ValueError("delta is required (set it on the group or pass it)")
    s = delta + s_margin if s is None else s
    if not s > delta:
        raise ValueError(f"exponent s = {s} must exceed delta = {delta}")
    if ball is None or ball.radius < L:
        ball = orbit_ball(group, L, budget=budget)
    keep = (ball.dist <= L) & (ball.dist > L - shell_width)
    mats = ball.mats[keep]
    d = ball.dist[keep]
    pts = project(mats)
    logw = -s * d + delta * np.log1p(pts * pts)
    w = np.exp(logw - logw.max())
    w /= math.fsum(w)
    return PattersonAtoms(pts, w, d, float(s), float(L), float(delta), float(shell_width), True,
                          group.digest, mats)


def save_atoms(path, atoms: PattersonAtoms):
    """Persist atoms in the orbit-cache format with projection and weight columns."""
    n = len(atoms)
    mats = atoms.mats if atoms.mats is not None else np.zeros((n, 2, 2))
    ball = OrbitBall(atoms.depth_L, 0.0, mats, atoms.dist, np.zeros(n, np.int64), np.zeros(n, np.int64),
                     np.full(n, -2), atoms.digest)
    save_orbit_ball(path, ball, extra=dict(
        projection=atoms.points, weight=atoms.weights,
        meta=np.array([atoms.exponent_s, atoms.delta, atoms.shell_width]),
    ))


def load_atoms(path, digest: str | None = None) -> PattersonAtoms | None:
    hit = load_orbit_ball(path, digest)
    if hit is None:
        return None
    ball, extra = hit
    s, delta, width = (float(v) for v in extra["meta"])
    return PattersonAtoms(extra["projection"], extra["weight"], ball.dist, s, ball.radius, delta, width,
                          True, ball.digest, ball.mats)


# ---------------------------------------------------------------- Phi


def _exclusion(group: FuchsianGroup, xi: float) -> tuple:
    g = locate_many(group, np.array([xi]))[0]
    if g >= 0:
        return (int(g),)
    for code, (cusp, _) in group.cusps.items():
        if abs(xi - float(cusp.p)) <= 1e-12 * max(1.0, abs(xi)):
            return (code, code ^ 1)
    raise ExclusionUndefined(f"{xi} is in a gap and is not a parabolic fixed point")


def phi_detail(group: FuchsianGroup, atoms: PattersonAtoms, xi: float, delta: float | None = None):
    """(Phi(xi), discarded mass) by direct summation over the atoms."""
    delta = atoms.delta if delta is None else delta
    excl = _exclusion(group, float(xi))
    lab = atoms.labels(group)
    keep = ~np.isin(lab, excl)
    r = np.abs(atoms.points[keep] - xi)
    near = r < SELF_CUTOFF
    w = atoms.weights[keep]
    val = float(np.sum(w[~near] * r[~near] ** (-2 * delta)))
    return val, float(w[near].sum())


def phi_at(group: FuchsianGroup, atoms: PattersonAtoms, xi: float, delta: float | None = None) -> float:
    """Phi(xi): weighted sum of |xi - eta|^{-2 delta} over atoms outside the exclusion region.

    The region is a_g for xi in a_g and a_gamma with a_gamma^-1 for xi = p_gamma.
    """
    return phi_detail(group, atoms, xi, delta)[0]


class PhiField:
    """Phi on every interval, tabulated once and interpolated.

    Sources are binned per interval label so no bin straddles two labels; the
    table on a_g is built from the bins outside a_g.  Parabolic intervals get
    extra geometric nodes toward the cusp point, where Phi grows.
    """

    def __init__(self, group: FuchsianGroup, atoms: PattersonAtoms, delta: float | None = None,
                 nodes: int = 2048, bins: int = 4096):
        self.group = group
        self.delta = atoms.delta if delta is None else delta
        lab = atoms.labels(group)
        self.gap_mass = float(atoms.weights[lab < 0].sum())
        src_x, src_m, src_l = [], [], []
        for g in range(group.n_letters):
            sel = lab == g
            if not sel.any():
                continue
            x, w = atoms.points[sel], atoms.weights[sel]
            edges = np.linspace(x.min(), x.max() + 1e-300, bins + 1)
            b = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
            m = np.bincount(b, w, bins)
            mx = np.bincount(b, w * x, bins)
            ok = m > 0
            src_x.append(mx[ok] / m[ok])
            src_m.append(m[ok])
            src_l.append(np.full(ok.sum(), g))
        gap = lab < 0
        src_x.append(atoms.points[gap])
        src_m.append(atoms.weights[gap])
        src_l.append(np.full(gap.sum(), -1))
        self.src_x = np.concatenate(src_x)
        self.src_m = np.concatenate(src_m)
        self.src_l = np.concatenate(src_l)
        self.grid, self.table = {}, {}
        for g, iv in enumerate(group.intervals):
            x = np.linspace(iv.lo, iv.hi, nodes)[1:-1]
            if g in group.cusps:
                cusp, o = group.cusps[g]
                p = float(cusp.p)
                geo = np.geomspace(1e-7, 1e-3 * (iv.hi - iv.lo), 64)
                x = np.union1d(x, p - geo if o > 0 else p + geo)
            self.grid[g] = x
            self.table[g] = self._direct(x, g)

    def _direct(self, x: np.ndarray, g: int) -> np.ndarray:
        keep = self.src_l != g
        sx, sm = self.src_x[keep], self.src_m[keep]
        out = np.empty(len(x))
        for i in range(0, len(x), 512):
            r = np.abs(x[i:i + 512, None] - sx[None, :])
            with np.errstate(divide="ignore"):
                K = np.where(r >= SELF_CUTOFF, r ** (-2 * self.delta), 0.0)
            out[i:i + 512] = K @ sm
        return out

    def __call__(self, x: np.ndarray, labels: np.ndarray | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if labels is None:
            labels = locate_many(self.group, x)
        if np.any(labels < 0):
            raise ExclusionUndefined("Phi is tabulated on the intervals only")
        out = np.empty(len(x))
        for g in np.unique(labels):
            sel = labels == g
            out[sel] = np.interp(x[sel], self.grid[g], self.table[g])
        return out


def check_fixpoint_identity(group: FuchsianGroup, atoms: PattersonAtoms, gamma: int,
                            delta: float | None = None) -> float:
    """Relative residual of sum_{g != gamma^{+-1}} |g'(p)|^delta Phi(g(p)) = Phi(p)."""
    if gamma not in group.cusps:
        raise ValueError(f"letter {gamma} is not parabolic")
    delta = atoms.delta if delta is None else delta
    p = float(group.cusps[gamma][0].p)
    rhs = phi_at(group, atoms, p, delta)
    lhs = 0.0
    for g in range(group.n_letters):
        if g in (gamma, gamma ^ 1):
            continue
        m = group.matrices[g]
        lhs += float(derivative(m, p)) ** delta * phi_at(group, atoms, float(apply(m, p)), delta)
    return abs(lhs - rhs) / rhs


def fixpoint_lhs_terms(group: FuchsianGroup, gamma: int) -> list:
    """Letters summed on the left of the fixpoint identity for gamma."""
    return [g for g in range(group.n_letters) if g not in (gamma, gamma ^ 1)]


# ---------------------------------------------------------------- kappa


@dataclass
class AtomCoding:
    """First two blocks of every atom, vectorized."""

    label1: np.ndarray
    X1: np.ndarray
    label2: np.ndarray
    X2: np.ndarray
    label3: np.ndarray

    @property
    def censored1(self) -> np.ndarray:
        return (self.label1 < 0) | (self.label2 < 0)

    @property
    def in_D(self) -> np.ndarray:
        return ~self.censored1 & (self.X1 == 1)


def _advance(group: FuchsianGroup, x: np.ndarray, labels: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Apply letter labels[i] k[i] times to x[i] (closed form for parabolic letters)."""
    A = group.arrays()
    li = np.maximum(labels, 0)
    G = A["mats"][li]
    N = G - np.eye(2)
    a = 1 + k * N[:, 0, 0]
    b = k * N[:, 0, 1]
    c = k * N[:, 1, 0]
    d = 1 + k * N[:, 1, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        y = (a * x + b) / (c * x + d)
    bad = (labels < 0) | ~np.isfinite(y) | (np.abs(c * x + d) <= 1e-15 * (np.abs(c * x) + np.abs(d)))
    return np.where(bad, np.nan, y)


def code_atoms(group: FuchsianGroup, atoms: PattersonAtoms) -> AtomCoding:
    x = atoms.points
    l1 = locate_many(group, x)
    X1 = run_length_many(group, x, l1)
    y = _advance(group, x, l1, X1)
    l2 = np.where(np.isfinite(y), locate_many(group, np.nan_to_num(y, nan=1e300)), -1)
    X2 = run_length_many(group, np.nan_to_num(y), l2)
    z = _advance(group, np.nan_to_num(y), l2, X2)
    l3 = np.where(np.isfinite(z) & (l2 >= 0), locate_many(group, np.nan_to_num(z, nan=1e300)), -1)
    return AtomCoding(l1, X1, l2, X2, l3)


@dataclass
class MuDMass:
    mu_D: float
    censored_mass: float
    n_atoms: int


def mu_D_mass(group: FuchsianGroup, atoms: PattersonAtoms, phi: PhiField | None = None,
              coding: AtomCoding | None = None) -> MuDMass:
    """mu_delta({X_1 = 1}) as the Phi-weighted mass of atoms whose first block has length one."""
    phi = phi or PhiField(group, atoms)
    coding = coding or code_atoms(group, atoms)
    D = coding.in_D
    vals = phi(atoms.points[D], coding.label1[D])
    return MuDMass(float(math.fsum(atoms.weights[D] * vals)),
                   float(atoms.weights[coding.censored1].sum()), int(D.sum()))


@dataclass
class KappaEstimate:
    kappa: float
    route: str  # "DirectFormula", "TailFit" or "FrechetFit"
    components: dict  # letter code -> (Phi(p_gamma), w_gamma^-delta)
    mu_D: float
    delta_used: float
    tail_constant: float
    diagnostics: dict = field(default_factory=dict)
    uncertainty: float | None = None

    def as_dict(self) -> dict:
        return {
            "route": self.route,
            "kappa": self.kappa,
            "uncertainty": self.uncertainty,
            "delta_used": self.delta_used,
            "mu_D": self.mu_D,
            "tail_constant": self.tail_constant,
            "components": {str(k): {"phi_p": v[0], "w_pow": v[1]} for k, v in self.components.items()},
            "diagnostics": self.diagnostics,
        }


def _check_delta(delta: float):
    if not 0.5 < delta <= 1.0 + 1e-9:
        raise DeltaOutOfRange(f"delta = {delta} is outside (1/2, 1]")


def cusp_components(group: FuchsianGroup, atoms: PattersonAtoms, delta: float) -> dict:
    out = {}
    for code in group.parabolic_codes():
        cusp = group.cusps[code][0]
        out[code] = (phi_at(group, atoms, float(cusp.p), delta), float(cusp.w) ** (-delta))
    return out


def kappa_direct(group: FuchsianGroup, atoms: PattersonAtoms, phi: PhiField | None = None,
                 mass: MuDMass | None = None) -> KappaEstimate:
    """kappa = sum_gamma (Phi(p_gamma) w_gamma^-delta)^2 / ((2 delta - 1) mu_D)."""
    delta = atoms.delta
    _check_delta(delta)
    mass = mass or mu_D_mass(group, atoms, phi)
    comps = cusp_components(group, atoms, delta)
    C = math.fsum((a * b) ** 2 for a, b in comps.values())
    kappa = C / ((2 * delta - 1) * mass.mu_D)
    return KappaEstimate(kappa, "DirectFormula", comps, mass.mu_D, delta, C,
                         {"censored_mass": mass.censored_mass})


def resolved_tail_limit(group: FuchsianGroup, R: float, shell_width: float = SHELL_WIDTH,
                        buffer: float = TAIL_BUFFER, n_cap: int = 10**7) -> int:
    """Largest n for which every cylinder g1 gamma^n g2 lies well inside the atom annulus.

    The orbit point of the prefix g1 gamma^n g2 must satisfy
    d(i, g1 gamma^n g2 (i)) <= R - shell_width - buffer.
    """
    A = group.arrays()
    mats = A["mats"]
    limit = R - shell_width - buffer
    best = None
    for gam in group.parabolic_codes():
        G = mats[gam]
        N = G - np.eye(2)
        g1s = [g for g in range(group.n_letters) if g not in (gam, gam ^ 1)]

        def worst(n):
            P = np.eye(2) + n * N
            stack = np.array([mats[g1] @ P @ mats[g2] for g1 in g1s for g2 in g1s])
            return float(_dist_from_mats(stack).max())

        if worst(1) > limit:
            return 0
        lo, hi = 1, 2
        while hi < n_cap and worst(hi) <= limit:
            lo, hi = hi, hi * 2
        hi = min(hi, n_cap)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if worst(mid) <= limit:
                lo = mid
            else:
                hi = mid
        best = lo if best is None else min(best, lo)
    return int(best)


def kappa_tail(group: FuchsianGroup, atoms: PattersonAtoms, n_min: int = N_MIN_TAIL, n_max: int | None = None,
               phi: PhiField | None = None, mass: MuDMass | None = None, coding: AtomCoding | None = None,
               buffer: float = TAIL_BUFFER, n_points: int = 24) -> KappaEstimate:
    """kappa from the tail mu_delta({X_1 = 1, X_2 = n}) ~ C n^{-2 delta}.

    The cylinder masses are Phi-weighted sums over atoms with X_1 = 1 whose
    second block is parabolic of length n and complete.  Only n up to the
    resolution limit of the atom annulus are used (capped by n_max); C is the
    mean of log mu_n + 2 delta log n over log-spaced n.
    """
    if n_min < 2:
        raise ValueError("n_min must be at least 2")
    delta = atoms.delta
    _check_delta(delta)
    phi = phi or PhiField(group, atoms)
    coding = coding or code_atoms(group, atoms)
    mass = mass or mu_D_mass(group, atoms, phi, coding)
    n_res = resolved_tail_limit(group, atoms.depth_L, atoms.shell_width, buffer)
    n_hi = n_res if n_max is None else min(n_res, n_max)
    if n_hi < n_min + 2:
        raise InsufficientTailMass(f"usable n-range [{n_min}, {n_hi}] is too short at depth {atoms.depth_L}")
    A = group.arrays()
    D = coding.in_D
    sel = D & (coding.label2 >= 0) & A["parabolic"][np.maximum(coding.label2, 0)] & (coding.label3 >= 0)
    sel &= (coding.X2 >= n_min) & (coding.X2 <= n_hi)
    vals = np.zeros(len(atoms))
    vals[sel] = phi(atoms.points[sel], coding.label1[sel]) * atoms.weights[sel]
    mu_by_n = np.bincount(coding.X2[sel], vals[sel], minlength=n_hi + 1)
    ns = np.unique(np.round(np.geomspace(n_min, n_hi, n_points)).astype(np.int64))
    mu = mu_by_n[ns]
    good = mu > 0
    if good.sum() < 3:
        raise InsufficientTailMass(f"only {int(good.sum())} populated n values in [{n_min}, {n_hi}]")
    ln, lm = np.log(ns[good]), np.log(mu[good])
    A_ = np.vstack([ln, np.ones_like(ln)]).T
    coef, *_ = np.linalg.lstsq(A_, lm, rcond=None)
    res = lm - A_ @ coef
    dof = max(len(ln) - 2, 1)
    slope_se = math.sqrt(float(res @ res) / dof / float(((ln - ln.mean()) ** 2).sum()))
    logC = lm + 2 * delta * ln
    C = float(np.exp(logC.mean()))
    comps = {}
    kappa = C / ((2 * delta - 1) * mass.mu_D)
    diag = {
        "slope": float(coef[0]),
        "slope_se": slope_se,
        "n_range": [int(n_min), int(n_hi)],
        "n_resolved": int(n_res),
        "n": [int(v) for v in ns[good]],
        "mu_n": [float(v) for v in mu[good]],
        "log_C_spread": float(logC.std(ddof=1)) if len(logC) > 1 else 0.0,
        "fit_residuals": [float(v) for v in res],
        "censored_mass": mass.censored_mass,
    }
    return KappaEstimate(kappa, "TailFit", comps, mass.mu_D, delta, C, diag)


@dataclass
class KappaReport:
    depth: float
    delta: DeltaEstimate
    direct: KappaEstimate
    tail: KappaEstimate
    fixpoint_residuals: dict
    previous_depth: float

    @property
    def relative_difference(self) -> float:
        a, b = self.direct.kappa, self.tail.kappa
        return abs(a - b) / (0.5 * (a + b))

    def as_dict(self) -> dict:
        return {
            "depth": self.depth,
            "previous_depth": self.previous_depth,
            "delta": self.delta.as_dict(),
            "direct": self.direct.as_dict(),
            "tail": self.tail.as_dict(),
            "relative_difference": self.relative_difference,
            "fixpoint_residuals": {str(k): v for k, v in self.fixpoint_residuals.items()},
        }


def _kappa_pair(group, ball, R, delta, s_margin, shell_width, n_min):
    atoms = patterson_atoms(group, R, delta, s_margin=s_margin, shell_width=shell_width, ball=ball)
    phi = PhiField(group, atoms)
    coding = code_atoms(group, atoms)
    mass = mu_D_mass(group, atoms, phi, coding)
    kd = kappa_direct(group, atoms, phi, mass)
    kt = kappa_tail(group, atoms, n_min=n_min, phi=phi, mass=mass, coding=coding)
    fp = {g: check_fixpoint_identity(group, atoms, g) for g in group.parabolic_codes()}
    return kd, kt, fp, atoms


def kappa_with_uncertainty(group: FuchsianGroup, R: float, s_margin: float = S_MARGIN,
                           shell_width: float = SHELL_WIDTH, n_min: int = N_MIN_TAIL,
                           delta: float | None = None, step: float = 2.0) -> KappaReport:
    """Both kappa routes at radius R, with uncertainties from the change since radius R - step.

    delta is estimated from the same orbit ball unless given.
    """
    ball = orbit_ball(group, R)
    dest = estimate_delta(group, R, ball=ball)
    if dest.warning:
        warnings.warn(dest.warning)
    d = dest.delta if delta is None else delta
    kd, kt, fp, _ = _kappa_pair(group, ball, R, d, s_margin, shell_width, n_min)
    kd0, kt0, _, _ = _kappa_pair(group, ball, R - step, d, s_margin, shell_width, n_min)
    kd.uncertainty = abs(kd.kappa - kd0.kappa) / 2
    kt.uncertainty = max(abs(kt.kappa - kt0.kappa) / 2, kt.kappa * kt.diagnostics["log_C_spread"]
                         / math.sqrt(len(kt.diagnostics["n"])))
    kd.diagnostics["kappa_previous_depth"] = kd0.kappa
    kt.diagnostics["kappa_previous_depth"] = kt0.kappa
    return KappaReport(float(R), dest, kd, kt, fp, float(R - step))


# ---------------------------------------------------------------- diagnostics


def conformality_drift(group: FuchsianGroup, atoms: PattersonAtoms, g: int, h: int) -> float:
    """mass(g(a_h)) / sum_{eta in a_h} w(eta) |g'(eta)|^delta, for h != g."""
    if h == g:
        raise ValueError("g is not defined on all of a_g")
    iv = group.intervals[h]
    m = group.matrices[g]
    A = (atoms.points > iv.lo) & (atoms.points < iv.hi)
    lhs = float(np.sum(atoms.weights[A] * np.asarray(derivative(m, atoms.points[A])) ** atoms.delta))
    lo, hi = sorted((float(apply(m, iv.lo)), float(apply(m, iv.hi))))
    rhs = float(atoms.weights[(atoms.points > lo) & (atoms.points < hi)].sum())
    return rhs / lhs


def conformality_table(group: FuchsianGroup, atoms: PattersonAtoms) -> dict:
    return {(g, h): conformality_drift(group, atoms, g, h)
            for g in range(group.n_letters) for h in range(group.n_letters) if h != g}


def shadow_ratio_diagnostic(group: FuchsianGroup, atoms: PattersonAtoms, xi: float, t_grid,
                            ball: OrbitBall | None = None, radius: float = 1.0) -> list:
    """Atomic mass of the shadow of B(xi_t, radius) over exp((1 - delta) d(xi_t, G i) - delta t).

    xi_t is the point at distance t from i on the ray towards xi.  Shadows are
    arcs seen from i, computed in the disk model where the ray is a radius.
    """
    delta = atoms.delta
    ball = ball if ball is not None else orbit_ball(group, atoms.depth_L)
    orb = np.concatenate([[1j], orbit_points(ball.mats)])
    z = complex(xi, 0.0)
    zeta = (z - 1j) / (z + 1j)
    theta0 = np.angle(zeta)
    pz = (atoms.points - 1j) / (atoms.points + 1j)
    ang = np.abs(np.angle(pz * np.exp(-1j * theta0)))
    out = []
    for t in t_grid:
        t = float(t)
        if t <= radius:
            mass = float(atoms.weights.sum())
        else:
            half = math.asin(min(1.0, math.sinh(radius) / math.sinh(t)))
            mass = float(atoms.weights[ang <= half].sum())
        r = math.tanh(t / 2) * np.exp(1j * theta0)
        zt = 1j * (1 + r) / (1 - r)
        arg = 1 + np.abs(orb - zt) ** 2 / (2 * orb.imag * zt.imag)
        dmin = float(np.arccosh(arg.min()))
        out.append(mass / math.exp((1 - delta) * dmin - delta * t))
    return out
