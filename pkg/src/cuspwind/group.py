"""Essentially free Fuchsian groups H * Gamma and their Bowen-Series intervals.

Letters are integer codes.  Generator ``i`` (hyperbolic generators first, then
cusps, in spec order) owns codes ``2i`` for the generator and ``2i + 1`` for its
inverse, so inversion is ``code ^ 1``.  For a cusp (p, w) the positive element
is ``parabolic_from_cusp``; its interval lies to the left of p.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
import yaml

from .errors import (
    AffineGenerator,
    DepthTooLarge,
    ParseError,
    PingPongViolation,
    SpecError,
    TangencyViolation,
)
from .hyperbolic import (
    Kind,
    Mobius,
    ParabolicCusp,
    apply,
    classify,
    cusp_of,
    isometric_circle,
    parabolic_from_cusp,
)

TANGENCY_TOL = 1e-9
MARKOV_TOL = 1e-9
DEFAULT_WORD_BUDGET = 20_000_000
ORBIT_CACHE_VERSION = 1


@dataclass(frozen=True)
class GeneratorLabel:
    index: int
    sign: int

    @property
    def code(self) -> int:
        return 2 * self.index + (0 if self.sign > 0 else 1)

    @classmethod
    def from_code(cls, code: int) -> "GeneratorLabel":
        return cls(code // 2, 1 if code % 2 == 0 else -1)

    def inv(self) -> "GeneratorLabel":
        return GeneratorLabel(self.index, -self.sign)


def inv(code: int) -> int:
    return code ^ 1


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise SpecError(f"bad interval ({self.lo}, {self.hi})")

    def contains(self, x) -> bool:
        return self.lo < x < self.hi

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class GroupSpec:
    hyperbolic: tuple = ()
    parabolic: tuple = ()
    name: str = ""

    def canonical_text(self) -> str:
        def num(v):
            return str(Fraction(v)) if isinstance(v, (int, Fraction)) else repr(float(v))

        lines = ["hyperbolic:"]
        for m in self.hyperbolic:
            lines.append("  " + " ".join(num(v) for v in (m.a, m.b, m.c, m.d)))
        lines.append("parabolic:")
        for c in self.parabolic:
            lines.append(f"  {num(c.p)} {num(c.w)}")
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


@dataclass(frozen=True)
class FuchsianGroup:
    spec: GroupSpec
    matrices: tuple  # float Mobius per code
    exact: tuple | None  # Fraction Mobius per code, when the spec is rational
    intervals: tuple  # Interval per code
    cusps: dict  # code -> (ParabolicCusp, orientation)
    delta: float | None = None
    exact_intervals: tuple | None = None  # (lo, hi) Fractions per code
    exact_cusps: dict | None = None  # code -> (ParabolicCusp with Fractions, orientation)
    _arrays: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_letters(self) -> int:
        return len(self.matrices)

    @property
    def n_hyperbolic(self) -> int:
        return len(self.spec.hyperbolic)

    @property
    def labels(self) -> tuple:
        return tuple(GeneratorLabel.from_code(k) for k in range(self.n_letters))

    @property
    def digest(self) -> str:
        return self.spec.digest

    def is_parabolic(self, code: int) -> bool:
        return code in self.cusps

    def parabolic_codes(self) -> list:
        return sorted(self.cusps)

    def name(self, code: int) -> str:
        i = code // 2
        base = f"h{i}" if i < self.n_hyperbolic else f"c{i - self.n_hyperbolic}"
        return base if code % 2 == 0 else base + "^-1"

    def with_delta(self, delta: float | None) -> "FuchsianGroup":
        if delta is not None and not delta > 0.5:
            raise SpecError(f"delta must exceed 1/2, got {delta}")
        return FuchsianGroup(self.spec, self.matrices, self.exact, self.intervals, self.cusps, delta,
                             self.exact_intervals, self.exact_cusps)

    def arrays(self) -> dict:
        """Numpy views used by the vectorized code paths (cached)."""
        if not self._arrays:
            n = self.n_letters
            mats = np.array([m.as_array() for m in self.matrices])
            lo = np.array([iv.lo for iv in self.intervals])
            hi = np.array([iv.hi for iv in self.intervals])
            parab = np.zeros(n, bool)
            p = np.zeros(n)
            w = np.ones(n)
            orient = np.zeros(n, np.int64)
            for k, (c, o) in self.cusps.items():
                parab[k] = True
                p[k], w[k], orient[k] = float(c.p), float(c.w), o
            order = np.argsort(lo)
            self._arrays.update(
                mats=mats, lo=lo, hi=hi, parabolic=parab, p=p, w=w, orient=orient,
                order=order, lo_sorted=lo[order], hi_sorted=hi[order],
                inv=np.arange(n) ^ 1,
            )
        return self._arrays


def _to_number(v):
    if isinstance(v, bool):
        raise ParseError(f"expected a number, got {v!r}")
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(repr(v))
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"cannot read {v!r} as a number") from exc
    raise ParseError(f"expected a number, got {v!r}")


def parse_group_spec(doc, name: str = "") -> GroupSpec:
    """Build a GroupSpec from a mapping ``{hyperbolic: [[a,b,c,d],...], parabolic: [{p, w},...]}``.

    Numbers may be ints, decimal strings, fraction strings or floats; floats are
    read through their decimal repr so that ``1.05`` becomes ``21/20`` exactly.
    """
    if not isinstance(doc, dict):
        raise ParseError("group spec must be a mapping")
    unknown = set(doc) - {"hyperbolic", "parabolic", "name"}
    if unknown:
        raise ParseError(f"unknown keys in group spec: {sorted(unknown)}")
    hyp = doc.get("hyperbolic") or []
    par = doc.get("parabolic") or []
    if not isinstance(hyp, list) or not isinstance(par, list):
        raise ParseError("'hyperbolic' and 'parabolic' must be lists")
    mats = []
    for row in hyp:
        if not isinstance(row, list) or len(row) != 4:
            raise ParseError(f"hyperbolic entry must be [a, b, c, d], got {row!r}")
        a, b, c, d = (_to_number(v) for v in row)
        if a * d - b * c <= 0:
            raise ParseError(f"hyperbolic entry {row!r} has nonpositive determinant")
        mats.append(Mobius(a, b, c, d))
    cusps = []
    for entry in par:
        if not isinstance(entry, dict) or set(entry) != {"p", "w"}:
            raise ParseError(f"parabolic entry must be {{p, w}}, got {entry!r}")
        p, w = _to_number(entry["p"]), _to_number(entry["w"])
        if w <= 0:
            raise ParseError(f"cusp width must be positive, got {entry['w']!r}")
        cusps.append(ParabolicCusp(p, w))
    return GroupSpec(tuple(mats), tuple(cusps), name or str(doc.get("name", "")))


def load_group_spec(path) -> GroupSpec:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_group_spec(doc, name=path.stem)


def shipped_groups() -> list:
    root = resources.files("cuspwind") / "data" / "groups"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def shipped_group_path(name: str) -> Path:
    return Path(str(resources.files("cuspwind") / "data" / "groups" / f"{name}.yaml"))


def load_shipped(name: str) -> "FuchsianGroup":
    return build_group(load_group_spec(shipped_group_path(name)))


def _check_spec(spec: GroupSpec):
    if not spec.parabolic:
        raise SpecError("at least one parabolic cusp is required")
    for i, m in enumerate(spec.hyperbolic):
        if classify(m) is not Kind.HYPERBOLIC:
            raise SpecError(f"hyperbolic generator {i} classifies as {classify(m).value}")
        if m.c == 0:
            raise AffineGenerator(f"hyperbolic generator {i} fixes infinity")


def build_group(spec: GroupSpec, delta: float | None = None) -> FuchsianGroup:
    """Generators, their inverses and the interval a_g of each letter.

    a_g is spanned by the isometric circle of g.  Raises PingPongViolation when
    two closures meet (other than a cusp pair at its fixed point) or when the
    Markov check fails.
    """
    _check_spec(spec)
    exact_ok = all(m.exact for m in spec.hyperbolic) and all(
        isinstance(c.p, (int, Fraction)) and isinstance(c.w, (int, Fraction)) for c in spec.parabolic
    )
    gens_exact = list(spec.hyperbolic) + [parabolic_from_cusp(c) for c in spec.parabolic]
    letters_exact = []
    for g in gens_exact:
        letters_exact += [g, g.inverse()]
    matrices = tuple(m.to_float() for m in letters_exact)

    intervals, cusps = [], {}
    for k, m in enumerate(matrices):
        center, radius = isometric_circle(m)
        intervals.append([center - radius, center + radius])
    nh = len(spec.hyperbolic)
    for j, c in enumerate(spec.parabolic):
        kp, km = 2 * (nh + j), 2 * (nh + j) + 1
        pf, wf = float(c.p), float(c.w)
        cplus, o = cusp_of(matrices[kp])
        assert o == 1
        cusps[kp] = (ParabolicCusp(pf, wf), 1)
        cusps[km] = (ParabolicCusp(pf, wf), -1)
        # the tangent endpoints must both sit at p; snap them there exactly
        if abs(intervals[kp][1] - pf) > TANGENCY_TOL or abs(intervals[km][0] - pf) > TANGENCY_TOL:
            raise TangencyViolation(f"cusp {j}: circles do not touch at p = {pf}")
        intervals[kp][1] = pf
        intervals[km][0] = pf
    intervals = tuple(Interval(lo, hi) for lo, hi in intervals)

    n = len(intervals)
    for g in range(n):
        for h in range(g + 1, n):
            a, b = intervals[g], intervals[h]
            gap = max(a.lo, b.lo) - min(a.hi, b.hi)
            pair = g in cusps and h == (g ^ 1)
            if pair:
                continue
            if gap <= TANGENCY_TOL:
                raise PingPongViolation(
                    f"intervals of letters {g} and {h} overlap or touch: "
                    f"({a.lo:.6g}, {a.hi:.6g}) and ({b.lo:.6g}, {b.hi:.6g})"
                )

    exact_intervals = exact_cusps = None
    if exact_ok:
        exact_intervals, exact_cusps = [], {}
        for k, m in enumerate(letters_exact):
            center, radius = isometric_circle(m)
            exact_intervals.append((center - radius, center + radius))
        for j, c in enumerate(spec.parabolic):
            kp = 2 * (nh + j)
            exact_cusps[kp] = (c, 1)
            exact_cusps[kp + 1] = (c, -1)
        exact_intervals = tuple(exact_intervals)
    group = FuchsianGroup(spec, matrices, tuple(letters_exact) if exact_ok else None, intervals, cusps,
                          None, exact_intervals, exact_cusps)
    report = validate_markov(group)
    if not report.passed:
        raise PingPongViolation(f"Markov check failed: {report.summary()}")
    return group.with_delta(delta) if delta is not None else group


class PairCheck(NamedTuple):
    g: int
    h: int  # -1 marks the endpoint check of a_g itself
    residual: float
    passed: bool


@dataclass
class ValidationReport:
    passed: bool
    max_residual: float
    checks: list
    tolerance: float = MARKOV_TOL

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        if self.passed:
            return f"pass (max residual {self.max_residual:.3e})"
        worst = max(self.failures, key=lambda c: c.residual)
        what = "endpoints" if worst.h < 0 else f"image of a_{worst.h}"
        return f"fail at letter {worst.g} ({what}), residual {worst.residual:.3e}"

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "checks": [c._asdict() for c in self.checks],
        }


def validate_markov(group: FuchsianGroup, tol: float = MARKOV_TOL) -> ValidationReport:
    """Check the Markov law of the Bowen-Series map letter by letter.

    With T = g on a_g we need, for h != g^-1, that g^-1 sends a_h into the
    closure of a_g, and that g sends the endpoints lo, hi of a_g to the
    endpoints hi, lo of a_{g^-1}.
    """
    checks = []
    n = group.n_letters
    for g in range(n):
        gi = group.matrices[g ^ 1]
        a = group.intervals[g]
        scale = max(1.0, abs(a.lo), abs(a.hi))
        for h in range(n):
            if h == (g ^ 1):
                continue
            b = group.intervals[h]
            res = 0.0
            for y in (b.lo, b.hi):
                z = float(apply(gi, y))
                res = max(res, (a.lo - z) / scale, (z - a.hi) / scale)
            res = max(res, 0.0)
            checks.append(PairCheck(g, h, res, res < tol))
        m = group.matrices[g]
        target = group.intervals[g ^ 1]
        r1 = abs(float(apply(m, a.lo)) - target.hi)
        r2 = abs(float(apply(m, a.hi)) - target.lo)
        res = max(r1, r2) / max(1.0, abs(target.lo), abs(target.hi))
        checks.append(PairCheck(g, -1, res, res < tol))
    max_res = max(c.residual for c in checks)
    return ValidationReport(all(c.passed for c in checks), max_res, checks, tol)


def word_count(n_letters: int, max_length: int) -> int:
    return 1 + n_letters * sum((n_letters - 1) ** j for j in range(max_length))


def _dist_from_mats(mats: np.ndarray) -> np.ndarray:
    # cosh d(i, g i) = (a^2 + b^2 + c^2 + d^2) / 2 for unit determinant
    s = 0.5 * np.einsum("nij,nij->n", mats, mats)
    return np.arccosh(np.maximum(s, 1.0))


class Word(NamedTuple):
    letters: tuple
    matrix: Mobius
    dist: float


def word_shells(group: FuchsianGroup, max_length: int, budget: int = DEFAULT_WORD_BUDGET):
    """Yield ``(letters, mats, dist)`` arrays for each word length 1..max_length.

    Words of each length come in lexicographic order of their letter codes.
    """
    if max_length < 0:
        raise ValueError("max_length must be nonnegative")
    n = group.n_letters
    total = word_count(n, max_length)
    if total > budget:
        raise DepthTooLarge(f"{total} words at length {max_length} exceed the budget {budget}")
    A = group.arrays()
    gens = A["mats"]
    letters = np.arange(n)[:, None]
    mats = gens.copy()
    for j in range(1, max_length + 1):
        if j > 1:
            parent = np.repeat(np.arange(len(mats)), n - 1)
            last = letters[:, -1]
            # children in increasing code order, skipping the inverse of the last letter
            nxt = np.array([[c for c in range(n) if c != (l ^ 1)] for l in range(n)])[last].ravel()
            letters = np.concatenate([letters[parent], nxt[:, None]], axis=1)
            mats = mats[parent] @ gens[nxt]
        yield letters, mats, _dist_from_mats(mats)


def enumerate_words(group: FuchsianGroup, max_length: int, budget: int = DEFAULT_WORD_BUDGET) -> Iterator[Word]:
    """All reduced words up to ``max_length``, identity first, breadth first."""
    from .hyperbolic import IDENTITY

    shells = word_shells(group, max_length, budget)  # validates before yielding
    yield Word((), IDENTITY, 0.0)
    for letters, mats, dist in shells:
        for row, m, d in zip(letters, mats, dist):
            yield Word(tuple(int(c) for c in row), Mobius(*m.ravel()), float(d))


@dataclass
class OrbitBall:
    """Orbit points g(i) with d(i, g(i)) <= radius, identity excluded.

    Rows are ordered by word length and lexicographically within a length.
    ``parent`` indexes the row of the word with its last letter removed
    (-1 for single letters).
    """

    radius: float
    margin: float
    mats: np.ndarray
    dist: np.ndarray
    length: np.ndarray
    letter: np.ndarray
    parent: np.ndarray
    digest: str = ""

    def __len__(self):
        return len(self.dist)

    def word(self, row: int) -> tuple:
        out = []
        while row >= 0:
            out.append(int(self.letter[row]))
            row = int(self.parent[row])
        return tuple(reversed(out))

    def restrict(self, radius: float) -> "OrbitBall":
        if radius > self.radius:
            raise ValueError("cannot widen a ball by restriction")
        keep = self.dist <= radius
        new_index = np.cumsum(keep) - 1
        parent = np.where(self.parent >= 0, new_index[np.maximum(self.parent, 0)], -1)
        # restricted parents may themselves fall outside; mark them unknown
        parent = np.where((self.parent >= 0) & ~keep[np.maximum(self.parent, 0)], -2, parent)
        return OrbitBall(radius, self.margin, self.mats[keep], self.dist[keep], self.length[keep],
                         self.letter[keep], parent[keep], self.digest)


def orbit_ball(group: FuchsianGroup, radius: float, margin: float = 1.0,
               budget: int = DEFAULT_WORD_BUDGET) -> OrbitBall:
    """Enumerate the orbit of i inside the hyperbolic ball of the given radius.

    Words are grown letter by letter; a branch is pruned once its orbit point is
    farther than ``radius + margin``.  Along reduced words of a ping-pong group
    the distance is increasing up to bounded backtracking, and ``margin`` covers
    that backtracking.
    """
    A = group.arrays()
    gens, n = A["mats"], group.n_letters
    children = np.array([[c for c in range(n) if c != (l ^ 1)] for l in range(n)])
    mats = gens.copy()
    dist = _dist_from_mats(mats)
    letter = np.arange(n)
    node_parent = np.full(n, -1)
    out_mats, out_dist, out_len, out_letter, out_parent = [], [], [], [], []
    offset = 0
    total = 0
    j = 1
    while len(mats):
        alive = dist <= radius + margin
        mats, dist, letter, node_parent = mats[alive], dist[alive], letter[alive], node_parent[alive]
        inside = dist <= radius
        # map positions among alive nodes to output rows
        rows = np.full(len(dist), -1)
        rows[inside] = offset + np.arange(inside.sum())
        out_mats.append(mats[inside])
        out_dist.append(dist[inside])
        out_len.append(np.full(inside.sum(), j))
        out_letter.append(letter[inside])
        out_parent.append(node_parent[inside])
        offset += int(inside.sum())
        total += len(dist) * (n - 1)
        if total > budget:
            raise DepthTooLarge(f"orbit ball of radius {radius} exceeds the budget of {budget} nodes")
        parent_idx = np.repeat(np.arange(len(mats)), n - 1)
        nxt = children[letter].ravel()
        mats = mats[parent_idx] @ gens[nxt]
        dist = _dist_from_mats(mats)
        node_parent = rows[parent_idx]
        letter = nxt
        j += 1
    cat = np.concatenate
    return OrbitBall(
        float(radius), float(margin),
        cat(out_mats) if out_mats else np.zeros((0, 2, 2)),
        cat(out_dist), cat(out_len), cat(out_letter), cat(out_parent), group.digest,
    )


def save_orbit_ball(path, ball: OrbitBall, extra: dict | None = None):
    """Write the ball (and optional extra columns) to an ``.npz`` cache file."""
    payload = dict(
        version=np.array(ORBIT_CACHE_VERSION), digest=np.array(ball.digest),
        radius=np.array(ball.radius), margin=np.array(ball.margin),
        mats=ball.mats, dist=ball.dist, length=ball.length, letter=ball.letter, parent=ball.parent,
    )
    for k, v in (extra or {}).items():
        payload["extra_" + k] = np.asarray(v)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **payload)


def load_orbit_ball(path, digest: str | None = None):
    """Read a cache file; returns ``(ball, extra)`` or None when stale or unreadable."""
    try:
        with np.load(path, allow_pickle=False) as z:
            if int(z["version"]) != ORBIT_CACHE_VERSION:
                return None
            if digest is not None and str(z["digest"]) != digest:
                return None
            ball = OrbitBall(float(z["radius"]), float(z["margin"]), z["mats"], z["dist"],
                             z["length"], z["letter"], z["parent"], str(z["digest"]))
            extra = {k[6:]: z[k] for k in z.files if k.startswith("extra_")}
    except (OSError, KeyError, ValueError):
        return None
    return ball, extra


def cached_orbit_ball(group: FuchsianGroup, radius: float, cache_dir=None, margin: float = 1.0) -> OrbitBall:
    """orbit_ball with an on-disk cache keyed by the spec digest."""
    if cache_dir is None:
        return orbit_ball(group, radius, margin)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"orbit_{group.digest[:16]}_r{radius:g}_m{margin:g}.npz"
    hit = load_orbit_ball(path, group.digest) if path.exists() else None
    if hit is not None:
        return hit[0]
    ball = orbit_ball(group, radius, margin)
    save_orbit_ball(path, ball)
    return ball
