"""Ranked frequency sequences (paintbox measures) stored run-length encoded.

A sequence is a strictly decreasing list of atom values, each carrying an
integer multiplicity, plus the leftover dust mass.  Multiplicities are exact
Python integers, so the astronomically repeated atoms of the counterexample
constructions never have to be materialised.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import accumulate
from typing import Callable, Iterable, Optional, Sequence

import mpmath
import numpy as np
from scipy.special import zeta

from .errors import ConfigurationError, ConstructionError, DomainError, NumericalError

MASS_TOL = 1e-12
INT64_SAFE = 2**62

# Ranks beyond this are lumped into geometric rank blocks sharing one value.
DEFAULT_EXACT_RANKS = 100_000
DEFAULT_BLOCK_RATIO = 1.01


@dataclass(frozen=True)
class AtomGroup:
    value: float
    multiplicity: int
    marked: int = 0

    def __post_init__(self):
        if not (0.0 < self.value <= 1.0):
            raise DomainError(f"atom value {self.value!r} not in (0, 1]")
        if self.multiplicity < 1:
            raise DomainError(f"multiplicity must be >= 1, got {self.multiplicity}")
        if not (0 <= self.marked <= self.multiplicity):
            raise DomainError("marked count must lie in [0, multiplicity]")

    @property
    def log_multiplicity(self) -> float:
        return math.log(self.multiplicity)

    @property
    def mass(self) -> float:
        return self.value * float(self.multiplicity)


@dataclass(frozen=True, eq=False)
class FrequencySequence:
    """Run-length encoded ranked frequencies.

    ``values`` is strictly decreasing, ``counts[i]`` is the multiplicity of
    ``values[i]`` and ``marked[i]`` how many of those atoms are flagged as
    marked by a construction.  ``dust`` is ``1 - sum(values * counts)``;
    ``marked_dust`` is the share of it standing in for marked atoms too
    small to list.
    """

    values: np.ndarray
    counts: np.ndarray
    marked: np.ndarray
    dust: float
    provenance: dict = field(default_factory=dict)
    marked_dust: float = 0.0

    @classmethod
    def from_groups(cls, groups: Iterable[AtomGroup], provenance: Optional[dict] = None,
                    dust: Optional[float] = None) -> "FrequencySequence":
        groups = list(groups)
        values = np.array([g.value for g in groups], dtype=float)
        counts = [g.multiplicity for g in groups]
        marked = [g.marked for g in groups]
        return cls.from_arrays(values, counts, marked, provenance=provenance, dust=dust)

    @classmethod
    def from_arrays(cls, values, counts, marked=None, provenance: Optional[dict] = None,
                    dust: Optional[float] = None,
                    marked_dust: float = 0.0) -> "FrequencySequence":
        values = np.asarray(values, dtype=float)
        counts = list(int(c) for c in counts)
        marked = [0] * len(counts) if marked is None else list(int(m) for m in marked)
        if len(values) != len(counts) or len(marked) != len(counts):
            raise ConstructionError("values, counts and marked must have equal length")
        if len(values) and (values.min() <= 0.0 or values.max() > 1.0):
            raise DomainError("atom values must lie in (0, 1]")
        if any(c < 1 for c in counts):
            raise DomainError("multiplicities must be >= 1")
        if any(m < 0 or m > c for m, c in zip(marked, counts)):
            raise DomainError("marked counts must lie in [0, multiplicity]")

        order = np.argsort(-values, kind="stable")
        values = values[order]
        counts = [counts[i] for i in order]
        marked = [marked[i] for i in order]
        # merge equal values into one group
        if len(values) > 1 and np.any(values[1:] == values[:-1]):
            mv, mc, mm = [], [], []
            for v, c, m in zip(values.tolist(), counts, marked):
                if mv and mv[-1] == v:
                    mc[-1] += c
                    mm[-1] += m
                else:
                    mv.append(v)
                    mc.append(c)
                    mm.append(m)
            values, counts, marked = np.array(mv, dtype=float), mc, mm

        mass = math.fsum(v * float(c) for v, c in zip(values.tolist(), counts))
        if dust is None:
            dust = 1.0 - mass
        elif abs(mass + dust - 1.0) > MASS_TOL:
            raise ConstructionError(f"atom mass {mass!r} + dust {dust!r} != 1")
        if dust < -MASS_TOL:
            raise ConstructionError(f"atom mass {mass!r} exceeds 1")
        dust = max(0.0, float(dust))
        if not (0.0 <= marked_dust <= dust + MASS_TOL):
            raise DomainError(f"marked dust {marked_dust!r} must lie in [0, dust]")

        dtype = np.int64 if (not counts or max(counts) < INT64_SAFE) else object
        return cls(
            values=values,
            counts=np.array(counts, dtype=dtype),
            marked=np.array(marked, dtype=dtype),
            dust=dust,
            provenance=dict(provenance or {}),
            marked_dust=min(float(marked_dust), dust),
        )

    def __len__(self) -> int:
        return len(self.values)

    @property
    def groups(self) -> list[AtomGroup]:
        return [AtomGroup(float(v), int(c), int(m))
                for v, c, m in zip(self.values, self.counts, self.marked)]

    @cached_property
    def counts_f(self) -> np.ndarray:
        return np.array([float(c) for c in self.counts], dtype=float)

    @cached_property
    def log_counts(self) -> np.ndarray:
        return np.array([math.log(int(c)) for c in self.counts], dtype=float)

    @cached_property
    def marked_f(self) -> np.ndarray:
        return np.array([float(m) for m in self.marked], dtype=float)

    @cached_property
    def _cumulative(self) -> list[int]:
        return list(accumulate(int(c) for c in self.counts))

    @property
    def atom_mass(self) -> float:
        return math.fsum((self.values * self.counts_f).tolist())

    @property
    def n_atoms(self) -> int:
        return self._cumulative[-1] if len(self) else 0

    @property
    def has_marks(self) -> bool:
        return bool(np.any(self.marked_f > 0))

    def part_weights(self, part: str = "all") -> tuple[np.ndarray, float]:
        """Float multiplicities and dust attributed to ``part``.

        Dust other than ``marked_dust``, and any remainder atom, belong to
        the unmarked part.
        """
        if part == "all":
            return self.counts_f, self.dust
        if part == "marked":
            return self.marked_f, self.marked_dust
        if part == "unmarked":
            return self.counts_f - self.marked_f, self.dust - self.marked_dust
        raise ConfigurationError(f"unknown part {part!r}")

    def select(self, part: str) -> tuple[np.ndarray, list[int]]:
        """Values and exact integer multiplicities of the chosen part (zero groups dropped)."""
        cache = self.__dict__.setdefault("_select_cache", {})
        if part not in cache:
            values, counts = self._select(part)
            cache[part] = (values, counts, np.array([float(c) for c in counts], dtype=float))
        return cache[part][:2]

    def select_float(self, part: str) -> np.ndarray:
        """Float multiplicities matching :meth:`select`."""
        self.select(part)
        return self.__dict__["_select_cache"][part][2]

    def _select(self, part: str) -> tuple[np.ndarray, list[int]]:
        if part == "all":
            return self.values, [int(c) for c in self.counts]
        if part == "marked":
            keep = [i for i, m in enumerate(self.marked) if int(m) > 0]
            return self.values[keep], [int(self.marked[i]) for i in keep]
        if part == "unmarked":
            keep = [i for i, (c, m) in enumerate(zip(self.counts, self.marked)) if int(c) > int(m)]
            return self.values[keep], [int(self.counts[i]) - int(self.marked[i]) for i in keep]
        raise ConfigurationError(f"unknown part {part!r}")


@dataclass(frozen=True)
class SlowlyVaryingFn:
    eval: Callable[[float], float]
    label: str
    integrated: Optional[Callable[[float], float]] = None

    def __call__(self, t: float) -> float:
        return self.eval(t)


def constant_sv(c: float, label: Optional[str] = None) -> SlowlyVaryingFn:
    return SlowlyVaryingFn(lambda t: c, label or f"const({c!r})")


def _log_squared_inverse(t: float) -> float:
    return math.log(max(t, math.e**2)) ** -2


def _log_inverse(t: float) -> float:
    return 1.0 / math.log(max(t, math.e**2))


LOG_LAW_SV = SlowlyVaryingFn(_log_squared_inverse, "(log t)^-2", _log_inverse)


def check_slow_variation(ell: SlowlyVaryingFn, grid: Sequence[float], factors=(2.0, 10.0),
                         tol: float = 0.05) -> bool:
    """Finite-grid surrogate for slow variation.

    Requires positivity on the grid, and for each factor c that
    ``|ell(c t)/ell(t) - 1|`` is (weakly) shrinking along the grid and ends below ``tol``.
    """
    grid = sorted(grid)
    if any(not ell(t) > 0 for t in grid):
        return False
    for c in factors:
        dev = [abs(ell(c * t) / ell(t) - 1.0) for t in grid]
        if dev[-1] > tol:
            return False
        if any(b > a + 1e-12 for a, b in zip(dev, dev[1:])):
            return False
    return True


def rank_blocks(J: int, exact_ranks: int = DEFAULT_EXACT_RANKS,
                ratio: float = DEFAULT_BLOCK_RATIO) -> tuple[np.ndarray, list[int]]:
    """Partition ranks 1..J into singletons up to ``exact_ranks`` then geometric blocks.

    Returns the representative (midpoint) rank of each block and its width.
    """
    if J < 1:
        raise ConfigurationError("truncation must be a positive integer")
    e = min(J, exact_ranks)
    mids = [np.arange(1, e + 1, dtype=float)]
    widths = [1] * e
    a = e + 1
    extra_mid = []
    while a <= J:
        b = min(J + 1, max(a + 1, int(math.ceil(a * ratio))))
        extra_mid.append(0.5 * (a + b - 1))
        widths.append(b - a)
        a = b
    mids.append(np.array(extra_mid, dtype=float))
    return np.concatenate(mids), widths


def make_power_law(alpha: float, truncation: int, *, exact_ranks: int = DEFAULT_EXACT_RANKS,
                   block_ratio: float = DEFAULT_BLOCK_RATIO):
    """Deterministic power law ``p_j ∝ j^(-1/alpha)`` for ``j <= truncation``.

    Normalised over the kept ranks, so dust is 0 and the matching slowly
    varying function is the constant ``Z^-alpha``.
    """
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if truncation < 1:
        raise ConfigurationError("truncation must be >= 1")
    mids, widths = rank_blocks(truncation, exact_ranks, block_ratio)
    w = mids ** (-1.0 / alpha)
    Z = math.fsum((w * np.array(widths, dtype=float)).tolist())
    seq = FrequencySequence.from_arrays(
        w / Z, widths, dust=0.0 if truncation == 1 else None,
        provenance={"model": "powerlaw", "alpha": alpha, "J": truncation, "Z": Z,
                    "exact_ranks": min(truncation, exact_ranks)},
    )
    ell = constant_sv(Z ** (-alpha), f"Z^-alpha (Z={Z!r})")
    return seq, ell


def _xlog2(y):
    # x (log x)^2 written in terms of y = -log x
    return np.exp(-y) * y * y


def log_law_quantile(s, max_iter: int = 200) -> np.ndarray:
    """Solve ``x (log x)^2 = 1/s`` for x in (0, e^-2]; clamp to e^-2 when 1/s exceeds 4e^-2.

    Works on ``y = -log x`` where the map is monotone on ``[2, inf)``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    target = np.log(s)  # y - 2 log y = log s
    lo = np.full_like(s, 2.0)
    hi = np.maximum(4.0, 2.0 * target + 10.0)
    clamp = target <= 2.0 - 2.0 * math.log(2.0)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f = mid - 2.0 * np.log(mid) - target
        lo = np.where(f < 0, mid, lo)
        hi = np.where(f >= 0, mid, hi)
        if np.all((hi - lo) <= 4e-16 * hi):
            break
    else:
        raise NumericalError("log-law bisection did not converge in 200 iterations")
    y = np.where(clamp, 2.0, 0.5 * (lo + hi))
    return np.exp(-y)


def log_law_tail_mass(x: float) -> float:
    """Mass of log-law atoms below x: integral of dz / (z log^2 z) over (0, x)."""
    return 1.0 / math.log(1.0 / x)


def make_log_law(truncation: int, *, remainder: str = "dust", exact_ranks: int = DEFAULT_EXACT_RANKS,
                 block_ratio: float = DEFAULT_BLOCK_RATIO):
    """Log-law sequence with counting function ``g(x) ~ 1/(x (log x)^2)``.

    Ranks above ``truncation`` are discarded and their analytic mass is kept
    as dust.  The leftover mass ``1 - total`` becomes dust too
    (``remainder="dust"``) or one large atom (``remainder="atom"``).
    """
    if truncation < 1:
        raise ConfigurationError("truncation must be >= 1")
    if remainder not in ("dust", "atom"):
        raise ConfigurationError(f"remainder must be 'dust' or 'atom', got {remainder!r}")
    mids, widths = rank_blocks(truncation, exact_ranks, block_ratio)
    q = log_law_quantile(mids)
    base_mass = math.fsum((q * np.array(widths, dtype=float)).tolist())
    tail = log_law_tail_mass(float(log_law_quantile(truncation + 1)[0]))
    if base_mass + tail > 1.0:
        raise ConstructionError("log-law mass exceeds 1")
    values, counts = list(q), list(widths)
    rest = 1.0 - base_mass - tail
    dust = 1.0 - base_mass
    if remainder == "atom" and rest > 0:
        values.append(rest)
        counts.append(1)
        dust = tail
    seq = FrequencySequence.from_arrays(
        values, counts, dust=dust,
        provenance={"model": "loglaw", "J": truncation, "normalization": 1.0,
                    "tail_mass": tail, "remainder": remainder, "remainder_mass": rest,
                    "exact_ranks": min(truncation, exact_ranks)},
    )
    return seq, LOG_LAW_SV


def _power_law_shift(alpha: float) -> int:
    """Smallest s with sum_{i>s} i^(-1/alpha) < 1/2."""
    s = 0
    while zeta(1.0 / alpha, s + 1) >= 0.5:
        s += 1
    return s


def make_example_newex(alpha: float, scale_schedule: Sequence[int], rng: np.random.Generator, *,
                       r_max=4, r_values: Optional[Sequence[int]] = None,
                       truncation: int = 10**15, exact_ranks: int = 10_000,
                       block_ratio: float = DEFAULT_BLOCK_RATIO) -> FrequencySequence:
    """Random sequence whose counting function obeys the power law in probability
    while ``n^-alpha K_n`` does not settle.

    Base atoms are ``j^(-1/alpha)`` for ``j > s`` (s chosen so they total less
    than 1/2).  For each scale ``n_k`` an atom ``1/(n_k 2^(2^R_k))`` is added
    ``floor(2^(2^R_k) n_k^alpha)`` times with ``R_k`` uniform on
    ``{1, .., min(r_max(k), n_k)}``; a remainder atom restores total mass 1.
    ``r_values`` forces the R_k instead of drawing them.
    """
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    schedule = [int(n) for n in scale_schedule]
    if not schedule:
        raise ConfigurationError("scale schedule must be nonempty")
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] < 1:
        raise ConfigurationError("scale schedule must be strictly increasing positive integers")
    if sum(n ** (alpha - 1.0) for n in schedule) >= 0.5:
        raise ConfigurationError("schedule too small: need sum n_k^(alpha-1) < 1/2")
    caps = [r_max] * len(schedule) if np.isscalar(r_max) else list(r_max)
    if len(caps) != len(schedule):
        raise ConfigurationError("r_max must be a scalar or one cap per scale")

    s = _power_law_shift(alpha)
    mids, widths = rank_blocks(truncation, exact_ranks, block_ratio)
    q = (mids + s) ** (-1.0 / alpha)
    base_mass = math.fsum((q * np.array(widths, dtype=float)).tolist())
    tail = float(zeta(1.0 / alpha, truncation + s + 1))

    values, counts, marked = list(q), list(widths), [0] * len(widths)
    draws = []
    mpmath.mp.dps = 50
    for k, n_k in enumerate(schedule):
        cap = max(1, min(int(caps[k]), n_k))
        if r_values is not None:
            r = int(r_values[k])
            if not 1 <= r <= n_k:
                raise ConfigurationError(f"forced R_{k + 1}={r} outside 1..n_k")
        else:
            r = int(rng.integers(1, cap + 1))
        draws.append(r)
        log_value = -math.log(n_k) - (2 ** r) * math.log(2.0)
        if log_value < math.log(1e-300):
            raise ConstructionError(f"atom for scale k={k + 1} (n_k={n_k}, R_k={r}) underflows")
        value = math.exp(log_value)
        mult = int(mpmath.floor(mpmath.mpf(2) ** (2 ** r) * mpmath.mpf(n_k) ** alpha))
        if mult < 1:
            continue
        values.append(value)
        counts.append(mult)
        marked.append(mult)

    marked_mass = math.fsum(v * float(c) for v, c, m in zip(values, counts, marked) if m)
    rest = 1.0 - base_mass - tail - marked_mass
    if rest <= 0:
        raise ConstructionError("no mass left for the remainder atom")
    values.append(rest)
    counts.append(1)
    marked.append(0)
    return FrequencySequence.from_arrays(
        values, counts, marked, dust=tail,
        provenance={"model": "newex", "alpha": alpha, "schedule": schedule, "R": draws,
                    "shift": s, "J": truncation, "tail_mass": tail, "remainder_mass": rest},
    )


BOSZ_NMAX = (2, 5)


def bosz_multiplicity(n: int) -> int:
    """floor(n^(-9/2) e^(n^3)) evaluated in extended precision."""
    mpmath.mp.dps = 80
    return int(mpmath.floor(mpmath.mpf(n) ** mpmath.mpf(-4.5) * mpmath.exp(n ** 3)))


def make_example_bosz(n_max: int = 3, truncation: int = 10**20, *,
                      exact_ranks: int = 10_000,
                      block_ratio: float = DEFAULT_BLOCK_RATIO) -> FrequencySequence:
    """Deterministic sequence with ``(log n) K_n / n -> 1`` but no K_{n,r} limit.

    Log-law base with its leading terms removed as needed, marked groups
    ``e^(-n^3)`` repeated ``floor(n^(-9/2) e^(n^3))`` times for
    ``n = 2..n_max``, and a remainder atom.
    """
    if not (BOSZ_NMAX[0] <= n_max <= BOSZ_NMAX[1]):
        raise ConfigurationError(f"n_max must lie in [2, 5], got {n_max}")
    mids, widths = rank_blocks(truncation, exact_ranks, block_ratio)
    q = log_law_quantile(mids)
    w = np.array(widths, dtype=float)
    tail = log_law_tail_mass(float(log_law_quantile(truncation + 1)[0]))
    budget = 1.0 - (float(zeta(4.5)) - 1.0)
    # remove leading terms until the remaining base mass fits the budget
    suffix = np.cumsum((q * w)[::-1])[::-1] + tail
    drop = int(np.argmax(suffix < budget)) if np.any(suffix < budget) else len(q)
    q, widths = q[drop:], widths[drop:]
    base_mass = math.fsum((q * np.array(widths, dtype=float)).tolist())

    values, counts, marked = list(q), list(widths), [0] * len(widths)
    for n in range(2, n_max + 1):
        m = bosz_multiplicity(n)
        values.append(math.exp(-n ** 3))
        counts.append(m)
        marked.append(m)
    marked_mass = math.fsum(v * float(c) for v, c, mk in zip(values, counts, marked) if mk)
    # groups beyond n_max hold almost no balls at any representable scale, so
    # their mass is carried as dust like the truncated base tail
    later = bosz_marked_tail_mass(n_max + 1)
    rest = 1.0 - base_mass - tail - later - marked_mass
    values.append(rest)
    counts.append(1)
    marked.append(0)
    return FrequencySequence.from_arrays(
        values, counts, marked, dust=tail + later, marked_dust=later,
        provenance={"model": "bosz", "n_max": n_max, "J": truncation, "dropped": drop,
                    "tail_mass": tail, "marked_tail_mass": later, "remainder_mass": rest},
    )


def bosz_marked_tail_mass(n_from: int) -> float:
    """Total mass of the marked groups n >= n_from."""
    exact_to = 9
    mpmath.mp.dps = 80
    head = mpmath.fsum(bosz_multiplicity(n) * mpmath.exp(-n ** 3)
                       for n in range(n_from, exact_to))
    # beyond exact_to the floor is invisible in double precision: mass = n^-4.5
    return float(head) + float(zeta(4.5, max(n_from, exact_to)))


def counting_function(seq: FrequencySequence, x: float, part: str = "all") -> int:
    """Number of atoms with value >= x."""
    if not x > 0:
        raise DomainError(f"x must be positive, got {x!r}")
    # values are decreasing: count entries >= x
    idx = int(np.searchsorted(-seq.values, -x, side="right"))
    if idx == 0:
        return 0
    if part == "all":
        return seq._cumulative[idx - 1]
    _, counts = _part_prefix(seq, part)
    return counts[idx - 1]


def _part_prefix(seq: FrequencySequence, part: str):
    cache = seq.__dict__.setdefault("_part_cache", {})
    if part not in cache:
        if part == "marked":
            c = [int(m) for m in seq.marked]
        elif part == "unmarked":
            c = [int(a) - int(m) for a, m in zip(seq.counts, seq.marked)]
        else:
            raise ConfigurationError(f"unknown part {part!r}")
        cache[part] = (None, list(accumulate(c)))
    return cache[part]
