"""Kingman and Lambda-coalescent genealogies, the growing-population time
change, infinite-alleles mutation and the allelic partition.

Lineage ids: leaves are ``0..n-1``; each merger creates the next id, so an
id is always larger than the ids it replaces and the root is ``2n-2`` for a
binary tree (fewer nodes under multiple mergers).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import betaln, gammaln

from .errors import ConfigurationError, DomainError, IntegrityError, ModelError, NumericalError
from .occupancy import BlockSpectrum

KINDS = ("kingman", "uniform01", "beta", "custom")
QUAD_TOL = 1e-10


@dataclass(frozen=True)
class LambdaMeasure:
    """Finite measure on [0, 1] driving the merger rates.

    ``kingman`` is the unit point mass at 0, ``uniform01`` Lebesgue measure,
    ``beta`` the Beta(alpha, 2 - alpha) law and ``custom`` an arbitrary
    density on (0, 1).
    """

    kind: str
    alpha: Optional[float] = None
    density: Optional[Callable[[float], float]] = field(default=None, compare=False)
    total_mass: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown measure kind {self.kind!r}")
        if self.kind == "beta":
            if self.alpha is None or not (0.0 < self.alpha < 1.0):
                raise DomainError(f"beta measure needs 0 < alpha < 1, got {self.alpha!r}")
        if self.kind == "custom":
            if self.density is None:
                raise ConfigurationError("custom measure needs a density")
            mass = self.total_mass
            if mass is None:
                mass, err = integrate.quad(self.density, 0.0, 1.0, limit=200)
                if not np.isfinite(mass) or err > 1e-8 * max(1.0, abs(mass)):
                    raise NumericalError("could not integrate the custom density")
                object.__setattr__(self, "total_mass", float(mass))
            if not (self.total_mass > 0 and np.isfinite(self.total_mass)):
                raise DomainError("custom measure must have finite positive mass")

    @classmethod
    def kingman(cls) -> "LambdaMeasure":
        return cls("kingman")

    @classmethod
    def uniform01(cls) -> "LambdaMeasure":
        return cls("uniform01")

    @classmethod
    def beta(cls, alpha: float) -> "LambdaMeasure":
        return cls("beta", alpha=float(alpha))

    @classmethod
    def custom(cls, density: Callable[[float], float],
               total_mass: Optional[float] = None) -> "LambdaMeasure":
        return cls("custom", density=density, total_mass=total_mass)

    @property
    def mass(self) -> float:
        if self.kind == "custom":
            return float(self.total_mass)
        return 1.0


def lambda_rate(measure: LambdaMeasure, b: int, k: int) -> float:
    """Rate at which a given set of k out of b lineages merges."""
    if b < 2 or not (2 <= k <= b):
        raise DomainError(f"need 2 <= k <= b, got b={b}, k={k}")
    if measure.kind == "kingman":
        return 1.0 if k == 2 else 0.0
    if measure.kind == "uniform01":
        return math.exp(betaln(k - 1, b - k + 1))
    if measure.kind == "beta":
        a = measure.alpha
        return math.exp(betaln(k - 2 + a, b - k + 2 - a) - betaln(a, 2 - a))
    return _custom_rate(measure, b, k)


def _custom_rate(measure: LambdaMeasure, b: int, k: int) -> float:
    f = measure.density
    val, err = integrate.quad(lambda x: x ** (k - 2) * (1.0 - x) ** (b - k) * f(x),
                              0.0, 1.0, limit=200, epsabs=1e-13, epsrel=QUAD_TOL)
    if not np.isfinite(val) or err > 1e-6 * max(abs(val), 1e-300) + 1e-12:
        raise NumericalError(f"quadrature for lambda_{{{b},{k}}} did not converge (err={err:g})")
    return float(val)


def merger_log_weights(measure: LambdaMeasure, b: int) -> np.ndarray:
    """``log(C(b,k) lambda_{b,k})`` for k = 2..b (``-inf`` where the rate vanishes)."""
    k = np.arange(2, b + 1, dtype=float)
    log_choose = gammaln(b + 1.0) - gammaln(k + 1.0) - gammaln(b - k + 1.0)
    if measure.kind == "kingman":
        out = np.full(len(k), -np.inf)
        out[0] = log_choose[0]
        return out
    if measure.kind == "uniform01":
        return log_choose + gammaln(k - 1.0) + gammaln(b - k + 1.0) - gammaln(b)
    if measure.kind == "beta":
        a = measure.alpha
        return (log_choose + gammaln(k - 2.0 + a) + gammaln(b - k + 2.0 - a) - gammaln(b)
                - betaln(a, 2.0 - a))
    rates = np.array([_custom_rate(measure, b, int(kk)) for kk in k])
    with np.errstate(divide="ignore"):
        return log_choose + np.log(rates)


class _WeightTable:
    """Precomputed pieces of ``log(C(b,k) lambda_{b,k})`` for all b <= n.

    For the closed-form kinds the weight splits as ``A[k] + B[b-k] + log b + c``,
    so each level costs two array slices instead of fresh gamma evaluations.
    """

    def __init__(self, measure: LambdaMeasure, n: int):
        self.measure = measure
        k = np.arange(n + 1, dtype=float)
        if measure.kind == "uniform01":
            with np.errstate(invalid="ignore"):
                self.A = gammaln(k - 1.0) - gammaln(k + 1.0)
            self.B = np.zeros(n + 1)
            self.c = 0.0
        elif measure.kind == "beta":
            a = measure.alpha
            with np.errstate(invalid="ignore"):
                self.A = gammaln(k - 2.0 + a) - gammaln(k + 1.0)
            self.B = gammaln(k + 2.0 - a) - gammaln(k + 1.0)
            self.c = -float(betaln(a, 2.0 - a))
        else:
            self.A = None

    def __call__(self, b: int) -> np.ndarray:
        if self.A is None:
            return merger_log_weights(self.measure, b)
        return self.A[2:b + 1] + self.B[b - 2::-1] + (math.log(b) + self.c)


@dataclass(frozen=True)
class MergerHistory:
    """A coalescent genealogy as an ordered list of merger events.

    ``event_children[e]`` are the lineages merged at ``event_times[e]`` into
    lineage ``n + e``.  ``time_scale`` is ``"theta"`` (homogeneous time) or
    ``"psi"`` (growing-population time, with ``gamma`` set).
    """

    n: int
    event_times: np.ndarray
    event_children: tuple
    time_scale: str = "theta"
    gamma: Optional[float] = None

    def __post_init__(self):
        self.event_times.setflags(write=False)

    @property
    def n_events(self) -> int:
        return len(self.event_times)

    @property
    def event_new(self) -> np.ndarray:
        return self.n + np.arange(self.n_events)

    @property
    def n_nodes(self) -> int:
        return self.n + self.n_events

    @property
    def root(self) -> int:
        return self.n_nodes - 1

    @property
    def lineage_counts(self) -> np.ndarray:
        """Number of lineages after each event."""
        sizes = np.array([len(c) for c in self.event_children], dtype=np.int64)
        return self.n - np.cumsum(sizes - 1)

    @property
    def level_times(self) -> np.ndarray:
        """Array ``T`` with ``T[k]`` the first time at most k lineages remain (k = 1..n).

        Index 0 is unused (nan).  Levels skipped by a multiple merger get
        the time of that merger.
        """
        out = np.full(self.n + 1, np.nan)
        out[self.n] = 0.0
        counts = self.lineage_counts
        k = np.arange(1, self.n)
        # first event whose post-count is <= k
        idx = np.searchsorted(-counts, -k, side="left")
        out[1:self.n] = self.event_times[idx]
        return out

    def node_birth(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.n), self.event_times])

    def node_parent(self) -> np.ndarray:
        parent = np.full(self.n_nodes, -1, dtype=np.int64)
        for e, kids in enumerate(self.event_children):
            parent[list(kids)] = self.n + e
        return parent

    def branch_lengths(self) -> np.ndarray:
        """Length of the branch above each node (0 for the root)."""
        birth = self.node_birth()
        parent = self.node_parent()
        out = np.zeros(self.n_nodes)
        has = parent >= 0
        out[has] = birth[parent[has]] - birth[has]
        return out

    def check(self) -> None:
        counts = self.lineage_counts
        if self.n_events == 0 or counts[-1] != 1:
            raise IntegrityError("history does not end with a single lineage")
        if np.any(np.diff(self.event_times) < 0) or np.any(self.event_times < 0):
            raise IntegrityError("event times must be nondecreasing and nonnegative")
        seen = np.zeros(self.n_nodes, dtype=bool)
        for e, kids in enumerate(self.event_children):
            if len(kids) < 2 or max(kids) >= self.n + e or seen[list(kids)].any():
                raise IntegrityError(f"event {e} merges invalid lineages {kids}")
            seen[list(kids)] = True


def _new_history(n, times, children, scale="theta", gamma=None) -> MergerHistory:
    return MergerHistory(n, np.asarray(times, dtype=float), tuple(children), scale, gamma)


def simulate_kingman(n: int, rng: np.random.Generator) -> MergerHistory:
    """Kingman coalescent started from n lineages, in homogeneous time."""
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    b = np.arange(n, 1, -1, dtype=float)
    times = np.cumsum(rng.exponential(1.0, n - 1) / (b * (b - 1.0) / 2.0))
    u = rng.random((n - 1, 2))
    active = list(range(n))
    children = []
    for e in range(n - 1):
        m = n - e
        i = int(u[e, 0] * m)
        j = int(u[e, 1] * (m - 1))
        if j >= i:
            j += 1
        children.append((active[i], active[j]))
        # remove i and j, append the new lineage
        for idx in sorted((i, j), reverse=True):
            active[idx] = active[-1]
            active.pop()
        active.append(n + e)
    return _new_history(n, times, children)


def simulate_lambda(n: int, measure: LambdaMeasure, rng: np.random.Generator) -> MergerHistory:
    """Lambda-coalescent from n lineages: exponential holding times at the total
    rate, merger size drawn proportionally to ``C(b,k) lambda_{b,k}``."""
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    if measure.kind == "kingman":
        return simulate_kingman(n, rng)
    active = np.arange(n, dtype=np.int64)
    b = n
    t = 0.0
    times, children = [], []
    next_id = n
    weights = _WeightTable(measure, n)
    while b > 1:
        logw = weights(b)
        top = logw.max()
        if not np.isfinite(top):
            raise ModelError(f"total merger rate vanishes with {b} lineages")
        w = np.exp(logw - top)
        total = float(w.sum())
        t += rng.exponential(1.0) / (total * math.exp(top))
        k = 2 + int(np.searchsorted(np.cumsum(w), rng.random() * total, side="right"))
        k = min(k, b)
        pick = rng.choice(b, size=k, replace=False)
        children.append(tuple(int(x) for x in active[pick]))
        keep = np.ones(b, dtype=bool)
        keep[pick] = False
        active = np.append(active[keep], next_id)
        next_id += 1
        b = len(active)
        times.append(t)
    return _new_history(n, times, children)


def psi_map(t, gamma: float):
    """Homogeneous time -> growing-population time: (1-a)^-(1-a) t^(1-a), a = gamma/(1+gamma)."""
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma!r}")
    alpha = gamma / (1.0 + gamma)
    return (1.0 - alpha) ** (-(1.0 - alpha)) * np.power(t, 1.0 - alpha)


def psi_inverse(s, gamma: float):
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma!r}")
    alpha = gamma / (1.0 + gamma)
    return (1.0 - alpha) * np.power(s, 1.0 / (1.0 - alpha))


def time_change(history: MergerHistory, gamma: float) -> MergerHistory:
    """Run a homogeneous-time history through the growing-population clock."""
    if history.time_scale != "theta":
        raise ConfigurationError("time_change expects a homogeneous-time history")
    times = psi_map(np.asarray(history.event_times), gamma)
    return _new_history(history.n, times, history.event_children, "psi", float(gamma))


def total_length(history: MergerHistory) -> float:
    """Total branch length: sum over intervals of lineage count times duration."""
    return math.fsum(history.branch_lengths().tolist())


def default_k_min(n: int) -> int:
    return math.ceil(n ** 0.75) + 1


def total_length_above(history: MergerHistory, k_min: Optional[int] = None) -> float:
    """Branch length accumulated while at least ``k_min`` lineages remain."""
    k_min = default_k_min(history.n) if k_min is None else int(k_min)
    counts_before = np.concatenate(([history.n], history.lineage_counts[:-1]))
    starts = np.concatenate(([0.0], history.event_times[:-1]))
    dur = history.event_times - starts
    keep = counts_before >= k_min
    return math.fsum((counts_before[keep] * dur[keep]).tolist())


@dataclass(frozen=True)
class MutationSet:
    """Mutation records ``(lineage, time)``; ``theta`` is the per-lineage rate."""

    lineage: np.ndarray
    time: np.ndarray
    theta: float

    def __len__(self) -> int:
        return len(self.lineage)

    def check(self, history: MergerHistory) -> None:
        if len(self.lineage) != len(self.time):
            raise IntegrityError("lineage and time arrays differ in length")
        if len(self) == 0:
            return
        if self.lineage.min() < 0 or self.lineage.max() >= history.root:
            raise IntegrityError("mutation on an unknown lineage or above the root")
        birth = history.node_birth()
        parent = history.node_parent()
        lo = birth[self.lineage]
        hi = birth[parent[self.lineage]]
        if np.any(self.time < lo) or np.any(self.time > hi):
            raise IntegrityError("mutation time outside its lineage's lifetime")


def drop_mutations(history: MergerHistory, theta: float, rng: np.random.Generator) -> MutationSet:
    """Rate-theta Poisson marks along every branch below the root."""
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta!r}")
    lengths = history.branch_lengths()
    counts = rng.poisson(theta * lengths)
    lineage = np.repeat(np.arange(history.n_nodes), counts)
    birth = history.node_birth()
    time = birth[lineage] + rng.random(len(lineage)) * lengths[lineage]
    return MutationSet(lineage, time, float(theta))


def map_mutations(mutations: MutationSet, fn) -> MutationSet:
    """Apply a time map to every mutation record."""
    return MutationSet(mutations.lineage.copy(), np.asarray(fn(mutations.time), dtype=float),
                       mutations.theta)


def allelic_partition(history: MergerHistory, mutations: MutationSet) -> BlockSpectrum:
    """Infinite-alleles partition: leaves share a block iff they carry the same
    most recent mutation (no mutation at all means the ancestral type)."""
    if len(mutations) and (mutations.lineage.max() >= history.root
                           or mutations.lineage.min() < 0):
        raise IntegrityError("mutation on an unknown lineage or above the root")
    n_nodes = history.n_nodes
    mutated = np.zeros(n_nodes, dtype=bool)
    mutated[mutations.lineage] = True
    parent = history.node_parent()
    label = np.empty(n_nodes, dtype=np.int64)
    label[history.root] = history.root
    # parents always have larger ids, so a descending sweep sees them first
    for v in range(n_nodes - 2, -1, -1):
        label[v] = v if mutated[v] else label[parent[v]]
    _, sizes = np.unique(label[:history.n], return_counts=True)
    return BlockSpectrum.from_sizes(sizes)


def parse_model(spec: str):
    """``kingman``, ``uniform``, ``beta:A`` or ``growpop:G`` -> (measure, gamma)."""
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    if name == "kingman":
        return LambdaMeasure.kingman(), None
    if name in ("uniform", "uniform01"):
        return LambdaMeasure.uniform01(), None
    if name == "beta":
        if not arg:
            raise ConfigurationError("beta model needs a parameter, e.g. beta:0.5")
        return LambdaMeasure.beta(float(arg)), None
    if name == "growpop":
        if not arg:
            raise ConfigurationError("growpop model needs a parameter, e.g. growpop:1")
        g = float(arg)
        if not g > 0:
            raise DomainError(f"gamma must be positive, got {g}")
        return LambdaMeasure.kingman(), g
    raise ConfigurationError(f"unknown coalescent model {spec!r}")


def simulate(model: str, n: int, rng: np.random.Generator) -> MergerHistory:
    """Simulate the genealogy named by a model string."""
    measure, gamma = parse_model(model)
    hist = simulate_lambda(n, measure, rng)
    return time_change(hist, gamma) if gamma is not None else hist
