"""Limit constants, scalings and exact laws used as verification targets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .freq import SlowlyVaryingFn
from .occupancy import BlockSpectrum

POTTER_LAMBDAS = (1.0, 2.0, 10.0, 100.0)


def gamma_fn(x: float) -> float:
    """Gamma function on the positive axis (relative error near machine precision)."""
    x = float(x)
    if not x > 0:
        raise DomainError(f"gamma_fn needs x > 0, got {x!r}")
    return math.gamma(x)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def _check_r(r: int) -> int:
    if int(r) != r or r < 1:
        raise DomainError(f"r must be a positive integer, got {r!r}")
    return int(r)


def karlin_constants(alpha: float, r: int) -> tuple[float, float]:
    """``(Gamma(1-alpha), alpha Gamma(r-alpha) / r!)``."""
    alpha = _check_alpha(alpha)
    r = _check_r(r)
    c_knr = math.exp(math.log(alpha) + math.lgamma(r - alpha) - math.lgamma(r + 1))
    return gamma_fn(1.0 - alpha), c_knr


def afs_constant(alpha: float, r: int) -> float:
    """Limiting fraction of blocks of size r: alpha Gamma(r-alpha) / (r! Gamma(1-alpha))."""
    c_kn, c_knr = karlin_constants(alpha, r)
    return c_knr / c_kn


@dataclass(frozen=True)
class Scaling:
    """Normalizer ``factor * n^power / (log n)^log_power``."""

    power: float = 1.0
    log_power: float = 0.0
    factor: float = 1.0

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        out = self.factor * n ** self.power
        if self.log_power:
            out = out / np.log(n) ** self.log_power
        return out if out.ndim else float(out)

    @property
    def label(self) -> str:
        parts = []
        if self.factor != 1.0:
            parts.append(f"{self.factor:.17g}")
        if self.power == 0.0:
            parts.append("1")
        elif self.power == 1.0:
            parts.append("n")
        else:
            parts.append(f"n^{self.power:g}")
        text = "*".join(parts)
        if self.log_power == 1.0:
            text += "/log(n)"
        elif self.log_power:
            text += f"/log(n)^{self.log_power:g}"
        return text


ONE = Scaling(power=0.0)


@dataclass(frozen=True)
class LimitTarget:
    """``X_n / scaling(n) -> constant`` for one statistic of one model.

    ``statistic`` is one of ``K_n``, ``K_nr``, ``ratio`` (K_{n,r}/K_n),
    ``L_n`` (total branch length) or ``S_n`` (mutation count).
    """

    model: str
    statistic: str
    scaling: Scaling
    constant: float
    r: Optional[int] = None
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.constant > 0:
            raise DomainError(f"limit constant must be positive, got {self.constant!r}")
        if self.statistic in ("K_nr", "ratio") and self.r is None:
            raise ConfigurationError(f"statistic {self.statistic} needs r")

    @property
    def name(self) -> str:
        stat = self.statistic if self.r is None else f"{self.statistic}[r={self.r}]"
        return f"{self.model}:{stat}"

    def normalized(self, x, n):
        return np.asarray(x, dtype=float) / (self.scaling(n) * self.constant)


def powerlaw_targets(alpha: float, r: Optional[int] = None, ell: float = 1.0,
                     statistic: Optional[str] = None) -> LimitTarget:
    """Karlin limits for a power-law paintbox whose slowly varying part is the constant ``ell``."""
    alpha = _check_alpha(alpha)
    scaling = Scaling(power=alpha, factor=float(ell))
    params = {"alpha": alpha, "ell": float(ell)}
    if statistic == "ratio":
        return LimitTarget("powerlaw", "ratio", ONE, afs_constant(alpha, r), r, params)
    if r is None:
        return LimitTarget("powerlaw", "K_n", scaling, karlin_constants(alpha, 1)[0], None, params)
    return LimitTarget("powerlaw", "K_nr", scaling, karlin_constants(alpha, r)[1], _check_r(r), params)


def loglaw_targets(r: int) -> LimitTarget:
    """r = 1: K_{n,1} (and K_n) over n/log n -> 1; r >= 2: K_{n,r} over n/(log n)^2 -> 1/(r(r-1))."""
    r = _check_r(r)
    if r == 1:
        return LimitTarget("loglaw", "K_nr", Scaling(log_power=1.0), 1.0, 1)
    return LimitTarget("loglaw", "K_nr", Scaling(log_power=2.0), 1.0 / (r * (r - 1)), r)


def loglaw_kn_target() -> LimitTarget:
    return LimitTarget("loglaw", "K_n", Scaling(log_power=1.0), 1.0)


def growpop_length_constant(alpha: float) -> float:
    """2^(1-a) (1-a)^a pi / sin(pi a): limit of L_n / n^a."""
    alpha = _check_alpha(alpha)
    return 2.0 ** (1.0 - alpha) * (1.0 - alpha) ** alpha * math.pi / math.sin(math.pi * alpha)


def coalescent_targets(model: str, theta: float, alpha_or_gamma: Optional[float] = None,
                       r: Optional[int] = None, statistic: Optional[str] = None) -> LimitTarget:
    """Limit target for the allelic partition of a coalescent with mutation.

    ``model`` is ``beta`` (parameter alpha), ``uniform`` or ``growpop``
    (parameter gamma, alpha = gamma/(1+gamma)).  ``statistic`` defaults to
    ``K_n`` when r is None and ``K_nr`` otherwise; ``ratio`` gives K_{n,r}/K_n,
    and for growpop ``L_n`` and ``S_n`` are also available.
    """
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta!r}")
    theta = float(theta)
    stat = statistic or ("K_n" if r is None else "K_nr")
    if r is not None:
        r = _check_r(r)

    if model == "uniform":
        params = {"theta": theta}
        if stat == "K_n":
            return LimitTarget("uniform", "K_n", Scaling(log_power=1.0), theta, None, params)
        if stat == "K_nr":
            if r == 1:
                return LimitTarget("uniform", "K_nr", Scaling(log_power=1.0), theta, 1, params)
            # index read as r
            return LimitTarget("uniform", "K_nr", Scaling(log_power=2.0),
                               theta / (r * (r - 1)), r, params)
        raise ConfigurationError(f"statistic {stat!r} not available for the uniform model")

    if alpha_or_gamma is None:
        raise ConfigurationError(f"model {model!r} needs a parameter")
    if model == "beta":
        alpha = _check_alpha(alpha_or_gamma)
        params = {"alpha": alpha, "theta": theta}
        scaling = Scaling(power=alpha)
        if stat == "K_n":
            c = theta * (2 - alpha) * (1 - alpha) * gamma_fn(2 - alpha) / alpha
            return LimitTarget("beta", "K_n", scaling, c, None, params)
        if stat == "K_nr":
            c = theta * (2 - alpha) * (1 - alpha) ** 2 * math.exp(
                math.lgamma(r - alpha) - math.lgamma(r + 1))
            return LimitTarget("beta", "K_nr", scaling, c, r, params)
        if stat == "ratio":
            return LimitTarget("beta", "ratio", ONE, afs_constant(alpha, r), r, params)
        raise ConfigurationError(f"statistic {stat!r} not available for the beta model")

    if model == "growpop":
        gamma = float(alpha_or_gamma)
        if not gamma > 0:
            raise DomainError(f"gamma must be positive, got {gamma!r}")
        alpha = gamma / (1.0 + gamma)
        params = {"gamma": gamma, "alpha": alpha, "theta": theta}
        scaling = Scaling(power=alpha)
        c_len = growpop_length_constant(alpha)
        if stat == "L_n":
            return LimitTarget("growpop", "L_n", scaling, c_len, None, params)
        if stat in ("S_n", "K_n"):
            return LimitTarget("growpop", stat, scaling, theta * c_len, None, params)
        if stat == "K_nr":
            return LimitTarget("growpop", "K_nr", scaling, theta * c_len * afs_constant(alpha, r),
                               r, params)
        if stat == "ratio":
            return LimitTarget("growpop", "ratio", ONE, afs_constant(alpha, r), r, params)
        raise ConfigurationError(f"statistic {stat!r} not available for the growpop model")

    raise ConfigurationError(f"unknown coalescent model {model!r}")


def _spectrum_items(spectrum) -> dict:
    if isinstance(spectrum, BlockSpectrum):
        return dict(spectrum.counts)
    return {int(r): int(a) for r, a in dict(spectrum).items() if int(a)}


def esf_log_pmf(n: int, theta2: float, spectrum) -> float:
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not theta2 > 0:
        raise DomainError(f"theta2 must be positive, got {theta2!r}")
    a = _spectrum_items(spectrum)
    if any(r < 1 or c < 0 for r, c in a.items()) or sum(r * c for r, c in a.items()) != n:
        raise DomainError(f"spectrum {a} is not a partition of {n}")
    # rising factorial theta2 (theta2 + 1) ... (theta2 + n - 1)
    out = math.lgamma(n + 1) - (math.lgamma(theta2 + n) - math.lgamma(theta2))
    for j, c in a.items():
        out += c * (math.log(theta2) - math.log(j)) - math.lgamma(c + 1)
    return out


def esf_pmf(n: int, theta2: float, spectrum) -> float:
    """Ewens sampling formula probability of the block-size counts ``spectrum``."""
    return math.exp(esf_log_pmf(n, theta2, spectrum))


def integer_partitions(n: int, largest: Optional[int] = None) -> Iterator[dict]:
    """All partitions of n as ``{part size: count}`` maps."""
    largest = n if largest is None else largest
    if n == 0:
        yield {}
        return
    for p in range(min(n, largest), 0, -1):
        for rest in integer_partitions(n - p, p):
            d = dict(rest)
            d[p] = d.get(p, 0) + 1
            yield d


def crp_sample(n: int, theta2: float, rng: np.random.Generator) -> BlockSpectrum:
    """Chinese restaurant process: customer m+1 sits with customer uniformly
    chosen among the first m with probability m/(m+theta2), else at a new table."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not theta2 > 0:
        raise DomainError(f"theta2 must be positive, got {theta2!r}")
    u = rng.random(n)
    pick = rng.random(n)
    table = np.empty(n, dtype=np.int64)
    n_tables = 0
    for m in range(n):
        if u[m] * (m + theta2) < theta2:
            table[m] = n_tables
            n_tables += 1
        else:
            table[m] = table[int(pick[m] * m)]
    sizes = np.bincount(table[:n], minlength=n_tables)
    return BlockSpectrum.from_sizes(sizes)


@dataclass
class PotterReport:
    delta: float
    x0: Optional[float]
    lambdas: tuple
    n_grid: int
    # (x, lambda, ratio) of the last violation on the grid, if any
    last_violation: Optional[tuple] = None

    @property
    def holds(self) -> bool:
        return self.x0 is not None


def potter_check(ell, delta: float, grid: Sequence[float],
                 lambdas: Sequence[float] = POTTER_LAMBDAS) -> PotterReport:
    """Smallest grid point beyond which
    ``1/((1+d) l^d) <= ell(l x)/ell(x) <= (1+d) l^d`` holds for every tested l."""
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta!r}")
    grid = np.asarray(grid, dtype=float)
    if len(grid) == 0 or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be nonempty and strictly increasing")
    f = ell.eval if isinstance(ell, SlowlyVaryingFn) else ell
    ok = np.ones(len(grid), dtype=bool)
    last = None
    for i, x in enumerate(grid):
        base = f(x)
        for lam in lambdas:
            ratio = f(lam * x) / base
            bound = (1.0 + delta) * lam ** delta
            if not (1.0 / bound <= ratio <= bound):
                ok[i] = False
                last = (float(x), float(lam), float(ratio))
    bad = np.nonzero(~ok)[0]
    if len(bad) == 0:
        x0 = float(grid[0])
    elif bad[-1] == len(grid) - 1:
        x0 = None
    else:
        x0 = float(grid[bad[-1] + 1])
    return PotterReport(float(delta), x0, tuple(lambdas), len(grid), last)
