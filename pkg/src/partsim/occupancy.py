"""Paintbox sampling and the Poissonization functionals.

Sampling never materialises boxes: fixed-n draws go through a two-stage
(group, then box index) scheme, Poissonized draws use the fact that box
occupancies are independent Poisson variables, so each group's occupancy
histogram is a multinomial over occupancy levels.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln, pdtr, pdtrc, xlogy

from .errors import CapacityError, DomainError
from .freq import INT64_SAFE, FrequencySequence

FIXED_N_BUDGET = 50_000_000
EXPECTED_TAIL_CUTOFF = 1e-12
# groups with at most this many boxes are sampled box by box
EXPAND_LIMIT = 256
NARROW_LEVELS = 40


@dataclass
class BlockSpectrum:
    """Block-size counts ``r -> K_{n,r}`` of a sampled partition restriction."""

    sample_size: int
    counts: dict = field(default_factory=dict)
    singleton_dust: int = 0

    def __post_init__(self):
        self.counts = {int(r): int(c) for r, c in self.counts.items() if int(c) != 0}

    @property
    def n_blocks(self) -> int:
        return sum(self.counts.values())

    def k(self, r: int) -> int:
        return self.counts.get(r, 0)

    def check(self) -> bool:
        total = sum(r * c for r, c in self.counts.items())
        if total != self.sample_size:
            return False
        if self.sample_size >= 1 and not (1 <= self.n_blocks <= self.sample_size):
            return False
        return True

    @classmethod
    def from_sizes(cls, sizes, singleton_dust: int = 0) -> "BlockSpectrum":
        sizes = np.asarray(sizes, dtype=np.int64)
        sizes = sizes[sizes > 0]
        r, c = np.unique(sizes, return_counts=True)
        counts = dict(zip(r.tolist(), c.tolist()))
        if singleton_dust:
            counts[1] = counts.get(1, 0) + singleton_dust
        return cls(int(sizes.sum()) + singleton_dust, counts, singleton_dust)


def sample_fixed(seq: FrequencySequence, n: int, rng: np.random.Generator) -> BlockSpectrum:
    """Paintbox partition of {1..n}: labels drawn i.i.d. from the sequence, dust -> singletons."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if n > FIXED_N_BUDGET:
        raise CapacityError(f"n={n} exceeds the fixed-n budget; use sample_poissonized")
    probs = np.append(seq.values * seq.counts_f, seq.dust)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    per_group = rng.multinomial(n, probs)
    n_dust = int(per_group[-1])
    hit = np.nonzero(per_group[:-1])[0]
    single = np.array([int(seq.counts[i]) == 1 for i in hit], dtype=bool)
    sizes = [per_group[hit[single]]]
    for i in hit[~single]:
        c = int(per_group[i])
        m = int(seq.counts[i])
        if m < INT64_SAFE:
            boxes = rng.integers(0, m, size=c)
        else:
            # 64-bit box index; collisions inside a group of > 2^62 boxes are ignored
            boxes = rng.integers(0, INT64_SAFE, size=c)
        _, occ = np.unique(boxes, return_counts=True)
        sizes.append(occ)
    sizes = np.concatenate(sizes) if sizes else np.zeros(0, dtype=np.int64)
    return BlockSpectrum.from_sizes(sizes, singleton_dust=n_dust)


def _log_pmf(r, lam):
    return r * np.log(lam) - lam - gammaln(r + 1.0)


def _pmf(r, lam):
    return np.exp(xlogy(r, lam) - lam - gammaln(np.asarray(r, dtype=float) + 1.0))


def _occupancy_window(lam, log_m):
    """Levels [lo, hi] outside which a group's expected box count is below the cutoff.

    Tail masses are bounded by geometric series of the pmf, so the window is
    valid for arbitrarily small cutoffs (where quantile functions give up).
    """
    lam = np.asarray(lam, dtype=float)
    log_m = np.asarray(log_m, dtype=float)
    log_cut = math.log(EXPECTED_TAIL_CUTOFF)
    spread = 10.0 + 20.0 * np.sqrt(lam) + 2.0 * (log_m + 40.0)

    def above_ok(r):  # bound on log(m * P(X > r)), valid for r + 2 > lam
        return log_m + _log_pmf(r + 1.0, lam) - np.log1p(-lam / (r + 2.0)) < log_cut

    a = np.floor(lam) + 1.0
    b = a + spread
    for _ in range(80):
        mid = np.floor(0.5 * (a + b))
        ok = above_ok(mid)
        b = np.where(ok, mid, b)
        a = np.where(ok, a, mid)
        if np.all(b - a <= 1):
            break
    hi = b.astype(np.int64)

    def below_ok(r):  # bound on log(m * P(X < r)), valid for r < lam
        r1 = r - 1.0
        return log_m + _log_pmf(r1, lam) - np.log1p(-r1 / lam) < log_cut

    lo = np.zeros_like(hi)
    deep = lam > 50
    if deep.any():
        ld, md = lam[deep], log_m[deep]
        a = np.ones_like(ld)
        b = np.floor(ld)
        for _ in range(80):
            mid = np.floor(0.5 * (a + b))
            r1 = mid - 1.0
            ok = md + _log_pmf(r1, ld) - np.log1p(-r1 / ld) < log_cut
            a = np.where(ok, mid, a)
            b = np.where(ok, b, mid)
            if np.all(b - a <= 1):
                break
        lo[deep] = a.astype(np.int64)
    return lo, hi


POISSON_NORMAL_SWITCH = 1e8
MAX_BOX_MEAN = 1e17


def _poisson(rng, lam, size=None):
    """Poisson draws; rounded normal above ``POISSON_NORMAL_SWITCH`` where numpy overflows."""
    lam = np.asarray(lam, dtype=float)
    if size is not None:
        lam = np.broadcast_to(lam, size)
    if lam.size == 0 or lam.max() <= POISSON_NORMAL_SWITCH:
        return rng.poisson(lam)
    big = lam > POISSON_NORMAL_SWITCH
    out = np.zeros(lam.shape, dtype=np.int64)
    out[~big] = rng.poisson(lam[~big])
    lb = lam[big]
    out[big] = np.maximum(0, np.rint(rng.normal(lb, np.sqrt(lb)))).astype(np.int64)
    return out


BINOMIAL_POISSON_SWITCH = 1e-10


def _binomial(rng, n, p):
    """Binomial draws that stay correct for tiny p.

    numpy returns 0 once p drops below about 1e-16; there Poisson(np) is
    used instead (total variation distance at most p).
    """
    n = np.asarray(n, dtype=np.int64)
    p = np.broadcast_to(np.asarray(p, dtype=float), n.shape)
    tiny = p < BINOMIAL_POISSON_SWITCH
    if not tiny.any():
        return rng.binomial(n, p)
    out = np.zeros(n.shape, dtype=np.int64)
    out[~tiny] = rng.binomial(n[~tiny], p[~tiny])
    out[tiny] = np.minimum(n[tiny], rng.poisson(n[tiny] * p[tiny]))
    return out


def _multinomial(rng, m: int, cells: np.ndarray) -> np.ndarray:
    """Multinomial draw that does not lose cells with tiny probability.

    Cells below ``BINOMIAL_POISSON_SWITCH`` are drawn as independent
    Poisson(m p) counts (error of order p); the rest go to numpy's
    multinomial, smallest first so the dominant cell takes the remainder.
    """
    cells = np.asarray(cells, dtype=float)
    out = np.zeros(len(cells), dtype=np.int64)
    tiny = cells < BINOMIAL_POISSON_SWITCH
    if tiny.any():
        out[tiny] = rng.poisson(float(m) * cells[tiny])
    remaining = max(0, int(m) - int(out.sum()))
    idx = np.nonzero(~tiny)[0]
    if len(idx) == 0:
        return out
    idx = idx[np.argsort(cells[idx], kind="stable")]
    p = cells[idx] / cells[idx].sum()
    out[idx] = rng.multinomial(remaining, p)
    return out


def _truncated_poisson(rng, lam, lo, hi, size, above: bool):
    """Draw ``size`` Poisson(lam) values conditioned on > hi (above) or < lo."""
    out = []
    while len(out) < size:
        x = _poisson(rng, lam, size=64)
        x = x[x > hi] if above else x[x < lo]
        out.extend(x.tolist())
    return out[:size]


def _huge_group_counts(rng, m: int, cells: np.ndarray, skip: int) -> np.ndarray:
    """Cell counts for a multinomial with m > 2^62 trials, cell by cell.

    The first ``skip`` cells (empty boxes) are not drawn.  Normal
    approximation where a cell's variance exceeds 1e6, Poisson otherwise;
    the correlation between cells is ignored.
    """
    mf = float(m)
    out = np.zeros(len(cells), dtype=object)
    for i in range(skip, len(cells)):
        p = float(cells[i])
        mean = mf * p
        var = mean * (1.0 - p)
        if var > 1e6:
            out[i] = int(max(0.0, round(rng.normal(mean, math.sqrt(var)))))
        else:
            out[i] = int(_poisson(rng, mean))
    return out


def _narrow_groups(rng, lam, m, hmax, hist, singles):
    """Occupancy histograms for many groups at once via sequential conditional binomials."""
    levels = np.arange(hmax + 1, dtype=float)[:, None]
    pmf = _pmf(levels, lam[None, :])
    surv = np.vstack([np.ones_like(lam), pdtrc(levels[:-1], lam[None, :])])
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.clip(np.where(surv > 0, pmf / surv, 1.0), 0.0, 1.0)
    # occupied boxes first: e^-lam rounds to 1 for lam below ~1e-16
    remaining = _binomial(rng, m, np.clip(-np.expm1(-lam), 0.0, 1.0))
    for r in range(1, hmax + 1):
        if not remaining.any():
            return
        n_r = _binomial(rng, remaining, cond[r])
        remaining -= n_r
        hist[r] += int(n_r.sum())
    for i in np.nonzero(remaining)[0]:
        singles.append(np.array(
            _truncated_poisson(rng, lam[i], 0, hmax, int(remaining[i]), above=True)))


def sample_poissonized(seq: FrequencySequence, t: float, rng: np.random.Generator,
                       part: str = "all") -> BlockSpectrum:
    """Spectrum of the partition restricted to {1..N(t)}, N(t) ~ Poisson(t)."""
    if not t > 0:
        raise DomainError(f"t must be positive, got {t!r}")
    values, counts = seq.select(part)
    dust = seq.part_weights(part)[1]
    lam = t * np.asarray(values, dtype=float)
    counts_f = seq.select_float(part)
    if len(lam) and lam.max() > MAX_BOX_MEAN:
        raise CapacityError(f"t={t:g} puts more than {MAX_BOX_MEAN:g} points in one box")

    hist = Counter()
    singles = []
    small = counts_f <= EXPAND_LIMIT
    if small.any():
        reps = counts_f[small].astype(np.int64)
        singles.append(_poisson(rng, np.repeat(lam[small], reps)))

    big = np.nonzero(~small)[0]
    if len(big):
        lam_b, m_b = lam[big], counts_f[big]
        log_m = np.array([math.log(counts[i]) for i in big])
        lo, hi = _occupancy_window(lam_b, log_m)
        narrow = (lo == 0) & (hi <= NARROW_LEVELS) & (m_b < INT64_SAFE)
        if narrow.any():
            idx = big[narrow]
            m_int = np.array([counts[i] for i in idx], dtype=np.int64)
            _narrow_groups(rng, lam[idx], m_int, int(hi[narrow].max()), hist, singles)
        for j in np.nonzero(~narrow)[0]:
            i = big[j]
            _wide_group(rng, float(lam[i]), counts[i], int(lo[j]), int(hi[j]), hist, singles)

    if singles:
        s = np.concatenate(singles)
        s = s[s > 0]
        rr, cc = np.unique(s, return_counts=True)
        for level, c in zip(rr.tolist(), cc.tolist()):
            hist[level] += c
    n_dust = int(_poisson(rng, t * dust)) if dust > 0 else 0
    if n_dust:
        hist[1] += n_dust
    size = sum(r * c for r, c in hist.items())
    return BlockSpectrum(size, dict(hist), n_dust)


def _wide_group(rng, lam, m, lo, hi, hist, singles):
    if m <= 4 * (hi - lo + 2) and m < 10**6:
        singles.append(_poisson(rng, lam, size=m))
        return
    r = np.arange(lo, hi + 1)
    pmf = _pmf(r, lam)
    p_below = float(pdtr(lo - 1, lam)) if lo > 0 else 0.0
    p_above = float(pdtrc(hi, lam))
    cells = np.clip(np.concatenate(([p_below], pmf, [p_above])), 0.0, None)
    cells /= cells.sum()
    if m < INT64_SAFE:
        draw = _multinomial(rng, m, cells)
    elif lo == 0:
        draw = _huge_group_counts(rng, m, cells, skip=2)
    else:
        raise CapacityError("group of more than 2^62 boxes with every box occupied")
    for level, c in zip(r.tolist(), draw[1:-1].tolist()):
        if level > 0 and c:
            hist[level] += int(c)
    if int(draw[0]):
        singles.append(np.array(_truncated_poisson(rng, lam, lo, hi, int(draw[0]), above=False)))
    if int(draw[-1]):
        singles.append(np.array(_truncated_poisson(rng, lam, lo, hi, int(draw[-1]), above=True)))


def phi(seq: FrequencySequence, t: float, part: str = "all") -> float:
    """Poissonized mean block count: sum m (1 - e^{-t v}) + t * dust."""
    if not t > 0:
        raise DomainError(f"t must be positive, got {t!r}")
    w, dust = seq.part_weights(part)
    occupied = -np.expm1(-t * seq.values)
    return math.fsum((w * occupied).tolist()) + t * dust


def phi_r(seq: FrequencySequence, t: float, r: int, part: str = "all") -> float:
    """Poissonized mean number of size-r blocks: (t^r / r!) sum m v^r e^{-t v}."""
    if not t > 0:
        raise DomainError(f"t must be positive, got {t!r}")
    if r < 1:
        raise DomainError(f"r must be >= 1, got {r}")
    w, dust = seq.part_weights(part)
    lam = t * seq.values
    keep = w > 0
    logterm = np.log(w[keep]) + r * np.log(lam[keep]) - lam[keep] - gammaln(r + 1)
    total = math.fsum(np.exp(logterm).tolist())
    if r == 1:
        total += t * dust
    return total


def phi_r_all(seq: FrequencySequence, t: float, r_max: int, part: str = "all") -> np.ndarray:
    """Vector ``[Phi_1(t), .., Phi_{r_max}(t)]``."""
    return np.array([phi_r(seq, t, r, part) for r in range(1, r_max + 1)])


def exact_mean_spectrum(seq: FrequencySequence, n: int, r_max: Optional[int] = None) -> dict:
    """Fixed-n expectations ``E[K_{n,r}]`` for r <= r_max and ``E[K_n]`` (key ``"K_n"``)."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    r_max = min(n, 20) if r_max is None else min(r_max, n)
    v = seq.values
    w = seq.counts_f
    log_v = np.log(v)
    with np.errstate(divide="ignore"):
        log_1mv = np.log1p(-v)
    out = {}
    lg_n = gammaln(n + 1)
    for r in range(1, r_max + 1):
        log_binom = lg_n - gammaln(r + 1) - gammaln(n - r + 1)
        with np.errstate(invalid="ignore"):
            tail = np.where(n - r > 0, (n - r) * log_1mv, 0.0)
        term = np.exp(np.log(w) + log_binom + r * log_v + tail)
        out[r] = math.fsum(np.nan_to_num(term).tolist()) + (n * seq.dust if r == 1 else 0.0)
    with np.errstate(invalid="ignore"):
        occupied = -np.expm1(n * log_1mv)
    occupied = np.where(v >= 1.0, 1.0, occupied)
    out["K_n"] = math.fsum((w * occupied).tolist()) + n * seq.dust
    return out
