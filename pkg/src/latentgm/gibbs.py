"""Gibbs sampling of a multivariate normal restricted to a box.

Each coordinate is redrawn in turn from its univariate conditional, truncated
to the coordinate's interval, by inverting the normal CDF on the interval's
probability mass. Coordinates whose interval is a single point are never
sampled.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .data import CellConstraint
from .numerics import ndtr, ndtri, regression_weights

log = logging.getLogger(__name__)

# Sub-seed streams: every random draw in the package comes from
# SeedSequence(master_seed, spawn_key=(STREAM, ...)).
STREAM_EM = 1
STREAM_PREDICT = 2
STREAM_IMPUTE = 3
STREAM_FOLDS = 4
STREAM_SIMULATE = 5
STREAM_INIT = 6

_TINY = 5e-324
_ONE_MINUS = 1.0 - 2.0 ** -53


def derive_seed(seed, *key):
    """64-bit integer seed for ``key`` under a master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def substream(seed, *key):
    """Independent generator for ``key`` under a master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class GibbsConfig:
    """Sweep budget and seeding of one sampler run.

    ``thin`` sweeps separate consecutive retained states, so a run performs
    ``burn_in + keep * thin`` sweeps in total.
    """

    burn_in: int = 100
    keep: int = 500
    seed: int = 0
    init: object = "midpoint"
    thin: int = 1

    def __post_init__(self):
        if self.keep < 1:
            raise ValueError("GibbsConfig.keep must be >= 1")
        if self.burn_in < 0 or self.thin < 1:
            raise ValueError("GibbsConfig.burn_in must be >= 0 and thin >= 1")

    @property
    def n_sweeps(self):
        return self.burn_in + self.keep * self.thin


@dataclass
class MomentAccumulator:
    """Running first and second moments of sampled states."""

    p: int
    first: np.ndarray = field(init=False)
    second: np.ndarray = field(init=False)
    count: int = 0

    def __post_init__(self):
        self.first = np.zeros(self.p)
        self.second = np.zeros((self.p, self.p))

    def add(self, w):
        w = np.asarray(w, dtype=float)
        self.count += 1
        self.first += (w - self.first) / self.count
        self.second += (np.outer(w, w) - self.second) / self.count


@njit(cache=True, nogil=True, fastmath={"reassoc", "contract"})
def _update_coordinate(w, i, lo, hi, base, mu, weights, sd, u):
    # w, mu, weights and sd are restricted to the free coordinates of the row;
    # base carries the contribution of the fixed ones.
    m = base[i]
    for k in range(w.shape[0]):
        m += weights[i, k] * (w[k] - mu[k])
    s = sd[i]
    a = (lo - m) / s
    b = (hi - m) / s
    flip = a > 0.0
    if flip:
        # Sample the mirrored interval so both masses sit in the lower tail.
        a, b = -b, -a
    d = ndtr(a)
    e = ndtr(b)
    if e <= d:
        # No representable mass: take the finite endpoint closest to the mean.
        if np.isfinite(lo) and (not np.isfinite(hi) or abs(lo - m) <= abs(hi - m)):
            w[i] = lo
        else:
            w[i] = hi
        return 1
    arg = d + (e - d) * u
    arg = min(max(arg, _TINY), _ONE_MINUS)
    z = ndtri(arg)
    z = min(max(z, a), b)
    x = m - s * z if flip else m + s * z
    w[i] = min(max(x, lo), hi)
    return 0


@njit(cache=True, nogil=True)
def _sweep(w, lo, hi, base, mu, weights, sd, free, u):
    clamped = 0
    for i in range(w.shape[0]):
        clamped += _update_coordinate(w, i, lo[i], hi[i], base, mu, weights, sd, u[free[i]])
    return clamped


@njit(cache=True, nogil=True, fastmath={"reassoc", "contract"})
def _run_chain(w, lo, hi, base, mu, weights, sd, free, uniforms, burn_in, thin,
               sum_w, sum_ww, trace):
    """Run one chain over the free coordinates in place.

    Returns (clamp count, first sweep leaving the constraints or -1).
    """
    clamped = 0
    retained = 0
    nf = w.shape[0]
    for t in range(uniforms.shape[0]):
        clamped += _sweep(w, lo, hi, base, mu, weights, sd, free, uniforms[t])
        for i in range(nf):
            if not (lo[i] <= w[i] <= hi[i]):
                return clamped, t
        if t < burn_in or (t - burn_in) % thin != thin - 1:
            continue
        for i in range(nf):
            wi = w[i]
            sum_w[i] += wi
            for k in range(i + 1):
                sum_ww[i, k] += wi * w[k]
        if trace.shape[0] > 0:
            for i in range(nf):
                trace[retained, i] = w[i]
        retained += 1
    return clamped, -1


class ConstraintViolation(RuntimeError):
    pass


def as_bounds(constraints):
    """``(lo, hi)`` arrays from a list of :class:`CellConstraint` or a pair of arrays."""
    if isinstance(constraints, tuple) and len(constraints) == 2 and not isinstance(
            constraints[0], CellConstraint):
        lo, hi = constraints
        return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    lo = np.array([c.a for c in constraints], dtype=float)
    hi = np.array([c.b for c in constraints], dtype=float)
    return lo, hi


def initial_state(lo, hi, init="midpoint"):
    if isinstance(init, str):
        if init != "midpoint":
            raise ValueError(f"unknown init {init!r}")
        both = np.isfinite(lo) & np.isfinite(hi)
        w = np.clip(0.0, lo, hi)
        w[both] = 0.5 * (lo[both] + hi[both])
        return w
    w = np.array(init, dtype=float)
    if w.shape != lo.shape or not np.all((lo <= w) & (w <= hi)):
        raise ValueError("initial state violates its constraints")
    return w


class SamplerCache:
    """Regression weights of one covariance, shared by every chain using it."""

    def __init__(self, mu, sigma):
        self.mu = np.ascontiguousarray(mu, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)
        self.weights, self.sd = regression_weights(self.sigma)

    def restrict(self, w, free):
        """Compact problem on ``free`` with the other coordinates frozen at ``w``."""
        fixed = np.ones(w.shape[0], dtype=bool)
        fixed[free] = False
        rows = self.weights[free]
        base = self.mu[free] + rows[:, fixed] @ (w[fixed] - self.mu[fixed])
        return (np.ascontiguousarray(base), np.ascontiguousarray(self.mu[free]),
                np.ascontiguousarray(rows[:, free]), np.ascontiguousarray(self.sd[free]))


@dataclass
class ChainResult:
    first: np.ndarray
    second: np.ndarray
    trace: np.ndarray
    free: np.ndarray
    state: np.ndarray
    clamped: int


def run_chain(lo, hi, cache, cfg, rng, trace=False):
    """Sample one constrained chain and return its retained moments.

    Point-constrained coordinates keep their value and their moment entries
    are exact. ``rng`` supplies one uniform per coordinate per sweep, used or
    not, so the stream layout does not depend on the constraints.
    """
    lo = np.ascontiguousarray(lo, dtype=float)
    hi = np.ascontiguousarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("constraint with lower bound above upper bound")
    p = lo.shape[0]
    w = initial_state(lo, hi, cfg.init)
    free = np.flatnonzero(lo < hi).astype(np.int64)
    nf = free.shape[0]
    if nf == 0:
        return ChainResult(w.copy(), np.outer(w, w), np.zeros((cfg.keep if trace else 0, 0)),
                           free, w, 0)
    uniforms = rng.random((cfg.n_sweeps, p))
    base, mu_f, weights_f, sd_f = cache.restrict(w, free)
    wf = np.ascontiguousarray(w[free])
    sum_w = np.zeros(nf)
    sum_ww = np.zeros((nf, nf))
    tr = np.zeros((cfg.keep if trace else 0, nf))
    clamped, bad = _run_chain(wf, lo[free], hi[free], base, mu_f, weights_f, sd_f, free,
                              uniforms, cfg.burn_in, cfg.thin, sum_w, sum_ww, tr)
    if bad >= 0:
        raise ConstraintViolation(f"sample left its constraints at sweep {bad}")
    if clamped:
        log.debug("interval mass underflow on %d coordinate updates", clamped)
    w[free] = wf
    first = w.copy()
    first[free] = sum_w / cfg.keep
    second = np.outer(first, first)
    block = np.tril(sum_ww) / cfg.keep
    second[np.ix_(free, free)] = block + np.tril(block, -1).T
    return ChainResult(first, second, tr, free, w, clamped)


def gibbs_sweep(state, constraints, mu, sigma, rng, cache=None):
    """One systematic-scan sweep over coordinates ``0 .. p-1``.

    Returns a new state; the input is not modified.
    """
    lo, hi = as_bounds(constraints)
    w = np.array(state, dtype=float)
    if not np.all((lo <= w) & (w <= hi)):
        raise ValueError("state violates its constraints")
    if cache is None:
        cache = SamplerCache(mu, sigma)
    w[lo == hi] = lo[lo == hi]
    free = np.flatnonzero(lo < hi).astype(np.int64)
    u = np.asarray(rng.random(w.shape[0]), dtype=float)
    if free.size:
        base, mu_f, weights_f, sd_f = cache.restrict(w, free)
        wf = np.ascontiguousarray(w[free])
        _sweep(wf, lo[free], hi[free], base, mu_f, weights_f, sd_f, free, u)
        w[free] = wf
    return w


def conditional_moments(constraints, mu, sigma, cfg=None, rng=None):
    """Monte-Carlo conditional first and second moments under box constraints.

    Returns
    -------
    mean : ndarray, shape (p,)
    second_moment : ndarray, shape (p, p)
    """
    cfg = cfg or GibbsConfig()
    rng = rng if rng is not None else substream(cfg.seed)
    lo, hi = as_bounds(constraints)
    res = run_chain(lo, hi, SamplerCache(mu, sigma), cfg, rng)
    return res.first, res.second


def interval_counts(samples, cuts):
    """Count samples in each interval ``(cuts[k], cuts[k+1]]``."""
    from .data import discretize

    levels = discretize(samples, cuts)
    return np.bincount(levels, minlength=len(cuts) - 1)


def target_samples(constraints, target, mu, sigma, cfg, rng=None, cache=None):
    """Retained samples of coordinate ``target``, whose own constraint must be unbounded."""
    lo, hi = as_bounds(constraints)
    if not (lo[target] == -np.inf and hi[target] == np.inf):
        raise ValueError(f"target coordinate {target} must be unconstrained")
    cache = cache or SamplerCache(mu, sigma)
    rng = rng if rng is not None else substream(cfg.seed)
    res = run_chain(lo, hi, cache, cfg, rng, trace=True)
    return res.trace[:, int(np.searchsorted(res.free, target))]


def event_probability(constraints, target_j, interval, mu, sigma, cfg=None, rng=None):
    """Fraction of retained sweeps with the target coordinate inside ``interval``."""
    cfg = cfg or GibbsConfig()
    lo_t, hi_t = interval
    samples = target_samples(constraints, target_j, mu, sigma, cfg, rng)
    return float(np.mean((samples > lo_t) & (samples <= hi_t)))


def map_rows(fn, rows, threads=1):
    """Apply ``fn`` to each row index, preserving order regardless of ``threads``."""
    rows = list(rows)
    if threads is None or threads <= 1 or len(rows) < 2:
        return [fn(i) for i in rows]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, rows))
