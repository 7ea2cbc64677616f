"""Synthetic mixed data: random sparse precision matrices, four column layouts
and a logistic missing-at-random mechanism."""
from dataclasses import dataclass

import numpy as np

from .data import MixedDataset, VariableSchema
from .gibbs import STREAM_SIMULATE, substream
from .numerics import normal_pdf

# One entry per scenario: list of (count, levels); levels None = continuous.
LAYOUTS = {
    1: [(49, None), (1, 2)],
    2: [(20, None), (30, 2)],
    3: [(20, None), (10, 2), (10, 3), (10, 4)],
    4: [(20, 2), (10, 3), (20, 4)],
}

_OMEGA, _LATENT, _THRESH, _COLUMNS, _MISSING = range(5)


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    id: int
    n: int = 200
    p: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.id not in LAYOUTS:
            raise ValueError(f"scenario id must be one of {sorted(LAYOUTS)}")
        if self.p != 50:
            raise ValueError("scenario layouts are defined for p = 50")
        if self.n < 1:
            raise ValueError("n must be positive")

    def schema(self):
        cols = []
        for count, levels in LAYOUTS[self.id]:
            for _ in range(count):
                name = f"X{len(cols) + 1}"
                cols.append(VariableSchema.continuous(name) if levels is None
                            else VariableSchema.categorical(name, levels))
        return tuple(cols)


def omega_from_edges(edges, c):
    """Precision with unit diagonal and ``c`` on every edge, plus its
    covariance rescaled to unit diagonal."""
    edges = np.triu(np.asarray(edges, dtype=bool), 1)
    p = edges.shape[0]
    omega = np.eye(p) + c * (edges | edges.T)
    sigma = np.linalg.inv(omega)
    scale = 1.0 / np.sqrt(np.diag(sigma))
    sigma = sigma * np.outer(scale, scale)
    sigma = 0.5 * (sigma + sigma.T)
    np.fill_diagonal(sigma, 1.0)
    return omega, sigma


def edge_probabilities(points, p0=1.0):
    """Probability of an edge between every pair of planar points."""
    p = points.shape[0]
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    return p0 * normal_pdf(dist / np.sqrt(p))


def generate_omega(p=50, c=0.15, p0=1.0, seed=0, max_tries=100):
    """Random sparse precision matrix on a geometric graph.

    Nodes are uniform points in the unit square; each pair is joined with
    probability ``p0 * phi(d / sqrt(p))`` for their distance ``d``. The edge
    draw is repeated until the precision matrix is positive definite.

    Returns
    -------
    omega : ndarray, shape (p, p)
        Unit-diagonal precision matrix with ``c`` on the edges.
    sigma : ndarray, shape (p, p)
        ``inv(omega)`` rescaled to a correlation matrix.
    """
    rng = substream(seed, STREAM_SIMULATE, _OMEGA)
    points = rng.uniform(size=(p, 2))
    prob = edge_probabilities(points, p0)
    for _ in range(max_tries):
        edges = np.triu(rng.uniform(size=(p, p)) < prob, 1)
        omega = np.eye(p) + c * (edges | edges.T)
        if np.linalg.eigvalsh(omega)[0] > 0:
            return omega_from_edges(edges, c)
    raise CalibrationError(f"no positive definite precision after {max_tries} draws")


def generate_scenario(spec, sigma):
    """Draw latent Gaussian rows and discretise them per the scenario layout.

    Returns ``(dataset, thresholds, latent)``; interior thresholds are
    sorted uniform draws on ``[-1, 1]``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (spec.p, spec.p):
        raise ValueError(f"sigma has shape {sigma.shape}, expected {(spec.p, spec.p)}")
    schema = spec.schema()
    rng = substream(spec.seed, STREAM_SIMULATE, _LATENT)
    chol = np.linalg.cholesky(sigma)
    latent = rng.standard_normal((spec.n, spec.p)) @ chol.T
    rng = substream(spec.seed, STREAM_SIMULATE, _THRESH)
    values = latent.copy()
    thresholds = {}
    for j, var in enumerate(schema):
        if not var.is_categorical:
            continue
        inner = np.sort(rng.uniform(-1.0, 1.0, size=var.levels - 1))
        thresholds[j] = np.concatenate(([-np.inf], inner, [np.inf]))
        values[:, j] = np.searchsorted(inner, latent[:, j], side="left")
    return MixedDataset(schema, values), thresholds, latent


def outcome_column(ds, thresholds):
    """Binary column with the smallest absolute interior threshold (lowest index on ties)."""
    best = None
    for j in ds.categorical_columns:
        if ds.schema[j].levels != 2:
            continue
        cut = abs(float(thresholds[j][1]))
        if best is None or cut < best[0]:
            best = (cut, j)
    if best is None:
        raise ValueError("dataset has no binary column")
    return best[1]


def missing_probability(scores, beta):
    eta = -1.0 + beta * np.asarray(scores, dtype=float)
    return 1.0 / (1.0 + np.exp(-eta))


def calibrate_beta(scores, target=0.40, tol=1e-10, max_iter=200):
    """Slope giving an average logistic missingness probability of ``target``.

    Bisection on the slope along the direction whose limiting rate (the
    fraction of positive or negative scores) lies on the far side of the target.
    """
    scores = np.asarray(scores, dtype=float)

    def gap(beta):
        return missing_probability(scores, beta).mean() - target

    g0 = gap(0.0)
    if abs(g0) < tol:
        return 0.0
    limits = {1.0: np.mean(scores > 0), -1.0: np.mean(scores < 0)}
    usable = [s for s, lim in limits.items() if (lim - target) * g0 < 0]
    if not usable:
        raise CalibrationError("no slope reaches the target missing rate")
    sign = usable[0]
    lo, hi = 0.0, 1e-3
    while gap(sign * hi) * g0 > 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise CalibrationError("no slope reaches the target missing rate")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if gap(sign * mid) * g0 > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return sign * 0.5 * (lo + hi)


def apply_mar_missingness(ds, n_missing_cols=10, target_rate=0.40, seed=0, beta=None,
                          band=(0.35, 0.45), max_tries=100):
    """Blank cells of randomly chosen columns with a logistic MAR mechanism.

    A row's missingness probability depends on the sum of its values over the
    columns that are not selected, which stay fully observed. ``beta`` is
    calibrated to ``target_rate`` unless given; with a calibrated ``beta``,
    draws are repeated until the realised rate over the selected columns
    falls inside ``band``.

    Returns
    -------
    MixedDataset
    """
    if n_missing_cols == 0:
        return ds
    if not 0 < n_missing_cols < ds.p:
        raise ValueError("n_missing_cols must be between 0 and p - 1")
    rng = substream(seed, STREAM_SIMULATE, _COLUMNS)
    selected = np.sort(rng.choice(ds.p, size=n_missing_cols, replace=False))
    rest = np.setdiff1d(np.arange(ds.p), selected)
    if np.any(np.isnan(ds.values[:, rest])):
        raise ValueError("columns driving the missingness must be fully observed")
    scores = ds.values[:, rest].sum(axis=1)
    calibrated = beta is None
    if calibrated:
        beta = calibrate_beta(scores, target_rate)
    prob = missing_probability(scores, beta)
    rng = substream(seed, STREAM_SIMULATE, _MISSING)
    for _ in range(max_tries):
        mask = rng.uniform(size=(ds.n, n_missing_cols)) < prob[:, None]
        rate = mask.mean()
        if not calibrated or band[0] <= rate <= band[1]:
            break
    else:
        raise CalibrationError(f"realised missing rate {rate:.3f} outside {band}")
    values = ds.values.copy()
    block = values[:, selected]
    block[mask] = np.nan
    values[:, selected] = block
    return ds.with_values(values)
