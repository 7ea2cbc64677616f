"""Classification and multiple imputation under a fitted latent Gaussian model."""
import csv
import dataclasses
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .data import DataError, constraint_bounds, discretize
from .em import EMConfig, em_fit
from .gibbs import (STREAM_FOLDS, STREAM_IMPUTE, STREAM_PREDICT, GibbsConfig, SamplerCache,
                    derive_seed, interval_counts, map_rows, run_chain, substream)
from .numerics import psd_repair
from .precision import GLASSO, default_lambdas, precision_path
from .thresholds import estimate_thresholds

log = logging.getLogger(__name__)

IMPUTE_THIN = 10


def covariance_from_precision(omega, floor=1e-8):
    """Covariance implied by a sparse precision estimate, repaired to be PSD."""
    omega = np.asarray(omega, dtype=float)
    try:
        sigma = np.linalg.inv(omega)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("precision matrix is singular") from exc
    if not np.all(np.isfinite(sigma)):
        raise np.linalg.LinAlgError("precision matrix is singular")
    return psd_repair(0.5 * (sigma + sigma.T), floor)


def _check_target(params, target):
    var = params.schema[target]
    if not var.is_categorical:
        raise DataError(f"target column {var.name!r} is not categorical")
    return params.thresholds[target]


def classify_rows(ds, target, params, sigma_lambda, cfg=None, rows=None, threads=1):
    """Predicted level and level probabilities for several rows.

    ``sigma_lambda`` is the covariance used for prediction (see
    :func:`covariance_from_precision`). All rows share one sampler cache;
    row ``i`` draws from its own stream so results do not depend on which
    other rows are classified.

    Returns
    -------
    labels : ndarray of int, shape (len(rows),)
    probs : ndarray, shape (len(rows), levels)
    """
    cfg = cfg or GibbsConfig()
    cuts = _check_target(params, target)
    rows = np.arange(ds.n) if rows is None else np.asarray(rows, dtype=int)
    lo, hi = constraint_bounds(ds.take(rows), params.thresholds)
    lo[:, target], hi[:, target] = -np.inf, np.inf
    cache = SamplerCache(params.mu, sigma_lambda)
    keep_cfg = dataclasses.replace(cfg, init="midpoint")

    def one(k):
        res = run_chain(lo[k], hi[k], cache, keep_cfg,
                        substream(cfg.seed, STREAM_PREDICT, rows[k]), trace=True)
        samples = res.trace[:, int(np.searchsorted(res.free, target))]
        return interval_counts(samples, cuts)

    counts = np.array(map_rows(one, range(len(rows)), threads), dtype=float)
    probs = counts / cfg.keep
    return np.argmax(counts, axis=1), probs


def classify_row(row, target, ds, params, omega_lambda, cfg=None):
    """Most probable level of column ``target`` in ``row`` given its other cells.

    The target cell itself is ignored. Ties go to the smallest level.
    """
    sigma_lambda = covariance_from_precision(omega_lambda)
    labels, probs = classify_rows(ds, target, params, sigma_lambda, cfg, rows=[row])
    return int(labels[0]), probs[0]


def impute_dataset(ds, params, cfg=None, draws=1, threads=1):
    """Complete the dataset ``draws`` times from the fitted model.

    Each row with missing cells runs one chain; successive draws are taken
    ``IMPUTE_THIN`` sweeps apart after burn-in. Observed cells are copied
    unchanged, missing categorical cells get the level of their latent draw.

    Returns
    -------
    list of MixedDataset
    """
    cfg = cfg or GibbsConfig()
    if draws < 1:
        raise ValueError("draws must be >= 1")
    lo, hi = constraint_bounds(ds, params.thresholds)
    missing = ds.missing
    rows = np.flatnonzero(missing.any(axis=1))
    out = np.repeat(ds.values[None, :, :], draws, axis=0)
    if rows.size == 0:
        return [ds.with_values(v) for v in out]
    cache = SamplerCache(params.mu, params.sigma)
    chain_cfg = dataclasses.replace(cfg, keep=draws, thin=IMPUTE_THIN)

    def one(i):
        return run_chain(lo[i], hi[i], cache, chain_cfg,
                         substream(cfg.seed, STREAM_IMPUTE, i), trace=True)

    for i, res in zip(rows, map_rows(one, rows, threads)):
        for pos, j in enumerate(res.free):
            if not missing[i, j]:
                continue
            latent = res.trace[:, pos]
            if params.schema[j].is_categorical:
                out[:, i, j] = discretize(latent, params.thresholds[j])
            else:
                out[:, i, j] = latent
    return [ds.with_values(v) for v in out]


@dataclass
class CVResult:
    lambdas: np.ndarray
    errors: np.ndarray  # folds x lambdas; NaN for folds without evaluable rows
    method: str

    @property
    def mean(self):
        return np.nanmean(self.errors, axis=0)

    @property
    def sd(self):
        return np.nanstd(self.errors, axis=0, ddof=1) if self.errors.shape[0] > 1 \
            else np.zeros(self.errors.shape[1])

    @property
    def best_index(self):
        # lambdas descend, so the first minimum is the sparsest model
        return int(np.argmin(self.mean))

    @property
    def best_lambda(self):
        return float(self.lambdas[self.best_index])

    @property
    def best_error(self):
        return float(self.mean[self.best_index])

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["lambda", "mean_error", "sd_error", "selected"])
            for k, lam in enumerate(self.lambdas):
                out.writerow([repr(float(lam)), repr(float(self.mean[k])),
                              repr(float(self.sd[k])), int(k == self.best_index)])


def fold_assignment(n, folds, seed):
    rng = substream(seed, STREAM_FOLDS)
    assign = np.empty(n, dtype=int)
    for k, part in enumerate(np.array_split(rng.permutation(n), folds)):
        assign[part] = k
    return assign


def cross_validate(ds, target, lambdas=None, method=GLASSO, folds=5, cfg=None, seed=0,
                   em_cfg=None, threads=1, n_lambdas=20):
    """K-fold prediction error of the latent Gaussian classifier along a penalty grid.

    Every fold re-estimates thresholds and refits EM on its training rows
    only. Rows whose target is missing are never scored. When ``lambdas`` is
    omitted the default grid of the first fold's covariance estimate is used
    for all folds.

    Returns
    -------
    CVResult
    """
    cfg = cfg or GibbsConfig()
    em_cfg = em_cfg or EMConfig(gibbs=cfg)
    target = ds.column_index(target)
    if not ds.schema[target].is_categorical:
        raise DataError(f"target column {ds.schema[target].name!r} is not categorical")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    labelled = ~np.isnan(ds.values[:, target])
    if labelled.sum() < folds:
        raise ValueError("fewer labelled rows than folds")
    assign = fold_assignment(ds.n, folds, seed)
    grid = None if lambdas is None else np.asarray(lambdas, dtype=float)
    errors = []
    for k in range(folds):
        train = ds.take(np.flatnonzero(assign != k))
        test_rows = np.flatnonzero((assign == k) & labelled)
        train_labels = train.values[:, target]
        if np.unique(train_labels[~np.isnan(train_labels)]).size < 2:
            warnings.warn(f"fold {k}: training target has a single class", RuntimeWarning)
        fold_seed = derive_seed(seed, STREAM_FOLDS, k)
        thresholds = estimate_thresholds(train)
        params, _ = em_fit(train, thresholds, dataclasses.replace(em_cfg, seed=fold_seed),
                           threads)
        if grid is None:
            grid = default_lambdas(params.sigma, n_lambdas)
        fold_err = np.full(len(grid), np.nan)
        if test_rows.size:
            path = precision_path(params.sigma, grid, method)
            truth = ds.values[test_rows, target]
            pcfg = dataclasses.replace(cfg, seed=fold_seed)
            for m, omega in enumerate(path.omegas):
                labels, _ = classify_rows(ds, target, params, covariance_from_precision(omega),
                                          pcfg, test_rows, threads)
                fold_err[m] = float(np.mean(labels != truth))
        log.info("fold %d: best error %.3f", k, np.nanmin(fold_err) if test_rows.size else np.nan)
        errors.append(fold_err)
    return CVResult(grid, np.array(errors), method)
