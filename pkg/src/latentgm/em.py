"""Monte-Carlo EM for the mean and covariance of the latent Gaussian."""
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import VariableSchema, constraint_bounds
from .gibbs import (STREAM_EM, STREAM_INIT, GibbsConfig, SamplerCache, map_rows,
                    run_chain, substream)
from .numerics import psd_repair

log = logging.getLogger(__name__)

MODEL_FORMAT = "latentgm-model"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    pass


class DegenerateColumnError(RuntimeError):
    pass


@dataclass
class LatentParams:
    """Fitted latent mean, covariance, thresholds and the column schema."""

    mu: np.ndarray
    sigma: np.ndarray
    thresholds: dict
    schema: tuple

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.schema = tuple(self.schema)
        self.thresholds = {int(j): np.asarray(c, dtype=float)
                           for j, c in self.thresholds.items()}

    @property
    def p(self):
        return self.mu.shape[0]

    @property
    def categorical_columns(self):
        return [j for j, v in enumerate(self.schema) if v.is_categorical]


@dataclass
class EMConfig:
    max_iters: int = 50
    param_tol: float = 1e-3
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    seed: int = 0
    init: str = "identity"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.param_tol > 0:
            raise ValueError("param_tol must be > 0")
        if self.init not in ("identity", "random"):
            raise ValueError("init must be 'identity' or 'random'")


def standardize(mu, sigma, categorical):
    """Project onto zero mean and unit variance on the categorical coordinates."""
    mu = mu.copy()
    sigma = sigma.copy()
    if not categorical:
        return mu, sigma
    cat = np.asarray(categorical)
    mu[cat] = 0.0
    scale = np.ones(sigma.shape[0])
    scale[cat] = 1.0 / np.sqrt(np.diag(sigma)[cat])
    sigma = sigma * np.outer(scale, scale)
    sigma = 0.5 * (sigma + sigma.T)
    sigma[cat, cat] = 1.0
    return mu, sigma


def _initial_params(p, categorical, cfg):
    if cfg.init == "identity":
        return np.zeros(p), np.eye(p)
    rng = substream(cfg.seed, STREAM_INIT)
    a = rng.standard_normal((p, p))
    sigma = a @ a.T / p + np.eye(p)
    d = 1.0 / np.sqrt(np.diag(sigma))
    sigma = sigma * np.outer(d, d)
    np.fill_diagonal(sigma, 1.0)
    return standardize(0.1 * rng.standard_normal(p), sigma, categorical)


def e_step(lo, hi, mu, sigma, gibbs, seed, iteration, threads=1):
    """Per-row conditional first moments and the pooled conditional covariance.

    Returns ``(first, within, clamped)``: ``first`` is ``n x p``, ``within`` is
    the sum over rows of ``E[Z Z'] - E[Z] E[Z]'``.
    """
    n, p = lo.shape
    first = np.where(lo == hi, lo, 0.0)
    within = np.zeros((p, p))
    rows = np.flatnonzero(np.any(lo < hi, axis=1))
    if rows.size == 0:
        return first, within, 0
    cache = SamplerCache(mu, sigma)

    def one(i):
        return run_chain(lo[i], hi[i], cache, gibbs, substream(seed, STREAM_EM, iteration, i))

    clamped = 0
    for i, res in zip(rows, map_rows(one, rows, threads)):
        if not (np.all(np.isfinite(res.first)) and np.all(np.isfinite(res.second))):
            raise FloatingPointError(f"non-finite conditional moment in row {i}")
        first[i] = res.first
        within += res.second - np.outer(res.first, res.first)
        clamped += res.clamped
    return first, within, clamped


def m_step(first, within):
    """Mean and covariance maximising the expected complete-data likelihood.

    Equal to ``mean(E[Z Z']) - mu mu'`` split into pooled conditional
    covariance plus the spread of the conditional means, which avoids
    cancellation when the data are far from the origin.
    """
    n = first.shape[0]
    mu = first.mean(axis=0)
    centred = first - mu
    sigma = (within + centred.T @ centred) / n
    return mu, 0.5 * (sigma + sigma.T)


def em_fit(ds, thresholds, cfg=None, threads=1, floor=1e-8):
    """Fit the latent mean and covariance by Monte-Carlo EM.

    Parameters
    ----------
    ds : MixedDataset
    thresholds : dict
        Cut points per categorical column, e.g. from ``estimate_thresholds``.
    cfg : EMConfig, optional
    threads : int
        Worker threads for the per-row chains; results do not depend on it.

    Returns
    -------
    params : LatentParams
    trace : list of dict
        One entry per iteration with the largest absolute parameter change.
    """
    cfg = cfg or EMConfig()
    if ds.n < 2:
        raise ValueError("em_fit needs at least two rows")
    p = ds.p
    categorical = ds.categorical_columns
    lo, hi = constraint_bounds(ds, thresholds)
    stochastic = bool(np.any(lo < hi))
    mu, sigma = _initial_params(p, categorical, cfg)
    trace = []
    for it in range(cfg.max_iters):
        first, within, clamped = e_step(lo, hi, mu, sigma, cfg.gibbs, cfg.seed, it, threads)
        new_mu, new_sigma = m_step(first, within)
        var = np.diag(new_sigma)
        bad = np.flatnonzero(~(var > 1e-12 * np.maximum(1.0, new_mu ** 2)))
        if bad.size:
            raise DegenerateColumnError(
                f"column {ds.schema[bad[0]].name!r} has zero latent variance")
        new_mu, new_sigma = standardize(new_mu, new_sigma, categorical)
        repaired = psd_repair(new_sigma, floor)
        if not np.array_equal(repaired, new_sigma):
            new_mu, new_sigma = standardize(new_mu, repaired, categorical)
        change = max(float(np.max(np.abs(new_mu - mu))), float(np.max(np.abs(new_sigma - sigma))))
        mu, sigma = new_mu, new_sigma
        trace.append({"iteration": it + 1, "max_change": change, "clamped": clamped})
        log.info("EM iteration %d: max parameter change %.3g", it + 1, change)
        # Without latent or missing cells the E-step ignores the parameters.
        if not stochastic or change < cfg.param_tol:
            break
    return LatentParams(mu, sigma, thresholds, ds.schema), trace


def encode_number(x):
    if x == math.inf:
        return "+inf"
    if x == -math.inf:
        return "-inf"
    return float(x)


def decode_number(x):
    if x == "+inf":
        return math.inf
    if x == "-inf":
        return -math.inf
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return float(x)
    raise ModelFormatError(f"bad number {x!r}")


def encode_matrix(a):
    return [[encode_number(v) for v in row] for row in np.asarray(a, dtype=float)]


def decode_matrix(rows):
    try:
        a = np.array([[decode_number(v) for v in row] for row in rows], dtype=float)
    except TypeError:
        raise ModelFormatError("matrix must be a list of rows") from None
    if a.ndim != 2:
        raise ModelFormatError("matrix rows have unequal lengths")
    return a


def params_to_dict(params):
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "schema": [{"name": v.name, "kind": v.kind, "levels": v.levels}
                   for v in params.schema],
        "thresholds": {params.schema[j].name: [encode_number(c) for c in cuts]
                       for j, cuts in sorted(params.thresholds.items())},
        "mu": [encode_number(v) for v in params.mu],
        "sigma": encode_matrix(params.sigma),
    }


def params_from_dict(doc):
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a latentgm model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"model version {doc.get('version')!r} is not supported (expected {MODEL_VERSION})")
    try:
        schema = tuple(VariableSchema(s["name"], s["kind"], s.get("levels"))
                       for s in doc["schema"])
        names = [v.name for v in schema]
        thresholds = {names.index(name): [decode_number(c) for c in cuts]
                      for name, cuts in doc["thresholds"].items()}
        mu = np.array([decode_number(v) for v in doc["mu"]], dtype=float)
        sigma = decode_matrix(doc["sigma"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    p = len(schema)
    if mu.shape != (p,) or sigma.shape != (p, p):
        raise ModelFormatError("mu/sigma dimensions do not match the schema")
    for j, var in enumerate(schema):
        if var.is_categorical and len(thresholds.get(j, ())) != var.levels + 1:
            raise ModelFormatError(f"thresholds missing or wrong length for {var.name!r}")
    return LatentParams(mu, sigma, thresholds, schema)


def save_model(params, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params), fh, indent=1)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: cannot parse model file: {exc}") from None
    return params_from_dict(doc)
