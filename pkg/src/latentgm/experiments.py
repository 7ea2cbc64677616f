"""Replicate-level drivers for the simulation studies."""
import dataclasses
from dataclasses import dataclass

import numpy as np

from .em import EMConfig, em_fit
from .gibbs import STREAM_SIMULATE, derive_seed
from .numerics import matrix_norms
from .precision import CLIME, GLASSO, default_lambdas, precision_path
from .predict import cross_validate
from .simulation import (ScenarioSpec, apply_mar_missingness, generate_omega,
                         generate_scenario, outcome_column)
from .thresholds import estimate_thresholds


@dataclass
class SimulatedData:
    spec: ScenarioSpec
    omega: np.ndarray
    sigma: np.ndarray
    precision: np.ndarray  # inverse of the rescaled sigma; differs from omega in scale
    complete: object
    observed: object
    thresholds: dict
    latent: np.ndarray


def simulate(scenario, n=200, seed=0, missing=True):
    """Draw one replicate: graph, latent rows, discretisation and (optionally) MAR gaps."""
    omega, sigma = generate_omega(50, 0.15, 1.0, seed=derive_seed(seed, STREAM_SIMULATE, 0))
    spec = ScenarioSpec(scenario, n=n, seed=derive_seed(seed, STREAM_SIMULATE, 1))
    ds, thresholds, latent = generate_scenario(spec, sigma)
    observed = apply_mar_missingness(ds, seed=derive_seed(seed, STREAM_SIMULATE, 2)) \
        if missing else ds
    precision = np.linalg.inv(sigma)
    return SimulatedData(spec, omega, sigma, 0.5 * (precision + precision.T), ds, observed,
                         thresholds, latent)


def oracle_norms(path, truth):
    """Smallest Frobenius and spectral error of ``Omega_hat - truth`` over a path."""
    norms = np.array([matrix_norms(o - truth) for o in path.omegas])
    return {"frobenius": float(norms[:, 0].min()), "spectral": float(norms[:, 1].min()),
            "lambda_frobenius": float(path.lambdas[np.argmin(norms[:, 0])]),
            "lambda_spectral": float(path.lambdas[np.argmin(norms[:, 1])])}


def precision_replicate(scenario, seed, missing, methods=(GLASSO, CLIME), em_cfg=None,
                        n_lambdas=20, threads=1):
    """Oracle-penalty estimation error of the precision matrix for one replicate."""
    data = simulate(scenario, seed=seed, missing=missing)
    ds = data.observed
    em_cfg = dataclasses.replace(em_cfg or EMConfig(), seed=derive_seed(seed, 7))
    params, trace = em_fit(ds, estimate_thresholds(ds), em_cfg, threads)
    grid = default_lambdas(params.sigma, n_lambdas)
    out = {"em_iterations": len(trace)}
    for method in methods:
        out[method] = oracle_norms(precision_path(params.sigma, grid, method), data.omega)
    return out


def classification_replicate(scenario, seed, missing, method=GLASSO, folds=5, em_cfg=None,
                             threads=1):
    """Cross-validated error at the best penalty for one simulated dataset."""
    data = simulate(scenario, seed=seed, missing=missing)
    target = outcome_column(data.complete, data.thresholds)
    em_cfg = em_cfg or EMConfig()
    res = cross_validate(data.observed, target, method=method, folds=folds, cfg=em_cfg.gibbs,
                         seed=derive_seed(seed, 8), em_cfg=em_cfg, threads=threads)
    return {"error": res.best_error, "lambda": res.best_lambda, "target": target}
