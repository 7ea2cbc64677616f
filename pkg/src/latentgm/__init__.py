"""Latent Gaussian graphical models for mixed data with missing values."""
from .data import (CellConstraint, DataError, MixedDataset, VariableSchema, constraint_bounds,
                   constraints_for_row, load_csv, read_schema, write_csv, write_schema)
from .em import EMConfig, LatentParams, em_fit, load_model, save_model
from .estimators import LatentGaussianClassifier, LatentGaussianModel, SparseLatentPrecision
from .gibbs import GibbsConfig, conditional_moments, event_probability, gibbs_sweep
from .numerics import conditional_params, normal_cdf, normal_quantile, psd_repair
from .precision import PrecisionPath, clime_solve, glasso_solve, precision_path
from .predict import classify_row, cross_validate, impute_dataset
from .simulation import ScenarioSpec, apply_mar_missingness, generate_omega, generate_scenario
from .thresholds import estimate_thresholds

__version__ = "0.1.0"

__all__ = [
    "CellConstraint", "DataError", "EMConfig", "GibbsConfig", "LatentGaussianClassifier",
    "LatentGaussianModel", "LatentParams", "MixedDataset", "PrecisionPath", "ScenarioSpec",
    "SparseLatentPrecision", "VariableSchema", "apply_mar_missingness", "classify_row",
    "clime_solve", "conditional_moments", "conditional_params", "constraint_bounds",
    "constraints_for_row", "cross_validate", "em_fit", "estimate_thresholds",
    "event_probability", "generate_omega", "generate_scenario", "gibbs_sweep", "glasso_solve",
    "impute_dataset", "load_csv", "load_model", "normal_cdf", "normal_quantile",
    "precision_path", "psd_repair", "read_schema", "save_model", "write_csv", "write_schema",
]
