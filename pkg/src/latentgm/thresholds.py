"""Marginal estimation of the discretisation thresholds of categorical columns."""
import numpy as np

from .data import DataError
from .numerics import normal_quantile


def estimate_thresholds(ds):
    """Estimate the cut points of every categorical column from its margin.

    Threshold ``k`` of column ``j`` is the standard normal quantile of the
    fraction of observed cells in that column with level below ``k``. Missing
    cells are left out of the fraction. The endpoints come out as ``-inf``
    and ``inf`` and a level that is never observed gives a repeated cut
    (a zero-width interval).

    Returns
    -------
    dict
        Maps each categorical column index to an array of ``levels + 1`` cuts.
    """
    thresholds = {}
    for j in ds.categorical_columns:
        var = ds.schema[j]
        col = ds.values[:, j]
        obs = col[~np.isnan(col)].astype(int)
        if obs.size == 0:
            raise DataError(f"categorical column {var.name!r} has no observed cells")
        counts = np.bincount(obs, minlength=var.levels)
        below = np.concatenate(([0], np.cumsum(counts)))
        fractions = below / obs.size
        fractions[-1] = 1.0
        thresholds[j] = normal_quantile(fractions)
    return thresholds
