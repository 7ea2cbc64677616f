"""Input checks shared by the estimator wrappers."""
import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .data import DataError, MixedDataset, VariableSchema


def check_categorical(categorical, n_features):
    """Normalise ``categorical`` to a ``{column: levels}`` dict.

    Accepts ``None`` (all continuous) or a mapping from column index to
    level count.
    """
    if categorical is None:
        return {}
    if not hasattr(categorical, "items"):
        raise TypeError("categorical must be a mapping {column index: number of levels}")
    out = {}
    for j, levels in categorical.items():
        if not isinstance(j, numbers.Integral) or not 0 <= j < n_features:
            raise ValueError(f"categorical column {j!r} is out of range for {n_features} features")
        if not isinstance(levels, numbers.Integral) or levels < 2:
            raise ValueError(f"categorical column {j} needs an integer level count >= 2")
        out[int(j)] = int(levels)
    return out


def check_mixed_array(X, categorical, n_features=None, estimator=None):
    """Validate a float array with ``NaN`` for missing cells and wrap it as a dataset."""
    X = check_array(X, dtype=float, ensure_all_finite="allow-nan", estimator=estimator)
    if np.isinf(X).any():
        raise ValueError("X contains infinite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, but the estimator was fitted with "
                         f"{n_features}")
    levels = check_categorical(categorical, X.shape[1])
    schema = tuple(VariableSchema.categorical(f"x{j}", levels[j]) if j in levels
                   else VariableSchema.continuous(f"x{j}") for j in range(X.shape[1]))
    try:
        return MixedDataset(schema, X)
    except DataError as exc:
        raise ValueError(str(exc)) from None


def check_seed(random_state):
    if random_state is None:
        return 0
    if isinstance(random_state, numbers.Integral) and random_state >= 0:
        return int(random_state)
    raise ValueError("random_state must be None or a non-negative integer")
