"""scikit-learn style wrappers around the latent Gaussian model."""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_categorical, check_mixed_array, check_seed
from .em import EMConfig, em_fit
from .gibbs import GibbsConfig
from .precision import CLIME, GLASSO, clime_solve, glasso_solve
from .predict import classify_rows, covariance_from_precision, impute_dataset
from .thresholds import estimate_thresholds


class LatentGaussianModel(TransformerMixin, BaseEstimator):
    """Latent Gaussian model for mixed continuous and categorical data.

    ``X`` is a float array whose categorical columns hold integer levels
    ``0 .. L-1`` and whose missing cells are ``NaN``. Fitting estimates the
    thresholds of every categorical column and then the latent mean and
    covariance by Monte-Carlo EM. ``transform`` fills missing cells with one
    draw from the fitted model.

    Parameters
    ----------
    categorical : dict, optional
        ``{column index: number of levels}``; other columns are continuous.
    max_iter : int, default=50
    tol : float, default=1e-3
        Stop when no mean or covariance entry moves by more than this.
    burn_in, n_keep : int
        Discarded and retained Gibbs sweeps per row and E-step.
    init : {"identity", "random"}
    random_state : int, optional
    n_jobs : int, default=1
        Worker threads for per-row sampling. Results do not depend on it.

    Attributes
    ----------
    location_ : ndarray of shape (n_features,)
    covariance_ : ndarray of shape (n_features, n_features)
    thresholds_ : dict
    n_iter_ : int
    trace_ : list of dict
    """

    def __init__(self, categorical=None, max_iter=50, tol=1e-3, burn_in=100, n_keep=500,
                 init="identity", random_state=None, n_jobs=1):
        self.categorical = categorical
        self.max_iter = max_iter
        self.tol = tol
        self.burn_in = burn_in
        self.n_keep = n_keep
        self.init = init
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _gibbs(self, seed):
        return GibbsConfig(burn_in=self.burn_in, keep=self.n_keep, seed=seed)

    def _fit_dataset(self, ds):
        seed = check_seed(self.random_state)
        cfg = EMConfig(max_iters=self.max_iter, param_tol=self.tol, gibbs=self._gibbs(seed),
                       seed=seed, init=self.init)
        thresholds = estimate_thresholds(ds)
        self.params_, self.trace_ = em_fit(ds, thresholds, cfg, self.n_jobs)
        self.location_ = self.params_.mu
        self.covariance_ = self.params_.sigma
        self.thresholds_ = thresholds
        self.n_iter_ = len(self.trace_)
        self.n_features_in_ = ds.p
        return self

    def fit(self, X, y=None):
        return self._fit_dataset(check_mixed_array(X, self.categorical, estimator=self))

    def sample_imputations(self, X, n_draws=5):
        """``n_draws`` completed copies of ``X`` drawn from the fitted model."""
        check_is_fitted(self, "params_")
        ds = check_mixed_array(X, self.categorical, self.n_features_in_, estimator=self)
        seed = check_seed(self.random_state)
        done = impute_dataset(ds, self.params_, self._gibbs(seed), n_draws, self.n_jobs)
        return [d.values.copy() for d in done]

    def transform(self, X):
        return self.sample_imputations(X, 1)[0]


def _precision(covariance, method, alpha):
    if method == GLASSO:
        return glasso_solve(covariance, alpha)
    if method == CLIME:
        return clime_solve(covariance, alpha)
    raise ValueError(f"method must be {GLASSO!r} or {CLIME!r}, got {method!r}")


class SparseLatentPrecision(LatentGaussianModel):
    """Sparse precision matrix of the latent Gaussian covariance.

    Fits :class:`LatentGaussianModel` and then applies the graphical lasso
    or CLIME with penalty ``alpha`` to the estimated covariance.

    Attributes
    ----------
    precision_ : ndarray of shape (n_features, n_features)
    """

    def __init__(self, method=GLASSO, alpha=0.1, categorical=None, max_iter=50, tol=1e-3,
                 burn_in=100, n_keep=500, init="identity", random_state=None, n_jobs=1):
        super().__init__(categorical=categorical, max_iter=max_iter, tol=tol, burn_in=burn_in,
                         n_keep=n_keep, init=init, random_state=random_state, n_jobs=n_jobs)
        self.method = method
        self.alpha = alpha

    def fit(self, X, y=None):
        super().fit(X)
        self.precision_ = _precision(self.covariance_, self.method, self.alpha)
        return self


class LatentGaussianClassifier(ClassifierMixin, BaseEstimator):
    """Classifier for a categorical outcome under a sparse latent Gaussian model.

    The outcome is modelled jointly with the features as one more
    categorical column. Prediction samples the outcome's latent coordinate
    given each row's observed features, under the covariance implied by a
    sparse precision estimate. Missing features (``NaN``) are allowed in
    both ``fit`` and ``predict``; rows with a missing label still inform
    the model fit.

    Parameters
    ----------
    method : {"glasso", "clime"}
    alpha : float
        Penalty of the sparse precision estimate.
    categorical : dict, optional
        Categorical feature columns, as in :class:`LatentGaussianModel`.

    Attributes
    ----------
    classes_ : ndarray
    covariance_ : ndarray
        Prediction covariance including the outcome as coordinate 0.
    precision_ : ndarray
    """

    def __init__(self, method=GLASSO, alpha=0.1, categorical=None, max_iter=50, tol=1e-3,
                 burn_in=100, n_keep=500, random_state=None, n_jobs=1):
        self.method = method
        self.alpha = alpha
        self.categorical = categorical
        self.max_iter = max_iter
        self.tol = tol
        self.burn_in = burn_in
        self.n_keep = n_keep
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _stacked(self, X, y_codes, n_features=None):
        X = check_array(X, dtype=float, ensure_all_finite="allow-nan", estimator=self)
        levels = {0: len(self.classes_)}
        feats = check_categorical(self.categorical, X.shape[1])
        levels.update({j + 1: k for j, k in feats.items()})
        stacked = np.column_stack([y_codes, X])
        return check_mixed_array(stacked, levels, n_features, estimator=self)

    def fit(self, X, y):
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != np.shape(X)[0]:
            raise ValueError("X and y have different numbers of rows")
        labelled = ~np.isnan(y)
        self.classes_ = np.unique(y[labelled])
        if self.classes_.size < 2:
            raise ValueError("y needs at least two classes")
        codes = np.full(y.shape, np.nan)
        codes[labelled] = np.searchsorted(self.classes_, y[labelled])
        ds = self._stacked(X, codes)
        model = LatentGaussianModel(categorical={j: ds.schema[j].levels
                                                 for j in ds.categorical_columns},
                                    max_iter=self.max_iter, tol=self.tol, burn_in=self.burn_in,
                                    n_keep=self.n_keep, random_state=self.random_state,
                                    n_jobs=self.n_jobs)
        model._fit_dataset(ds)
        self.params_ = model.params_
        self.precision_ = _precision(model.covariance_, self.method, self.alpha)
        self.covariance_ = covariance_from_precision(self.precision_)
        self.n_features_in_ = ds.p - 1
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        n = np.shape(X)[0]
        ds = self._stacked(X, np.full(n, np.nan), self.n_features_in_ + 1)
        cfg = GibbsConfig(burn_in=self.burn_in, keep=self.n_keep,
                          seed=check_seed(self.random_state))
        _, probs = classify_rows(ds, 0, self.params_, self.covariance_, cfg,
                                 threads=self.n_jobs)
        return probs

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
