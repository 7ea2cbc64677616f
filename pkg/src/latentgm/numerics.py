"""Scalar normal functions, Gaussian conditionals and small matrix utilities.

The scalar kernels are compiled with numba because the Gibbs sampler calls
them once per coordinate update.
"""
import math

import numpy as np
from numba import njit, vectorize

SQRT2 = math.sqrt(2.0)

# Wichura (1988), algorithm AS241 PPND16.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


@njit(cache=True, inline="always")
def _poly(c, x):
    acc = c[7]
    for k in range(6, -1, -1):
        acc = acc * x + c[k]
    return acc


@njit(cache=True, nogil=True)
def ndtr(x):
    """Standard normal CDF of a scalar; exact limits at +-inf."""
    if x == -np.inf:
        return 0.0
    if x == np.inf:
        return 1.0
    return 0.5 * math.erfc(-x / SQRT2)


@njit(cache=True, nogil=True)
def ndtri(u):
    """Standard normal quantile of a scalar in [0, 1]; NaN outside."""
    if not (0.0 <= u <= 1.0):
        return np.nan
    if u == 0.0:
        return -np.inf
    if u == 1.0:
        return np.inf
    q = u - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = u if q < 0.0 else 1.0 - u
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        val = _poly(_E, r) / _poly(_F, r)
    return -val if q < 0.0 else val


@vectorize(["float64(float64)"], cache=True)
def _ndtr_ufunc(x):
    return ndtr(x)


@vectorize(["float64(float64)"], cache=True)
def _ndtri_ufunc(u):
    return ndtri(u)


def normal_cdf(x):
    """Standard normal distribution function.

    Accepts scalars or arrays, including ``-inf`` and ``inf``.
    """
    out = _ndtr_ufunc(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def normal_quantile(u):
    """Inverse of :func:`normal_cdf`.

    ``normal_quantile(0)`` is ``-inf`` and ``normal_quantile(1)`` is ``inf``.

    Raises
    ------
    ValueError
        If any probability lies outside ``[0, 1]``.
    """
    u = np.asarray(u, dtype=float)
    if np.any(~((u >= 0.0) & (u <= 1.0))):
        raise ValueError("normal_quantile: probability outside [0, 1]")
    out = _ndtri_ufunc(u)
    return float(out) if np.ndim(out) == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def conditional_params(j, w_rest, mu, sigma):
    """Mean and variance of coordinate ``j`` given all other coordinates.

    Parameters
    ----------
    j : int
        Coordinate to condition on the rest.
    w_rest : array-like, shape (p - 1,)
        Values of the remaining coordinates in their original order.
    mu : array-like, shape (p,)
    sigma : array-like, shape (p, p)

    Returns
    -------
    mean, variance : float
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    p = mu.shape[0]
    rest = np.r_[0:j, j + 1:p]
    w_rest = np.asarray(w_rest, dtype=float).reshape(-1)
    if w_rest.shape[0] != p - 1:
        raise ValueError(f"w_rest has length {w_rest.shape[0]}, expected {p - 1}")
    if p == 1:
        return float(mu[0]), float(sigma[0, 0])
    block = sigma[np.ix_(rest, rest)]
    cross = sigma[j, rest]
    try:
        # Solve against the conditioning block instead of inverting it.
        coef = np.linalg.solve(block, cross)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"conditioning block for coordinate {j} is singular") from exc
    mean = mu[j] + coef @ (w_rest - mu[rest])
    var = sigma[j, j] - coef @ cross
    if not var > 0:
        raise np.linalg.LinAlgError(
            f"non-positive conditional variance {var!r} for coordinate {j}")
    return float(mean), float(var)


def regression_weights(sigma):
    """Per-coordinate Gibbs regression weights for a fixed covariance.

    Returns ``(weights, sd)`` where row ``j`` of ``weights`` holds the
    coefficients of ``w - mu`` in the conditional mean of coordinate ``j``
    (zero on the diagonal) and ``sd[j]`` is its conditional standard
    deviation. One Cholesky factorisation serves all coordinates.
    """
    sigma = np.asarray(sigma, dtype=float)
    p = sigma.shape[0]
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("covariance is not positive definite") from exc
    linv = np.linalg.solve(chol, np.eye(p))
    prec = linv.T @ linv
    prec = 0.5 * (prec + prec.T)
    diag = np.diag(prec).copy()
    weights = -prec / diag[:, None]
    np.fill_diagonal(weights, 0.0)
    return weights, 1.0 / np.sqrt(diag)


def psd_repair(sigma, floor=1e-8, atol=1e-10):
    """Clip the eigenvalues of a symmetric matrix from below at ``floor``.

    A matrix whose spectrum already sits at or above ``floor`` is returned
    unchanged (as a copy).
    """
    sigma = np.array(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("psd_repair expects a square matrix")
    scale = max(1.0, float(np.max(np.abs(sigma)))) if sigma.size else 1.0
    if np.max(np.abs(sigma - sigma.T), initial=0.0) > atol * scale:
        raise ValueError("psd_repair: input is not symmetric")
    sigma = 0.5 * (sigma + sigma.T)
    if sigma.size == 0 or np.linalg.eigvalsh(sigma)[0] >= floor:
        return sigma
    vals, vecs = np.linalg.eigh(sigma)
    out = (vecs * np.maximum(vals, floor)) @ vecs.T
    out = 0.5 * (out + out.T)
    # Reconstruction rounding can leave the smallest eigenvalue a hair low.
    nudge = 4 * np.finfo(float).eps * max(1.0, float(np.abs(vals).max()))
    low = np.linalg.eigvalsh(out)[0]
    while low < floor:
        out[np.diag_indices_from(out)] += floor - low + nudge
        low = np.linalg.eigvalsh(out)[0]
    return out


def matrix_norms(a):
    """Frobenius and spectral norm of ``a`` as a ``(frobenius, spectral)`` pair."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0, 0.0
    return float(np.linalg.norm(a, "fro")), float(np.linalg.norm(a, 2))
