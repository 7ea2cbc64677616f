"""Sparse inverse covariance estimation: graphical lasso and CLIME."""
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import linprog

from .em import encode_matrix

GLASSO = "glasso"
CLIME = "clime"
METHODS = (GLASSO, CLIME)


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (final residual {residual:.3g})")
        self.residual = residual


class InfeasibleError(RuntimeError):
    pass


@njit(cache=True)
def _lasso_cd(v, u, lam, beta, tol, max_sweeps):
    """Minimise 0.5 b'Vb - u'b + lam |b|_1 by cyclic coordinate descent, in place."""
    m = beta.shape[0]
    vb = v @ beta
    for _ in range(max_sweeps):
        delta = 0.0
        for k in range(m):
            old = beta[k]
            r = u[k] - vb[k] + v[k, k] * old
            if r > lam:
                new = (r - lam) / v[k, k]
            elif r < -lam:
                new = (r + lam) / v[k, k]
            else:
                new = 0.0
            if new != old:
                step = new - old
                for i in range(m):
                    vb[i] += v[i, k] * step
                beta[k] = new
                delta = max(delta, abs(step))
        if delta < tol:
            return True
    return False


def glasso_objective(sigma_hat, omega, lam):
    """``tr(S Omega) - log det Omega + lam * sum_{i != j} |Omega_ij|``."""
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        return np.inf
    off = np.abs(omega).sum() - np.abs(np.diag(omega)).sum()
    return float(np.sum(sigma_hat * omega) - logdet + lam * off)


def glasso_kkt_residual(sigma_hat, omega, lam):
    """Largest violation of the graphical lasso optimality conditions."""
    w = np.linalg.inv(omega)
    grad = sigma_hat - w
    off = ~np.eye(omega.shape[0], dtype=bool)
    nz = off & (omega != 0)
    zero = off & (omega == 0)
    res = [np.abs(np.diag(grad)).max(initial=0.0)]
    if nz.any():
        res.append(np.abs(grad[nz] + lam * np.sign(omega[nz])).max())
    if zero.any():
        res.append(max(0.0, (np.abs(grad[zero]) - lam).max()))
    return float(max(res))


@dataclass
class _GlassoState:
    w: np.ndarray
    beta: np.ndarray


def _glasso(sigma_hat, lam, tol, max_iters, state=None):
    s = np.asarray(sigma_hat, dtype=float)
    p = s.shape[0]
    # W always restarts from S: a W carried over from another penalty can
    # leave the region where the block updates keep it positive definite.
    # Only the lasso coefficients are warm-started.
    w = s.copy()
    beta = np.zeros((p, max(p - 1, 0))) if state is None else state.beta.copy()
    if p == 1:
        return np.array([[1.0 / s[0, 0]]]), _GlassoState(w, beta), 0.0
    others = [np.r_[0:j, j + 1:p] for j in range(p)]
    residual = np.inf
    inner_tol = tol * 1e-2
    for it in range(max_iters):
        change = 0.0
        for j in range(p):
            idx = others[j]
            v = np.ascontiguousarray(w[np.ix_(idx, idx)])
            u = np.ascontiguousarray(s[idx, j])
            if lam == 0:
                beta[j] = np.linalg.solve(v, u)
            else:
                b = np.ascontiguousarray(beta[j])
                _lasso_cd(v, u, lam, b, inner_tol, 100_000)
                beta[j] = b
            w12 = v @ beta[j]
            change = max(change, float(np.abs(w12 - w[idx, j]).max()))
            w[idx, j] = w12
            w[j, idx] = w12
        if not np.isfinite(change):
            raise ConvergenceError("graphical lasso diverged", np.inf)
        if change < tol * 0.1 or it == max_iters - 1:
            omega = _omega_from_beta(w, beta, others)
            try:
                residual = glasso_kkt_residual(s, omega, lam)
            except np.linalg.LinAlgError:
                residual = np.inf
            if residual <= tol:
                return omega, _GlassoState(w, beta), residual
    raise ConvergenceError(f"graphical lasso did not converge in {max_iters} iterations",
                           residual)


def _omega_from_beta(w, beta, others):
    p = w.shape[0]
    omega = np.zeros((p, p))
    for j in range(p):
        idx = others[j]
        d = 1.0 / (w[j, j] - w[idx, j] @ beta[j])
        omega[j, j] = d
        omega[idx, j] = -beta[j] * d
    return 0.5 * (omega + omega.T)


def glasso_solve(sigma_hat, lam, tol=1e-8, max_iters=500, state=None, return_state=False):
    """Graphical lasso with an unpenalised diagonal.

    Blockwise coordinate descent on the columns of the covariance estimate;
    each column is a lasso problem solved by cyclic coordinate descent. On
    return the optimality-condition residual is at most ``tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iters`` passes do not reach ``tol``.
    """
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    omega, state, _ = _glasso(sigma_hat, float(lam), tol, max_iters, state)
    return (omega, state) if return_state else omega


def clime_column(sigma_hat, j, lam, tol=1e-9):
    """Minimise ``|b|_1`` subject to ``|S b - e_j|_inf <= lam`` as a linear program."""
    s = np.asarray(sigma_hat, dtype=float)
    p = s.shape[0]
    e = np.zeros(p)
    e[j] = 1.0
    a_ub = np.block([[s, -s], [-s, s]])
    b_ub = np.concatenate([lam + e, lam - e])
    res = linprog(np.ones(2 * p), A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": tol,
                           "dual_feasibility_tolerance": tol})
    if res.status != 0:
        raise InfeasibleError(f"CLIME column {j}: {res.message}")
    return res.x[:p] - res.x[p:]


def symmetrize_min(omega):
    """Keep, for each pair, whichever of ``Omega_ij`` and ``Omega_ji`` is smaller in magnitude."""
    take = np.abs(omega) <= np.abs(omega.T)
    return np.where(take, omega, omega.T)


def clime_solve(sigma_hat, lam, symmetrize=True):
    """Constrained L1 minimisation estimate of the precision matrix.

    Each column solves its own linear program; the columns satisfy
    ``|S Omega - I|_max <= lam``. With ``symmetrize`` the smaller-magnitude
    entry of each symmetric pair is kept, which may break that bound.
    """
    s = np.asarray(sigma_hat, dtype=float)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    omega = np.column_stack([clime_column(s, j, lam) for j in range(s.shape[0])])
    return symmetrize_min(omega) if symmetrize else omega


def off_diagonal_max(sigma_hat):
    s = np.asarray(sigma_hat, dtype=float)
    if s.shape[0] < 2:
        return 0.0
    return float(np.abs(s[~np.eye(s.shape[0], dtype=bool)]).max())


def default_lambdas(sigma_hat, n=20, ratio=0.01):
    """Log-spaced grid from the largest off-diagonal magnitude down to ``ratio`` of it."""
    top = off_diagonal_max(sigma_hat)
    if top == 0:
        return np.zeros(1)
    return np.geomspace(top, ratio * top, n)


@dataclass
class PrecisionPath:
    lambdas: np.ndarray
    omegas: list
    method: str
    raw: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.lambdas)

    def support_sizes(self, atol=0.0):
        """Number of nonzero off-diagonal entries at each lambda."""
        return [int(np.sum((np.abs(o) > atol) & ~np.eye(o.shape[0], dtype=bool)))
                for o in self.omegas]


def precision_path(sigma_hat, lambdas, method=GLASSO, tol=1e-8, max_iters=500):
    """Sparse precision estimates along a descending grid of penalties.

    The graphical lasso reuses the previous solution as its starting point.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    lambdas = np.asarray(lambdas, dtype=float).reshape(-1)
    if np.any(np.diff(lambdas) > 0):
        raise ValueError("lambdas must be sorted in descending order")
    omegas, raw = [], []
    state = None
    for lam in lambdas:
        if method == GLASSO:
            omega, state = glasso_solve(sigma_hat, lam, tol, max_iters, state, return_state=True)
            omegas.append(omega)
        else:
            cols = clime_solve(sigma_hat, lam, symmetrize=False)
            raw.append(cols)
            omegas.append(symmetrize_min(cols))
    return PrecisionPath(lambdas, omegas, method, raw)


def write_matrix(a, path, **meta):
    doc = dict(meta)
    doc["matrix"] = encode_matrix(a)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_matrix(path):
    from .em import ModelFormatError, decode_matrix

    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return decode_matrix(doc["matrix"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: cannot read matrix: {exc}") from None


def write_edges(omega, path, names=None):
    p = omega.shape[0]
    names = names or [str(i) for i in range(p)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["i", "j", "name_i", "name_j", "value"])
        for i in range(p):
            for j in range(i + 1, p):
                if omega[i, j] != 0:
                    out.writerow([i, j, names[i], names[j], repr(float(omega[i, j]))])


def export_path(path, out_dir, names=None):
    """Write one matrix file and one edge list per lambda plus ``index.csv``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "index.csv"), "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["lambda", "matrix", "edges", "support"])
        for k, (lam, omega) in enumerate(zip(path.lambdas, path.omegas)):
            mname, ename = f"omega_{k:03d}.json", f"edges_{k:03d}.csv"
            write_matrix(omega, os.path.join(out_dir, mname), method=path.method,
                         **{"lambda": float(lam)})
            write_edges(omega, os.path.join(out_dir, ename), names)
            out.writerow([repr(float(lam)), mname, ename, path.support_sizes()[k]])
