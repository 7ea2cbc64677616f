"""Slow, independent solvers used as test oracles."""
import itertools

import numpy as np


def glasso_dual_reference(s, lam, tol=1e-9, max_iters=200_000):
    """Projected gradient ascent on ``log det W`` over ``|W - S| <= lam`` off the diagonal.

    The diagonal of ``W`` is pinned to that of ``S``. Returns ``inv(W)``.
    """
    s = np.asarray(s, dtype=float)
    p = s.shape[0]
    off = ~np.eye(p, dtype=bool)

    def project(w):
        w = np.where(off, np.clip(w, s - lam, s + lam), s)
        return 0.5 * (w + w.T)

    def value(w):
        sign, logdet = np.linalg.slogdet(w)
        return logdet if sign > 0 else -np.inf

    w = project(np.diag(np.diag(s)))
    step = 1.0
    f = value(w)
    for _ in range(max_iters):
        grad = np.linalg.inv(w)
        while True:
            cand = project(w + step * grad)
            fc = value(cand)
            # Armijo condition for projected gradient
            if fc >= f + np.sum(grad * (cand - w)) - np.sum((cand - w) ** 2) / (2 * step):
                break
            step *= 0.5
        moved = np.abs(cand - w).max()
        w, f = cand, fc
        step *= 2.0
        if moved < tol:
            break
    omega = np.linalg.inv(w)
    return 0.5 * (omega + omega.T)


def simplex_min(c, a_ub, b_ub):
    """Minimise ``c'x`` s.t. ``A x <= b``, ``x >= 0`` with a two-phase Bland's-rule tableau.

    Returns ``(x, value)`` or ``None`` if infeasible.
    """
    c = np.asarray(c, dtype=float)
    a = np.asarray(a_ub, dtype=float).copy()
    b = np.asarray(b_ub, dtype=float).copy()
    m, n = a.shape
    neg = b < 0
    a[neg] *= -1
    b[neg] *= -1
    # columns: x (n), slack/surplus (m), artificial (m)
    slack = np.eye(m)
    slack[neg, neg] = -1.0
    tab = np.hstack([a, slack, np.eye(m), b[:, None]])
    basis = list(range(n + m, n + 2 * m))
    for i in range(m):
        if not neg[i]:
            basis[i] = n + i
    art = list(range(n + m, n + 2 * m))

    def pivot(r, col):
        tab[r] /= tab[r, col]
        for i in range(m):
            if i != r and tab[i, col] != 0:
                tab[i] -= tab[i, col] * tab[r]
        basis[r] = col

    def run(cost, allowed):
        eps = 1e-11
        while True:
            cb = cost[basis]
            reduced = cost[:-1] - cb @ tab[:, :-1]
            enter = next((j for j in allowed if reduced[j] < -eps), None)
            if enter is None:
                return
            col = tab[:, enter]
            ratios = [(tab[i, -1] / col[i], basis[i], i) for i in range(m) if col[i] > eps]
            if not ratios:
                raise ValueError("unbounded")
            best = min(r[0] for r in ratios)
            leave = min((r for r in ratios if r[0] <= best + 1e-13), key=lambda r: r[1])[2]
            pivot(leave, enter)

    cost1 = np.zeros(n + 2 * m + 1)
    cost1[art] = 1.0
    run(cost1, list(range(n + 2 * m)))
    if sum(tab[i, -1] for i in range(m) if basis[i] in art) > 1e-9:
        return None
    for i in range(m):
        if basis[i] in art:
            nz = [j for j in range(n + m) if abs(tab[i, j]) > 1e-11]
            if nz:
                pivot(i, nz[0])
    cost2 = np.zeros(n + 2 * m + 1)
    cost2[:n] = c
    run(cost2, list(range(n + m)))
    x = np.zeros(n + 2 * m)
    for i, j in enumerate(basis):
        x[j] = tab[i, -1]
    return x[:n], float(c @ x[:n])


def clime_split_problem(s, j, lam):
    p = s.shape[0]
    e = np.zeros(p)
    e[j] = 1.0
    a_ub = np.block([[s, -s], [-s, s]])
    b_ub = np.concatenate([lam + e, lam - e])
    return np.ones(2 * p), a_ub, b_ub


def clime_column_simplex(s, j, lam):
    c, a_ub, b_ub = clime_split_problem(s, j, lam)
    x, val = simplex_min(c, a_ub, b_ub)
    p = s.shape[0]
    return x[:p] - x[p:], val


def lp_vertex_min(c, a_ub, b_ub):
    """Minimum of ``c'x`` over ``A x <= b, x >= 0`` by enumerating every vertex."""
    m, n = a_ub.shape
    a_all = np.vstack([a_ub, -np.eye(n)])
    b_all = np.concatenate([b_ub, np.zeros(n)])
    best = np.inf
    for rows in itertools.combinations(range(m + n), n):
        sub = a_all[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b_all[list(rows)])
        if np.all(a_all @ x <= b_all + 1e-9):
            best = min(best, float(c @ x))
    return best
