"""Linear quantile regression solved exactly as a linear program."""

import numpy as np
from scipy.optimize import linprog


def quantile_regression(X, y, tau, penalty=0.0):
    """Minimise ``sum pinball_tau(y - X b) + sum penalty_k |b_k|`` exactly.

    ``penalty`` is a scalar or one weight per column (0 leaves a column
    unpenalised, e.g. an intercept). The dual problem

        max y'a  s.t.  tau - 1 <= a <= tau,  |X_k'a| <= penalty_k

    has one variable per row and one constraint per column, so HiGHS solves
    it quickly; the coefficients are the multipliers of the column constraints.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    pen = np.broadcast_to(np.asarray(penalty, dtype=float), (p,))
    if np.any(pen < 0):
        raise ValueError("penalties must be non-negative")
    free = pen == 0
    kw = {}
    if np.any(~free):
        Xp = X[:, ~free].T
        kw.update(A_ub=np.vstack([Xp, -Xp]), b_ub=np.concatenate([pen[~free], pen[~free]]))
    if np.any(free):
        kw.update(A_eq=X[:, free].T, b_eq=np.zeros(int(free.sum())))
    res = linprog(-y, bounds=(tau - 1.0, tau), method="highs", **kw)
    if res.status != 0:
        raise FloatingPointError(f"quantile regression solve failed: {res.message}")
    b = np.empty(p)
    if np.any(~free):
        k = int((~free).sum())
        m = res.ineqlin.marginals
        b[~free] = m[k:] - m[:k]
    if np.any(free):
        b[free] = -res.eqlin.marginals
    return b
