"""Weighted ridge regression and finite-difference gradients."""

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve


class SingularSystemError(ValueError):
    pass


def weighted_ridge(X, y, w=None, lam=0.0, fit_intercept=True):
    """Minimize ``sum_i w_i (y_i - x_i.beta - beta0)^2 + lam * ||beta||^2``.

    The intercept is not penalized. Solved through the normal equations
    with a Cholesky factorization.

    Returns:
        ``(beta, beta0)``; ``beta0`` is 0.0 when ``fit_intercept`` is False.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    w = np.ones(n) if w is None else np.asarray(w, dtype=float).ravel()
    if len(y) != n or len(w) != n:
        raise ValueError(f"row mismatch: X has {n} rows, y {len(y)}, w {len(w)}")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if fit_intercept:
        sw = w.sum()
        if sw <= 0:
            raise SingularSystemError("all weights are zero")
        x_bar = w @ X / sw
        y_bar = w @ y / sw
        Xc = X - x_bar
        yc = y - y_bar
    else:
        Xc, yc = X, y
    A = Xc.T @ (w[:, None] * Xc) + lam * np.eye(d)
    b = Xc.T @ (w * yc)
    scale = max(np.abs(np.diag(A)).max(initial=0.0), 1e-300)
    try:
        factor = cho_factor(A)
    except LinAlgError:
        raise SingularSystemError("normal equations are singular; use lam > 0") from None
    if np.min(np.abs(np.diag(factor[0]))) ** 2 < 1e-13 * scale:
        raise SingularSystemError("normal equations are numerically singular; use lam > 0")
    beta = cho_solve(factor, b)
    beta0 = float(y_bar - x_bar @ beta) if fit_intercept else 0.0
    return beta, beta0


def finite_diff_gradient(f, x, h=1e-4):
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        hi, lo = f(x + e), f(x - e)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError(f"non-finite function value while differencing coordinate {i}")
        grad.flat[i] = (hi - lo) / (2 * h)
    return grad
