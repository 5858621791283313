"""Small numerical helpers shared across modules."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "NumericalError",
    "QuadratureError",
    "log_cosh",
    "logsumexp",
    "safeguarded_newton",
    "sech2",
]


class NumericalError(RuntimeError):
    """Raised when an inner numerical routine cannot deliver its contract."""


class QuadratureError(NumericalError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


def log_cosh(x):
    """log(cosh(x)) without overflow for large |x|."""
    x = np.abs(np.asarray(x, dtype=float))
    return x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)


def sech2(x):
    """1 - tanh(x)**2 evaluated directly, so it keeps relative accuracy in the tails."""
    x = np.abs(np.asarray(x, dtype=float))
    e = np.exp(-2.0 * x)
    return 4.0 * e / (1.0 + e) ** 2


def safeguarded_newton(fun, dfun, lo, hi, x0=None, tol=1e-12, maxiter=200):
    """Root of ``fun`` on ``[lo, hi]`` with ``fun(lo) <= 0 <= fun(hi)``.

    Works elementwise on arrays. A Newton step is taken whenever it stays
    inside the current bracket and at least halves the residual; otherwise
    the bracket is bisected. Returns ``(x, converged)``.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    lo, hi = np.broadcast_arrays(lo, hi)
    lo, hi = lo.copy(), hi.copy()
    x = 0.5 * (lo + hi) if x0 is None else np.array(np.broadcast_to(x0, lo.shape), dtype=float)
    r = np.asarray(fun(x), dtype=float)
    done = np.abs(r) <= tol
    prev = np.full(lo.shape, np.inf)
    for _ in range(maxiter):
        if np.all(done):
            break
        neg = r < 0
        lo = np.where(neg & ~done, x, lo)
        hi = np.where(~neg & ~done, x, hi)
        d = np.asarray(dfun(x), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - r / d
        ok = np.isfinite(step) & (step > lo) & (step < hi) & (np.abs(r) <= 0.5 * prev)
        new = np.where(ok, step, 0.5 * (lo + hi))
        x = np.where(done, x, new)
        prev = np.where(done, prev, np.abs(r))
        r = np.asarray(fun(x), dtype=float)
        width = hi - lo
        done = done | (np.abs(r) <= tol) | (width <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(x)))
    return x, done
