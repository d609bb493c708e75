"""Bracketed Newton iteration, vectorised over independent scalar problems."""

from __future__ import annotations

import numpy as np

from .errors import SolverError


def safeguarded_newton(f, df, lo, hi, x0=None, xtol=1e-14, rtol=4e-16, maxiter=200):
    """Solve ``f(x) = 0`` elementwise on brackets ``[lo, hi]`` with ``f(lo) <= 0 <= f(hi)``.

    Newton steps that leave the current bracket fall back to bisection, so
    convergence is guaranteed for increasing ``f``. Works on scalars or arrays.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.array(x0, dtype=float), lo, hi)
    for _ in range(maxiter):
        fx = f(x)
        neg = fx < 0
        lo = np.where(neg, x, lo)
        hi = np.where(neg, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = fx / df(x)
        x_new = x - step
        outside = ~((x_new >= lo) & (x_new <= hi)) | ~np.isfinite(x_new)
        x_new = np.where(outside, 0.5 * (lo + hi), x_new)
        x_new = np.where(fx == 0, x, x_new)  # exact root: keep it
        done = np.abs(x_new - x) <= xtol + rtol * np.abs(x_new)
        x = x_new
        if np.all(done | (fx == 0)):
            return x if x.ndim else float(x)
    raise SolverError("safeguarded Newton did not converge", residual=float(np.max(np.abs(f(x)))))
