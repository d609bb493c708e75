"""Adaptive Dormand-Prince 5(4) stepping with a rejection hook.

The right-hand side may raise :class:`InsufficientHistoryError` when a stage
needs a retarded time that is not yet recorded; the step is then rejected and
retried with half the step size. Every accepted step is reported through
``on_step(t, y, f)`` so the caller can extend its delay history before the
next step starts.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InsufficientHistoryError, SingularityError, StiffnessError

# Dormand-Prince tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = np.array(_A[6] + (0.0,))
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def dopri5(
    fun,
    t0,
    y0,
    t_end,
    rtol=1e-9,
    atol=1e-12,
    h0=None,
    max_step=math.inf,
    step_cap=None,
    on_step=None,
    min_step_ratio=1e-14,
    norm="rms",
):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end`` (either direction).

    ``step_cap(t, y)`` optionally bounds the next step (used to keep stage
    times behind the retarded horizon). ``norm="max"`` controls every
    component separately, for ensembles of independent members.
    Returns ``(t, y, stats)`` at ``t_end``.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    direction = 1.0 if t_end >= t0 else -1.0
    span = abs(t_end - t0)
    stats = {"accepted": 0, "rejected": 0, "history_rejections": 0, "evaluations": 0}
    if span == 0.0:
        return t, y, stats

    try:
        f = np.asarray(fun(t, y), dtype=float)
    except SingularityError as exc:
        exc.last_state = (t, y.copy())
        raise
    stats["evaluations"] += 1
    if h0 is None:
        scale = atol + rtol * np.abs(y)
        d0 = np.sqrt(np.mean((y / scale) ** 2))
        d1 = np.sqrt(np.mean((f / scale) ** 2))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        # an automatic first step never starts at the underflow floor; rejections shrink it if needed
        h0 = max(h0, 1e3 * min_step_ratio * span)
    h = min(abs(h0), span, max_step)
    k = np.empty((7, y.size))

    while direction * (t_end - t) > 0:
        cap = min(max_step, abs(t_end - t))
        if step_cap is not None:
            cap = min(cap, step_cap(t, y))
        h = min(h, cap)
        if h < min_step_ratio * max(abs(t), span):
            raise StiffnessError(f"step size underflow at t={t:.6g}", last_state=(t, y.copy()))
        hs = direction * h
        k[0] = f
        try:
            for s in range(1, 7):
                ys = y + hs * np.dot(_A[s], k[:s])
                k[s] = fun(t + _C[s] * hs, ys)
                stats["evaluations"] += 1
        except InsufficientHistoryError:
            stats["history_rejections"] += 1
            h *= 0.5
            continue
        except SingularityError as exc:
            exc.last_state = (t, y.copy())
            raise
        y_new = y + hs * np.dot(_B[:6], k[:6])
        err = hs * np.dot(_E, k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = err / scale
        err_norm = float(np.max(np.abs(ratio))) if norm == "max" else math.sqrt(float(np.mean(ratio**2)))
        if err_norm <= 1.0:
            t_new = t_end if h >= abs(t_end - t) else t + hs
            t, y, f = t_new, y_new, k[6].copy()
            stats["accepted"] += 1
            if on_step is not None:
                on_step(t, y, f)
            factor = 5.0 if err_norm == 0 else min(5.0, 0.9 * err_norm**-0.2)
        else:
            stats["rejected"] += 1
            factor = max(0.2, 0.9 * err_norm**-0.2)
        h *= factor
    return t, y, stats
