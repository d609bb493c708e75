"""Trajectory histories and the implicit retarded-time equation.

A :class:`TrajectoryHistory` stores accepted (t, position, velocity) samples
of one particle and interpolates them with cubic Hermite polynomials. The
retarded time of particle j seen from a field point x at time t is the
unique tau <= t with

    tau = t - |x - r_j(tau)| / c,

solved by fixed-point iteration (a contraction with factor |v_j|/c) with a
bisection fallback.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    ExtrapolationError,
    InsufficientHistoryError,
    OrderingError,
    SolverError,
)
from .quantum_state import ParticleSpec, SystemState

HISTORY_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz")


class TrajectoryHistory:
    """Time-ordered samples of one particle with cubic Hermite interpolation."""

    def __init__(self, particle: ParticleSpec, c: float = math.inf, capacity: int = 256):
        self.particle = particle
        self.c = c
        self._t = []
        self._pos = np.empty((capacity, 3))
        self._vel = np.empty((capacity, 3))

    def __len__(self):
        return len(self._t)

    @property
    def times(self) -> np.ndarray:
        return np.array(self._t)

    @property
    def positions(self) -> np.ndarray:
        return self._pos[: len(self._t)].copy()

    @property
    def velocities(self) -> np.ndarray:
        return self._vel[: len(self._t)].copy()

    @property
    def t_first(self) -> float:
        return self._t[0]

    @property
    def t_last(self) -> float:
        return self._t[-1]

    def append(self, t, position, velocity) -> "TrajectoryHistory":
        t = float(t)
        if self._t and not t > self._t[-1]:
            raise OrderingError(f"sample time {t!r} does not follow last time {self._t[-1]!r}")
        velocity = np.asarray(velocity, dtype=float)
        if not math.isinf(self.c) and float(np.linalg.norm(velocity)) >= self.c:
            raise DomainError(f"superluminal sample |v| = {np.linalg.norm(velocity):.6g} >= c = {self.c:g}")
        n = len(self._t)
        if n == self._pos.shape[0]:
            self._pos = np.concatenate([self._pos, np.empty_like(self._pos)])
            self._vel = np.concatenate([self._vel, np.empty_like(self._vel)])
        self._pos[n] = position
        self._vel[n] = velocity
        self._t.append(t)
        return self

    def interpolate(self, t):
        """Position and velocity at ``t``; raises outside the recorded span."""
        times = self._t
        if not times or t < times[0] or t > times[-1]:
            span = f"[{times[0]:.6g}, {times[-1]:.6g}]" if times else "(empty)"
            raise ExtrapolationError(f"t = {t!r} is outside the history span {span}")
        k = bisect.bisect_left(times, t)
        if times[k] == t:
            return self._pos[k].copy(), self._vel[k].copy()
        t0, t1 = times[k - 1], times[k]
        h = t1 - t0
        s = (t - t0) / h
        s2, s3 = s * s, s * s * s
        p0, p1 = self._pos[k - 1], self._pos[k]
        v0, v1 = self._vel[k - 1], self._vel[k]
        pos = (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * h * v0 + (3 * s2 - 2 * s3) * p1 + (s3 - s2) * h * v1
        vel = (6 * s2 - 6 * s) / h * (p0 - p1) + (3 * s2 - 4 * s + 1) * v0 + (3 * s2 - 2 * s) * v1
        return pos, vel

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            for t, p, v in zip(self._t, self._pos, self._vel):
                writer.writerow([_fmt(t), *map(_fmt, p), *map(_fmt, v)])

    @classmethod
    def from_csv(cls, path, particle: ParticleSpec, c: float = math.inf) -> "TrajectoryHistory":
        hist = cls(particle, c)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != HISTORY_COLUMNS:
                raise ValueError(f"unexpected history header {header}")
            for row in reader:
                vals = [float(v) for v in row]
                hist.append(vals[0], vals[1:4], vals[4:7])
        return hist


def _fmt(x) -> str:
    return repr(float(x))


def append_sample(history: TrajectoryHistory, t, position, velocity) -> TrajectoryHistory:
    return history.append(t, position, velocity)


def interpolate(history: TrajectoryHistory, t):
    return history.interpolate(t)


@dataclass(frozen=True)
class RetardedTimeResult:
    t_ij: float
    retarded_position: np.ndarray
    retarded_velocity: np.ndarray
    iterations: int
    residual: float


def solve_retarded_time(history_j, x_i, t, c, tol=None, max_iter=64) -> RetardedTimeResult:
    """Retarded time of the particle recorded in ``history_j`` as seen from ``x_i`` at ``t``.

    ``tol`` defaults to 1e-12 of the light-travel time (floored at a few ulps
    of ``t``).
    """
    x_i = np.asarray(x_i, dtype=float)
    if math.isinf(c):
        pos, vel = history_j.interpolate(t)
        return RetardedTimeResult(t, pos, vel, 0, 0.0)
    t_first, t_last = history_j.t_first, history_j.t_last

    def g(tau):
        pos, vel = history_j.interpolate(tau)
        return tau - t + math.dist(x_i, pos) / c, pos, vel

    tau = min(t, t_last)
    pos, vel = history_j.interpolate(tau)
    delay = math.dist(x_i, pos) / c
    if tol is None:
        tol = max(1e-12 * delay, 4 * np.finfo(float).eps * abs(t))
    if delay == 0.0:
        raise DomainError("field point coincides with the source position")

    iterations = 0
    tau_prev = tau
    tau = t - delay
    converged = False
    while iterations < max_iter:
        iterations += 1
        if tau > t_last:
            if g(t_last)[0] < 0:
                raise InsufficientHistoryError(
                    f"retarded time near {tau:.12g} lies after the last sample {t_last:.12g}"
                )
            tau = t_last
        elif tau < t_first:
            if g(t_first)[0] > 0:
                raise InsufficientHistoryError(
                    f"retarded time near {tau:.12g} precedes the first sample {t_first:.12g}"
                )
            tau = t_first
        if abs(tau - tau_prev) <= tol:
            converged = True
            break
        pos, vel = history_j.interpolate(tau)
        tau_prev, tau = tau, t - math.dist(x_i, pos) / c

    res, pos, vel = g(tau)
    if not converged or abs(res) > tol:
        # the delay can exceed the present-distance delay by 1/(1 - v/c); widen until bracketed
        lo = max(t_first, t - 4 * delay)
        while lo > t_first and g(lo)[0] > 0:
            lo = max(t_first, t - 2 * (t - lo))
        tau, iters = _bisect_retarded(g, lo, min(t, t_last), tol)
        iterations += iters
        res, pos, vel = g(tau)
        if abs(res) > max(tol, 8 * np.finfo(float).eps * abs(t)):
            raise SolverError("retarded-time solve failed", residual=abs(res))
    return RetardedTimeResult(tau, pos, vel, iterations, abs(res))


def _bisect_retarded(g, lo, hi, tol):
    g_lo, g_hi = g(lo)[0], g(hi)[0]
    if g_lo > 0 or g_hi < 0:
        raise InsufficientHistoryError("no retarded-time root inside the recorded history")
    for k in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid)[0] < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            return 0.5 * (lo + hi), k + 1
    return 0.5 * (lo + hi), 200


def first_order_retardation(state: SystemState, c: float):
    """Light-travel distances (a, a_tilde) expanded to first order in v/c.

    ``t_12 = t - a/c`` and ``t_21 = t - a_tilde/c``; x and y are components of
    the relative coordinate x1 - x2, velocities are taken at time t.
    """
    x, y, _ = state.positions[0] - state.positions[1]
    r = float(np.linalg.norm(state.positions[0] - state.positions[1]))
    (vx1, vy1, _), (vx2, vy2, _) = state.velocities[:2]
    if math.isinf(c):
        return r, r
    a = r + (x * vx2 + y * vy2) / c
    a_tilde = r - (x * vx1 + y * vy1) / c
    return a, a_tilde
