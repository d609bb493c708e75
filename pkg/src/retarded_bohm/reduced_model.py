"""Equal-mass, in-plane (theta = pi/2), K = 0 reduction of the first-order dynamics.

With alpha = hbar / (m c) the polar coordinates of x1 - x2 obey

    r'   = -2c / (1 - r^2/alpha^2)
    phi' = [(2 alpha c / r) cos(phi) - r' (sin(phi) - (alpha/r) cos(phi))]
           / (r cos(phi) - alpha sin(phi))

whose solution is the cubic r^3/(3 alpha^2) - r = const + 2ct together with
the spiral r = r0 + alpha phi.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError
from .integrate import dopri5
from .roots import safeguarded_newton

#: relative guard keeping r away from alpha, where r' diverges.
R_GUARD = 1e-6
#: relative size of r cos(phi) - alpha sin(phi) below which the printed phi' is ill-conditioned.
POLE_GUARD = 1e-6


@dataclass(frozen=True)
class ReducedState:
    r: float
    phi: float
    alpha: float
    c: float

    def __post_init__(self):
        if not self.alpha > 0 or not self.c > 0:
            raise DomainError("alpha and c must be positive")
        if not np.all(np.asarray(self.r) > self.alpha):
            raise DomainError(f"need r > alpha (r={self.r!r}, alpha={self.alpha!r})")

    @classmethod
    def from_mass(cls, r, phi, hbar, m, c):
        return cls(r, phi, hbar / (m * c), c)


def radial_rate(r, alpha, c):
    r = np.asarray(r, dtype=float)
    return -2.0 * c / (1.0 - r**2 / alpha**2)


def reduced_rhs(state: ReducedState, on_pole: str = "raise", r_guard=R_GUARD, pole_guard=POLE_GUARD):
    """Return ``(r', phi')`` exactly as printed; works elementwise on arrays.

    The phi' quotient has a removable zero-over-zero where
    ``r cos(phi) = alpha sin(phi)``. Within ``pole_guard * r`` of it the
    default raises :class:`SingularityError`; ``on_pole="limit"`` substitutes
    the limiting value ``r'/alpha`` instead, which is what long integrations
    through the pole need.
    """
    r = np.asarray(state.r, dtype=float)
    phi = np.asarray(state.phi, dtype=float)
    alpha, c = state.alpha, state.c
    if np.any(r <= alpha * (1 + r_guard)):
        raise SingularityError("r is within the guard band above alpha")
    rdot = radial_rate(r, alpha, c)
    cp, sp = np.cos(phi), np.sin(phi)
    den = r * cp - alpha * sp
    near = np.abs(den) < pole_guard * r
    if np.any(near) and on_pole == "raise":
        raise SingularityError("phi' denominator r cos(phi) - alpha sin(phi) vanishes")
    safe_den = np.where(near, 1.0, den)
    phidot = ((2 * alpha * c / r) * cp - rdot * (sp - alpha / r * cp)) / safe_den
    phidot = np.where(near, rdot / alpha, phidot)
    if phidot.ndim == 0:
        return float(rdot), float(phidot)
    return rdot, phidot


def first_integral(r, t, alpha, c):
    """r^3/(3 alpha^2) - r - 2 c t, constant along exact reduced trajectories."""
    r = np.asarray(r, dtype=float)
    return r**3 / (3 * alpha**2) - r - 2 * c * np.asarray(t, dtype=float)


def analytic_r(t, r0, alpha, c, r_prev=None, tol=1e-15):
    """Root of the cubic on the branch continuous from ``r0`` (vectorised in ``t`` and ``r0``).

    ``r_prev`` seeds Newton from an earlier solution when stepping along t.
    """
    t = np.asarray(t, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    if np.any(r0 <= alpha):
        raise DomainError("analytic_r needs r0 > alpha")
    if np.any(t < 0):
        raise DomainError("analytic_r needs t >= 0")
    target = first_integral(r0, 0.0, alpha, c) + 2 * c * t
    # f is increasing on r > alpha; the cubic term bounds the root from above
    hi = np.maximum(r0, np.cbrt(3 * alpha**2 * (target + r0))) * 2.0 + alpha
    lo = np.broadcast_to(r0, np.broadcast(r0, t).shape)

    def f(r):
        return r**3 / (3 * alpha**2) - r - target

    def df(r):
        return r**2 / alpha**2 - 1.0

    root = safeguarded_newton(f, df, lo, hi, x0=r_prev if r_prev is not None else lo, xtol=0.0, rtol=tol)
    return root if np.ndim(root) else float(root)


def analytic_phi(r, r0, alpha, phi0=0.0):
    """Spiral law: phi = phi0 + (r - r0)/alpha."""
    r = np.asarray(r, dtype=float)
    if np.any(r < np.asarray(r0) - 1e-12 * np.abs(r0)):
        raise DomainError("analytic_phi needs r >= r0")
    out = phi0 + (r - r0) / alpha
    return out if np.ndim(out) else float(out)


def expansion_time(r0, r1, alpha, c):
    """Time for r to grow from ``r0`` to ``r1``."""
    if not r1 >= r0 > alpha:
        raise DomainError("expansion_time needs r1 >= r0 > alpha")
    return ((r1**3 - r0**3) / (3 * alpha**2) - (r1 - r0)) / (2 * c)


@dataclass
class ReducedRun:
    t: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    alpha: float
    c: float
    stats: dict

    @property
    def conserved_residual(self) -> np.ndarray:
        """Relative drift of the first integral from its initial value."""
        I = first_integral(self.r, self.t, self.alpha, self.c)
        return (I - I[0]) / abs(I[0])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "r", "phi", "conserved_residual"])
            for row in zip(self.t, self.r, self.phi, self.conserved_residual):
                writer.writerow([repr(float(v)) for v in row])


def integrate_reduced(state: ReducedState, t_end, rtol=1e-13, atol=1e-14, max_step=math.inf) -> ReducedRun:
    """Adaptive integration of the printed (r', phi') system through removable poles."""
    alpha, c = state.alpha, state.c
    ts, rs, phis = [0.0], [float(state.r)], [float(state.phi)]

    def rhs(t, y):
        rdot, phidot = reduced_rhs(ReducedState(y[0], y[1], alpha, c), on_pole="limit")
        return np.array([rdot, phidot])

    def on_step(t, y, f):
        ts.append(t)
        rs.append(y[0])
        phis.append(y[1])

    _, _, stats = dopri5(rhs, 0.0, [state.r, state.phi], t_end, rtol, atol, max_step=max_step, on_step=on_step)
    return ReducedRun(np.array(ts), np.array(rs), np.array(phis), alpha, c, stats)


def integrate_reduced_ensemble(r, phi, alpha, c, t_end, rtol=1e-10, atol=1e-12):
    """Advance many independent reduced states together (shared adaptive step)."""
    r = np.asarray(r, dtype=float)
    n = r.size
    if n == 0 or t_end == 0:
        return r.copy(), np.asarray(phi, dtype=float).copy()

    def rhs(t, y):
        rdot, phidot = reduced_rhs(ReducedState(y[:n], y[n:], alpha, c), on_pole="limit")
        return np.concatenate([rdot, phidot])

    _, y, _ = dopri5(rhs, 0.0, np.concatenate([r, phi]), t_end, rtol, atol, norm="max")
    return y[:n], y[n:]
