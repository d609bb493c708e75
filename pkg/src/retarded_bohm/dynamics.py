"""Guidance laws, trajectory integration and centre-of-mass observables.

Three guidance laws are available:

* ``NBT``: every particle reads the phase gradient at the common time t.
* ``RBT_EXACT``: particle i reads the other particle at its retarded time
  t_ij, solved from the recorded history (a state-dependent delay equation).
* ``RBT_FIRST_ORDER``: the in-plane equations expanded to first order in v/c,
  solved per evaluation as an exact 4x4 linear system in the velocities.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.constants as const

from .errors import DomainError, SingularityError
from .integrate import dopri5
from .quantum_state import SystemState, UnitSystem, WavefunctionModel, log_phase_gradient
from .retardation import TrajectoryHistory, solve_retarded_time

#: SI values of hbar, c and 1/(4 pi eps0).
SI_UNITS = UnitSystem(const.hbar, const.c, 1 / (4 * math.pi * const.epsilon_0))
#: the rounded magnitudes used for back-of-envelope estimates (hbar ~ 1e-34, c ~ 1e8).
ROUNDED_SI_UNITS = UnitSystem(1e-34, 1e8, 1e10)


class GuidanceMode(str, enum.Enum):
    NBT = "nbt"
    RBT_EXACT = "rbt_exact"
    RBT_FIRST_ORDER = "rbt_first_order"


@dataclass
class Trajectory:
    """Integrated trajectory: one history per particle plus step diagnostics."""

    model: WavefunctionModel
    mode: GuidanceMode
    histories: list
    t_start: float
    t_end: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        """Sample times at and after the start of the forward integration."""
        t = self.histories[0].times
        return t[t >= self.t_start]

    def positions(self) -> np.ndarray:
        """Array ``(n_times, n_particles, 3)`` of the forward samples."""
        mask = self.histories[0].times >= self.t_start
        return np.stack([h.positions[mask] for h in self.histories], axis=1)

    def velocities(self) -> np.ndarray:
        mask = self.histories[0].times >= self.t_start
        return np.stack([h.velocities[mask] for h in self.histories], axis=1)

    def cm_positions(self) -> np.ndarray:
        m = self.model.masses
        return np.einsum("i,tij->tj", m, self.positions()) / m.sum()

    def state_at(self, t) -> SystemState:
        pv = [h.interpolate(t) for h in self.histories]
        return SystemState(t, [p for p, _ in pv], [v for _, v in pv])

    def to_csv(self, path):
        """Write ``t``, per-particle ``x,y,z,vx,vy,vz`` then ``X_cm,Y_cm,Z_cm``."""
        header = ["t"]
        for k in range(1, len(self.histories) + 1):
            header += [f"{name}{k}" for name in ("x", "y", "z", "vx", "vy", "vz")]
        header += ["X_cm", "Y_cm", "Z_cm"]
        pos, vel, cm = self.positions(), self.velocities(), self.cm_positions()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k, t in enumerate(self.times):
                row = [t]
                for i in range(len(self.histories)):
                    row += [*pos[k, i], *vel[k, i]]
                row += list(cm[k])
                writer.writerow([repr(float(v)) for v in row])


# --------------------------------------------------------------------------- guidance laws


def nbt_velocities(model: WavefunctionModel, positions) -> np.ndarray:
    """Instantaneous guidance velocities ``(hbar/m_i) grad_i S/hbar`` at common time."""
    positions = positions.positions if isinstance(positions, SystemState) else np.asarray(positions, float)
    hbar = model.units.hbar
    return np.array([hbar / p.mass * log_phase_gradient(model, positions, i) for i, p in enumerate(model.particles)])


def rbt_velocities(model, histories, t, c=None, tol=None, positions=None, stats=None) -> np.ndarray:
    """Guidance velocities with every other particle read at its retarded time.

    ``positions`` are the current positions r_i(t); when omitted they are
    interpolated from ``histories``. ``stats`` (a dict) accumulates retarded
    solver iteration counts.
    """
    c = model.units.c if c is None else c
    if positions is None:
        positions = np.array([h.interpolate(t)[0] for h in histories])
    positions = np.asarray(positions, dtype=float)
    if math.isinf(c):
        return nbt_velocities(model, positions)
    hbar = model.units.hbar
    out = np.empty_like(positions)
    for i, particle in enumerate(model.particles):
        config = positions.copy()
        for j in range(len(model.particles)):
            if j == i:
                continue
            res = solve_retarded_time(histories[j], positions[i], t, c, tol)
            config[j] = res.retarded_position
            if stats is not None:
                stats["retarded_solves"] = stats.get("retarded_solves", 0) + 1
                stats["retarded_iterations"] = stats.get("retarded_iterations", 0) + res.iterations
                stats["max_retarded_iterations"] = max(stats.get("max_retarded_iterations", 0), res.iterations)
        out[i] = hbar / particle.mass * log_phase_gradient(model, config, i)
    return out


def _in_plane(model, positions):
    positions = positions.positions if isinstance(positions, SystemState) else np.asarray(positions, float)
    if any(k != 0.0 for k in model.K):
        raise DomainError("the first-order equations assume K = 0")
    x, y, z = positions[0] - positions[1]
    r = math.hypot(x, y)
    if r == 0.0:
        raise DomainError("coincident particle positions")
    if abs(z) > 1e-9 * r:
        raise DomainError("the first-order equations are derived in the theta = pi/2 plane")
    return x, y, r


def first_order_system(model: WavefunctionModel, positions, c):
    """Matrix and right-hand side of the first-order equations in (vx1, vy1, vx2, vy2)."""
    x, y, r = _in_plane(model, positions)
    m1, m2 = model.masses
    h = model.m_phi * model.units.hbar / r**2
    s = 0.0 if math.isinf(c) else 1.0 / (r * c)
    lag = 0.0 if math.isinf(c) else r / c
    A = np.array(
        [
            [m1, 0.0, -2 * h * y * s * x, -2 * h * y * s * y + h * lag],
            [0.0, m1, 2 * h * x * s * x - h * lag, 2 * h * x * s * y],
            [-2 * h * y * s * x, -2 * h * y * s * y + h * lag, m2, 0.0],
            [2 * h * x * s * x - h * lag, 2 * h * x * s * y, 0.0, m2],
        ]
    )
    b = np.array([-h * y, h * x, h * y, -h * x])
    return A, b


def first_order_velocities(state, c, model: WavefunctionModel) -> np.ndarray:
    """In-plane velocities from the first-order retarded equations, solved exactly."""
    A, b = first_order_system(model, state, c)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularityError(f"first-order velocity system is singular (cond = {cond:.3g})")
    w = np.linalg.solve(A, b)
    return np.array([[w[0], w[1], 0.0], [w[2], w[3], 0.0]])


def cm_velocity(state, masses) -> np.ndarray:
    velocities = state.velocities if isinstance(state, SystemState) else np.asarray(state, float)
    masses = np.asarray(masses, dtype=float).reshape(-1)
    return (masses[:, None] * velocities.reshape(-1, 3)).sum(axis=0) / masses.sum()


def cm_drift_rhs(state: SystemState, c, model: WavefunctionModel):
    """Centre-of-mass velocity components from the closed first-order drift formulas."""
    x, y, r = _in_plane(model, state)
    if math.isinf(c):
        return 0.0, 0.0
    hbar = model.m_phi * model.units.hbar
    sx, sy, _ = state.velocities[0] + state.velocities[1]
    proj = x * sx + y * sy
    M = model.total_mass
    vx = (2 * hbar / c * y / r**3 * proj - hbar / (c * r) * sy) / M
    vy = (-2 * hbar / c * x / r**3 * proj + hbar / (c * r) * sx) / M
    return vx, vy


# --------------------------------------------------------------------------- integration


def nbt_analytic_positions(model: WavefunctionModel, initial: SystemState, t) -> np.ndarray:
    """Exact NBT positions: rigid rotation of x1 - x2 about z plus uniform CM drift."""
    p0 = initial.positions
    m = model.masses
    M = m.sum()
    x0 = p0[0] - p0[1]
    rho2 = x0[0] ** 2 + x0[1] ** 2
    omega = model.units.hbar * model.m_phi / (model.reduced_mass * rho2)
    ang = omega * (t - initial.t)
    ca, sa = math.cos(ang), math.sin(ang)
    x = np.array([ca * x0[0] - sa * x0[1], sa * x0[0] + ca * x0[1], x0[2]])
    cm = (m[:, None] * p0).sum(axis=0) / M + model.units.hbar * np.asarray(model.K) / M * (t - initial.t)
    return np.array([cm + m[1] / M * x, cm - m[0] / M * x])


def seed_history(model: WavefunctionModel, initial: SystemState, t_seed, rtol=1e-10, atol=1e-12):
    """NBT histories on [t0 - t_seed, t0], integrated backward from the initial state."""
    c = model.units.c
    t0 = initial.t
    samples = []

    def rhs(t, y):
        return nbt_velocities(model, y.reshape(-1, 3)).ravel()

    y0 = initial.positions.ravel()
    samples.append((t0, y0.copy(), rhs(t0, y0)))
    dopri5(
        rhs,
        t0,
        y0,
        t0 - t_seed,
        rtol=rtol,
        atol=atol,
        max_step=t_seed / 4,
        on_step=lambda t, y, f: samples.append((t, y.copy(), f.copy())),
    )
    histories = [TrajectoryHistory(p, c) for p in model.particles]
    for t, y, f in reversed(samples):
        for i, h in enumerate(histories):
            h.append(t, y[3 * i : 3 * i + 3], f[3 * i : 3 * i + 3])
    return histories


def integrate(
    model: WavefunctionModel,
    initial: SystemState,
    mode,
    t_end,
    rtol=1e-10,
    atol=1e-12,
    max_step=math.inf,
    t_seed=None,
    retarded_tol=None,
) -> Trajectory:
    """Integrate the guidance law from ``initial`` to ``t_end``.

    For finite ``c`` the histories are first seeded on ``[t0 - t_seed, t0]``
    with the NBT flow (default ``t_seed = 4 * separation / c``). RBT steps are
    capped at 0.9 of the current light-travel time so every stage reads only
    recorded history; stages that still miss it are rejected and retried.
    """
    mode = GuidanceMode(mode)
    c = model.units.c
    if mode is not GuidanceMode.NBT and math.isinf(c):
        raise DomainError(f"{mode.value} requires a finite speed of light")
    n = len(model.particles)
    stats = {}

    if math.isinf(c):
        histories = [TrajectoryHistory(p, c) for p in model.particles]
        v0 = nbt_velocities(model, initial.positions)
        for i, h in enumerate(histories):
            h.append(initial.t, initial.positions[i], v0[i])
    else:
        sep = float(np.linalg.norm(initial.positions[0] - initial.positions[1]))
        histories = seed_history(model, initial, 4 * sep / c if t_seed is None else t_seed, rtol, atol)

    if mode is GuidanceMode.NBT:

        def rhs(t, y):
            return nbt_velocities(model, y.reshape(n, 3)).ravel()

        step_cap = None
    elif mode is GuidanceMode.RBT_FIRST_ORDER:

        def rhs(t, y):
            return first_order_velocities(y.reshape(n, 3), c, model).ravel()

        step_cap = None
    else:

        def rhs(t, y):
            return rbt_velocities(model, histories, t, c, retarded_tol, y.reshape(n, 3), stats).ravel()

        def step_cap(t, y):
            p = y.reshape(n, 3)
            return 0.9 * float(np.linalg.norm(p[0] - p[1])) / c

    def on_step(t, y, f):
        for i, h in enumerate(histories):
            h.append(t, y[3 * i : 3 * i + 3], f[3 * i : 3 * i + 3])

    _, _, step_stats = dopri5(
        rhs,
        initial.t,
        initial.positions.ravel(),
        t_end,
        rtol=rtol,
        atol=atol,
        max_step=max_step,
        step_cap=step_cap,
        on_step=on_step,
    )
    stats.update(step_stats)
    return Trajectory(model, mode, histories, initial.t, t_end, stats)


# --------------------------------------------------------------------------- estimates


def estimate_cm_speed(m, r, units: UnitSystem = SI_UNITS) -> float:
    """Order-of-magnitude self-acceleration speed hbar^2 / (m^2 c r^2)."""
    return units.hbar**2 / (m**2 * units.c * r**2)


def self_heating_temperature(v_cm, m, boltzmann=const.k) -> float:
    """Temperature from (1/2) m v^2 = (3/2) k_B T."""
    if v_cm < 0:
        raise DomainError("v_cm must be non-negative")
    return m * v_cm**2 / (3 * boltzmann)


def nbt_analytic_histories(model: WavefunctionModel, initial: SystemState, t_start, t_stop, dt, c=math.inf):
    """Histories sampled from the exact NBT motion on ``[t_start, t_stop]``."""
    histories = [TrajectoryHistory(p, c) for p in model.particles]
    n = max(2, int(math.ceil((t_stop - t_start) / dt)) + 1)
    for t in np.linspace(t_start, t_stop, n):
        pos = nbt_analytic_positions(model, initial, t)
        vel = nbt_velocities(model, pos)
        for i, h in enumerate(histories):
            h.append(t, pos[i], vel[i])
    return histories
