"""Energy bookkeeping: phase-rate energy, the kinetic + V + Q split, and its retarded variant.

The retarded classical potential uses Lienard-Wiechert potentials of each
particle evaluated at the other particle's current position. The printed
pair form ``q1 phi(x1) + q2 phi(x2) - q1 A(x1).v1 - q2 A(x2).v2`` counts
the pair interaction at both endpoints; ``convention="verbatim"`` keeps that
(static limit 2 k q1 q2 / r), ``convention="half-sum"`` halves it (static
limit k q1 q2 / r).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import GuidanceMode, nbt_velocities, rbt_velocities
from .errors import DomainError, SingularityError
from .quantum_state import (
    NODE_FLOOR,
    WavefunctionModel,
    amplitude_density,
    classical_potential,
    evaluate_psi,
    quantum_potential,
    quantum_potential_terms,
)
from .retardation import solve_retarded_time

CONVENTIONS = ("verbatim", "half-sum")
ENERGY_COLUMNS = ("t", "kinetic", "V", "Q", "total", "mode", "convention")


@dataclass(frozen=True)
class EnergyLedger:
    kinetic: float
    classical_potential: float
    quantum_potential: float
    phase_rate: float
    mode: GuidanceMode
    convention: str = "instantaneous"
    notes: tuple = field(default=())

    @property
    def total(self) -> float:
        return self.kinetic + self.classical_potential + self.quantum_potential

    def row(self, t):
        return [t, self.kinetic, self.classical_potential, self.quantum_potential, self.total,
                self.mode.value, self.convention]


@dataclass(frozen=True)
class RetardedPotentials:
    scalar: float
    vector: np.ndarray


def _positions(positions):
    return positions.positions if hasattr(positions, "positions") else np.asarray(positions, dtype=float)


def phase_rate_energy(model: WavefunctionModel, positions, method="analytic", t=0.0, dt=1e-4) -> float:
    """i hbar d/dt ln(psi/|psi|) at the particle positions.

    ``method="numeric"`` differentiates the phase of :func:`evaluate_psi`
    by central differences in ``t``.
    """
    p = _positions(positions)
    if amplitude_density(model, p) < NODE_FLOOR:
        raise SingularityError("phase undefined at a node of psi")
    if method == "analytic":
        return model.E
    if method == "numeric":
        up, dn = evaluate_psi(model, p, t + dt), evaluate_psi(model, p, t - dt)
        dphase = math.atan2((up * dn.conjugate()).imag, (up * dn.conjugate()).real)
        return -model.units.hbar * dphase / (2 * dt)
    raise ValueError(f"unknown method {method!r}")


def _kinetic(model, velocities):
    return 0.5 * float(sum(p.mass * np.dot(v, v) for p, v in zip(model.particles, velocities)))


def nbt_total_energy(model: WavefunctionModel, positions) -> EnergyLedger:
    """Kinetic + Coulomb + quantum potential with instantaneous guidance velocities."""
    p = _positions(positions)
    v = nbt_velocities(model, p)
    return EnergyLedger(
        _kinetic(model, v),
        classical_potential(model, p),
        quantum_potential(model, p),
        phase_rate_energy(model, p),
        GuidanceMode.NBT,
    )


def lienard_wiechert(history_source, x, t, c, coulomb_constant=1.0, tol=None) -> RetardedPotentials:
    """Retarded scalar and vector potential of the point charge recorded in ``history_source``."""
    x = np.asarray(x, dtype=float)
    q = history_source.particle.charge
    res = solve_retarded_time(history_source, x, t, c, tol)
    sep = x - res.retarded_position
    R = float(np.linalg.norm(sep))
    if R == 0.0:
        raise SingularityError("field point lies on the source trajectory")
    if math.isinf(c):
        return RetardedPotentials(coulomb_constant * q / R, np.zeros(3))
    kappa = 1.0 - float(np.dot(sep / R, res.retarded_velocity)) / c
    scalar = coulomb_constant * q / (kappa * R)
    return RetardedPotentials(scalar, scalar * res.retarded_velocity / c**2)


def pair_potential(model: WavefunctionModel, positions, convention="verbatim") -> float:
    """Instantaneous counterpart of :func:`retarded_classical_potential` for a convention."""
    _check_convention(convention)
    V = classical_potential(model, _positions(positions))
    return 2 * V if convention == "verbatim" else V


def _check_convention(convention):
    if convention not in CONVENTIONS:
        raise DomainError(f"convention must be one of {CONVENTIONS}, got {convention!r}")


def retarded_classical_potential(model: WavefunctionModel, histories, t, c=None, convention="verbatim") -> float:
    """Sum over particles of q_i (phi_j(x_i) - A_j(x_i) . v_i), fields of the other particle only."""
    _check_convention(convention)
    c = model.units.c if c is None else c
    k = model.units.coulomb_constant
    states = [h.interpolate(t) for h in histories]
    total = 0.0
    for i, particle in enumerate(model.particles):
        x_i, v_i = states[i]
        for j, hist_j in enumerate(histories):
            if j == i:
                continue
            pot = lienard_wiechert(hist_j, x_i, t, c, k)
            total += particle.charge * (pot.scalar - float(np.dot(pot.vector, v_i)))
    return total if convention == "verbatim" else 0.5 * total


def retarded_configurations(model, histories, t, c=None):
    """For each particle i the configuration {x_i = r_i(t), x_j = r_j(t_ij)}."""
    c = model.units.c if c is None else c
    current = np.array([h.interpolate(t)[0] for h in histories])
    configs = []
    for i in range(len(histories)):
        config = current.copy()
        for j, hist_j in enumerate(histories):
            if j != i:
                config[j] = solve_retarded_time(hist_j, current[i], t, c).retarded_position
        configs.append(config)
    return configs


def retarded_quantum_potential(model: WavefunctionModel, histories, t, c=None) -> float:
    """Sum of each particle's quantum-potential term, each at its own retarded configuration."""
    configs = retarded_configurations(model, histories, t, c)
    return float(sum(quantum_potential_terms(model, cfg)[i] for i, cfg in enumerate(configs)))


def rbt_total_energy(model: WavefunctionModel, histories, t, c=None, convention="verbatim") -> EnergyLedger:
    """Kinetic energy of the retarded guidance velocities + retarded V + retarded Q."""
    c = model.units.c if c is None else c
    current = np.array([h.interpolate(t)[0] for h in histories])
    v = rbt_velocities(model, histories, t, c, positions=current)
    notes = ()
    if convention == "verbatim":
        notes = ("verbatim pair sum counts the Coulomb interaction at both particles",)
    return EnergyLedger(
        _kinetic(model, v),
        retarded_classical_potential(model, histories, t, c, convention),
        retarded_quantum_potential(model, histories, t, c),
        phase_rate_energy(model, current),
        GuidanceMode.NBT if math.isinf(c) else GuidanceMode.RBT_EXACT,
        convention,
        notes,
    )


def write_energy_csv(path, rows):
    """``rows`` are ``(t, EnergyLedger)`` pairs."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ENERGY_COLUMNS)
        for t, ledger in rows:
            writer.writerow([v if isinstance(v, str) else repr(float(v)) for v in ledger.row(t)])
