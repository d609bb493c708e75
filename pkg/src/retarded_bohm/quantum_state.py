"""Closed-form two-body hydrogen-like wavefunction and the fields derived from it.

The state is

    psi(x1, x2, t) = Phi(x1 - x2) * exp(i K . X_cm) * exp(-i E t / hbar)
    Phi(x)         = R_nl(r) * N_lm * P_l^|m|(cos theta) * exp(i m phi)

with (r, theta, phi) the spherical coordinates of the relative vector
x = x1 - x2 and R_nl the normalised hydrogen-like radial function built
on the reduced mass and the Coulomb coupling ``-k q1 q2``.

Default units are dimensionless (hbar = m = 1) with the speed of light a
free parameter; ``c = inf`` selects the instantaneous (nonrelativistic)
limit everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly
from scipy.special import eval_genlaguerre

from .errors import DomainError, SingularityError

#: |psi|^2 below this raises instead of producing a huge quantum potential.
NODE_FLOOR = 1e-30
#: relative cylindrical radius below which the azimuthal phase gradient is singular.
AXIS_FLOOR = 1e-12


@dataclass(frozen=True)
class UnitSystem:
    """Values of hbar, c and the Coulomb constant; ``c = math.inf`` is the NBT limit."""

    hbar: float = 1.0
    c: float = math.inf
    coulomb_constant: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "c", "coulomb_constant"):
            value = getattr(self, name)
            if not value > 0:
                raise DomainError(f"{name} must be strictly positive, got {value!r}")

    @property
    def instantaneous(self) -> bool:
        return math.isinf(self.c)

    def with_c(self, c: float) -> "UnitSystem":
        return UnitSystem(self.hbar, c, self.coulomb_constant)


@dataclass(frozen=True)
class ParticleSpec:
    mass: float
    charge: float = 0.0
    index: int = 0

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError(f"particle mass must be positive, got {self.mass!r}")


def _default_particles():
    return (ParticleSpec(1.0, 1.0, 0), ParticleSpec(1.0, -1.0, 1))


@dataclass(frozen=True)
class WavefunctionModel:
    """Stationary two-body state ``(n, l, m_phi)`` with centre-of-mass wavevector ``K``.

    ``energy`` defaults to the bound-state value
    ``-mu kappa^2 / (2 hbar^2 n^2) + hbar^2 K^2 / (2 M)``; pass it explicitly
    only for test states that are not Coulomb eigenstates.
    """

    particles: tuple = field(default_factory=_default_particles)
    n: int = 2
    l: int = 1
    m_phi: int = 1
    K: tuple = (0.0, 0.0, 0.0)
    units: UnitSystem = field(default_factory=UnitSystem)
    energy: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "particles", tuple(self.particles))
        object.__setattr__(self, "K", tuple(float(k) for k in self.K))
        if len(self.particles) != 2:
            raise DomainError("only two-body states are supported")
        if len({p.index for p in self.particles}) != len(self.particles):
            raise DomainError("particle indices must be unique")
        if len(self.K) != 3:
            raise DomainError("K must be a 3-vector")
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if not (1 <= abs(self.m_phi) <= self.l < self.n):
            raise DomainError(
                f"need 1 <= |m_phi| <= l < n, got n={self.n}, l={self.l}, m_phi={self.m_phi}"
            )
        if not self.coupling > 0:
            raise DomainError("charges must attract (k q1 q2 < 0) for a bound state")

    @property
    def masses(self) -> np.ndarray:
        return np.array([p.mass for p in self.particles])

    @property
    def total_mass(self) -> float:
        return float(sum(p.mass for p in self.particles))

    @property
    def reduced_mass(self) -> float:
        m1, m2 = (p.mass for p in self.particles)
        return m1 * m2 / (m1 + m2)

    @property
    def coupling(self) -> float:
        q1, q2 = (p.charge for p in self.particles)
        return -self.units.coulomb_constant * q1 * q2

    @property
    def bohr_radius(self) -> float:
        return self.units.hbar**2 / (self.reduced_mass * self.coupling)

    @property
    def E(self) -> float:
        if self.energy is not None:
            return float(self.energy)
        hbar = self.units.hbar
        k2 = float(np.dot(self.K, self.K))
        internal = -self.reduced_mass * self.coupling**2 / (2 * hbar**2 * self.n**2)
        return internal + hbar**2 * k2 / (2 * self.total_mass)

    def alpha(self, i: int = 0) -> float:
        """Reduced Compton length hbar / (m_i c) of particle ``i``."""
        return self.units.hbar / (self.particles[i].mass * self.units.c)

    def with_units(self, units: UnitSystem) -> "WavefunctionModel":
        return WavefunctionModel(self.particles, self.n, self.l, self.m_phi, self.K, units, self.energy)


@dataclass(frozen=True)
class SystemState:
    t: float
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "velocities", np.asarray(self.velocities, dtype=float).reshape(-1, 3))
        if self.positions.shape != self.velocities.shape:
            raise DomainError("positions and velocities must have matching shapes")


# --------------------------------------------------------------------------- geometry


def relative_coordinates(positions):
    """Return ``(x, r, theta, phi)`` for the relative vector ``x = x1 - x2``."""
    p = np.asarray(positions, dtype=float)
    x = p[0] - p[1]
    r = math.sqrt(x[0] ** 2 + x[1] ** 2 + x[2] ** 2)
    if r == 0.0:
        raise DomainError("coincident particle positions")
    theta = math.acos(max(-1.0, min(1.0, x[2] / r)))
    phi = math.atan2(x[1], x[0])
    return x, r, theta, phi


# --------------------------------------------------------------------------- radial part


def radial_function(n: int, l: int, a: float, r):
    """Normalised hydrogen-like radial function with Bohr radius ``a``."""
    r = np.asarray(r, dtype=float)
    s = 2.0 * r / (n * a)
    norm = math.sqrt((2.0 / (n * a)) ** 3 * math.factorial(n - l - 1) / (2 * n * math.factorial(n + l)))
    return norm * np.exp(-s / 2) * s**l * eval_genlaguerre(n - l - 1, 2 * l + 1, s)


def _laguerre_derivative(k: int, alpha: int, order: int, s):
    # d^j/ds^j L_k^alpha = (-1)^j L_{k-j}^{alpha+j}
    if k - order < 0:
        return np.zeros_like(s)
    return (-1) ** order * eval_genlaguerre(k - order, alpha + order, s)


def radial_log_derivatives(n: int, l: int, a: float, r):
    """Return ``(R'/R, R''/R)`` from the closed form, without using the radial equation."""
    r = np.asarray(r, dtype=float)
    k = 2.0 / (n * a)
    s = k * r
    deg, alpha = n - l - 1, 2 * l + 1
    L0 = eval_genlaguerre(deg, alpha, s)
    L1 = _laguerre_derivative(deg, alpha, 1, s)
    L2 = _laguerre_derivative(deg, alpha, 2, s)
    g = -0.5 + l / s + L1 / L0
    dg = -l / s**2 + L2 / L0 - (L1 / L0) ** 2
    return k * g, k**2 * (dg + g**2)


# --------------------------------------------------------------------------- angular part


@lru_cache(maxsize=None)
def _legendre_factor(l: int, m: int):
    """Power-series coefficients of d^m P_l / dx^m and its first two derivatives."""
    coef = npleg.leg2poly(npleg.legder(np.eye(l + 1)[l], m))
    return coef, nppoly.polyder(coef, 1), nppoly.polyder(coef, 2)


def _angular_normalisation(l: int, m: int) -> float:
    return math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m))


def associated_legendre(l: int, m: int, theta):
    """P_l^m(cos theta) with the Condon-Shortley phase, ``m >= 0``."""
    theta = np.asarray(theta, dtype=float)
    p, _, _ = _legendre_factor(l, m)
    return (-1) ** m * np.sin(theta) ** m * nppoly.polyval(np.cos(theta), p)


def angular_laplacian_ratio(l: int, m: int, theta):
    """(1/sin) d/dtheta (sin dP/dtheta) / P, evaluated from the polynomial form of P."""
    theta = np.asarray(theta, dtype=float)
    p, dp, ddp = _legendre_factor(l, m)
    st, ct = np.sin(theta), np.cos(theta)
    x = ct
    q0 = nppoly.polyval(x, p)
    q1 = nppoly.polyval(x, dp) / q0
    q2 = nppoly.polyval(x, ddp) / q0
    dlog = m * ct / st - st * q1
    d2log = -m / st**2 - ct * q1 + st**2 * (q2 - q1**2)
    return d2log + dlog**2 + ct / st * dlog


def radial_angular_density(model: WavefunctionModel, r, theta):
    """|Phi|^2 as a function of (r, theta); independent of phi and of t."""
    m = abs(model.m_phi)
    R = radial_function(model.n, model.l, model.bohr_radius, r)
    Y = _angular_normalisation(model.l, m) * associated_legendre(model.l, m, theta)
    return (R * Y) ** 2


def dlog_rho0_dr(model: WavefunctionModel, r):
    """Analytic radial derivative of ln |Phi|^2."""
    d1, _ = radial_log_derivatives(model.n, model.l, model.bohr_radius, r)
    return 2.0 * d1


# --------------------------------------------------------------------------- operations


def evaluate_psi(model: WavefunctionModel, positions, t: float = 0.0) -> complex:
    """Complex amplitude of the two-body state at the given particle positions and time."""
    p = np.asarray(positions, dtype=float)
    _, r, theta, phi = relative_coordinates(p)
    m = abs(model.m_phi)
    R = float(radial_function(model.n, model.l, model.bohr_radius, r))
    P = float(associated_legendre(model.l, m, theta))
    if model.m_phi < 0:
        # Y_{l,-m} = (-1)^m conj(Y_{l,m}) cancels the Condon-Shortley sign
        P *= (-1) ** m
    masses = model.masses
    X_cm = (masses[:, None] * p).sum(axis=0) / masses.sum()
    phase = model.m_phi * phi + float(np.dot(model.K, X_cm)) - model.E * t / model.units.hbar
    return R * _angular_normalisation(model.l, m) * P * complex(math.cos(phase), math.sin(phase))


def amplitude_density(model: WavefunctionModel, positions) -> float:
    """psi* psi at the configuration (time independent for these states)."""
    _, r, theta, _ = relative_coordinates(positions)
    return float(radial_angular_density(model, r, theta))


def log_phase_gradient(model: WavefunctionModel, positions, i: int) -> np.ndarray:
    """Gradient of S/hbar with respect to particle ``i``'s position.

    For this family S/hbar = m_phi * phi(x1 - x2) + K . X_cm - E t / hbar, so the
    result is ``+-m_phi (-y, x, 0) / (x^2 + y^2) + (m_i / M) K``.
    """
    x, r, _, _ = relative_coordinates(positions)
    rho2 = x[0] ** 2 + x[1] ** 2
    if rho2 <= (AXIS_FLOOR * r) ** 2:
        raise SingularityError("azimuthal phase gradient is singular on the polar axis")
    sign = 1.0 if i == 0 else -1.0
    grad = sign * model.m_phi * np.array([-x[1], x[0], 0.0]) / rho2
    return grad + model.particles[i].mass / model.total_mass * np.asarray(model.K)


def _check_off_node(model, positions):
    dens = amplitude_density(model, positions)
    if dens < NODE_FLOOR:
        raise SingularityError(f"|psi|^2 = {dens:.3e} is below the node floor {NODE_FLOOR:g}")
    return dens


def relative_laplacian_ratio(model: WavefunctionModel, positions) -> float:
    """nabla_x^2 |Phi| / |Phi| from the closed-form radial and angular derivatives."""
    _check_off_node(model, positions)
    _, r, theta, _ = relative_coordinates(positions)
    d1, d2 = radial_log_derivatives(model.n, model.l, model.bohr_radius, r)
    ang = angular_laplacian_ratio(model.l, abs(model.m_phi), theta)
    return float(d2 + 2.0 / r * d1 + ang / r**2)


def laplacian_fd(func, positions, i: int, h: float) -> float:
    """Seven-point Laplacian of ``func`` with respect to particle ``i``'s coordinates."""
    p0 = np.array(positions, dtype=float)
    f0 = func(p0)
    total = -6.0 * f0
    for axis in range(3):
        for step in (h, -h):
            p = p0.copy()
            p[i, axis] += step
            total += func(p)
    return total / h**2


def quantum_potential_terms(model: WavefunctionModel, positions, method: str = "analytic") -> np.ndarray:
    """Per-particle terms -hbar^2/(2 m_i) nabla_i^2 |psi| / |psi|.

    ``method="fd"`` uses a seven-point stencil on sqrt(psi* psi) instead of the
    closed form (slower, for regression checks and non-standard states).
    """
    hbar = model.units.hbar
    masses = model.masses
    if method == "analytic":
        lap = relative_laplacian_ratio(model, positions)
        return np.array([-(hbar**2) / (2 * m) * lap for m in masses])
    if method == "fd":
        dens = _check_off_node(model, positions)
        _, r, _, _ = relative_coordinates(positions)
        h = 1e-3 * min(r, model.bohr_radius)
        amp = math.sqrt(dens)

        def sqrt_density(p):
            return math.sqrt(amplitude_density(model, p))

        return np.array(
            [-(hbar**2) / (2 * m) * laplacian_fd(sqrt_density, positions, i, h) / amp for i, m in enumerate(masses)]
        )
    raise ValueError(f"unknown method {method!r}")


def quantum_potential(model: WavefunctionModel, positions, method: str = "analytic") -> float:
    """Bohm quantum potential summed over both particles."""
    return float(quantum_potential_terms(model, positions, method).sum())


def classical_potential(model: WavefunctionModel, positions) -> float:
    """Instantaneous Coulomb pair energy k q1 q2 / |x1 - x2|."""
    _, r, _, _ = relative_coordinates(positions)
    return -model.coupling / r
