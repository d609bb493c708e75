"""Monte Carlo ensembles, their transport under the guidance flow, and the first-order density.

Ensembles hold the relative coordinate of each member in spherical form
(r, theta, phi). Members are drawn from |Phi|^2 by rejection sampling with a
PCG64 generator seeded explicitly, so a (seed, configuration) pair always
yields the same sample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import GuidanceMode, integrate
from .errors import ConfigError, DomainError, RBTError, SingularityError
from .quantum_state import (
    NODE_FLOOR,
    SystemState,
    WavefunctionModel,
    associated_legendre,
    _angular_normalisation,
    dlog_rho0_dr,
    radial_angular_density,
    radial_function,
)
from .reduced_model import R_GUARD, integrate_reduced_ensemble

DENSITY_COLUMNS = ("bin_lo", "bin_hi", "count", "density", "stat_error", "first_order_prediction")


@dataclass
class EnsembleSample:
    model: WavefunctionModel
    r: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    seed: int
    t: float = 0.0
    failed: int = 0

    def __len__(self):
        return self.r.size

    def relative_vectors(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.stack([self.r * st * np.cos(self.phi), self.r * st * np.sin(self.phi), self.r * np.cos(self.theta)], 1)


def default_r_max(model: WavefunctionModel) -> float:
    return model.bohr_radius * (4 * model.n**2 + 20)


def sample_initial(model: WavefunctionModel, n_samples: int, seed: int, r_max=None, batch=None) -> EnsembleSample:
    """Draw relative coordinates from |Phi|^2 by rejection in (r, cos theta, phi)."""
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    r_max = default_r_max(model) if r_max is None else r_max
    m = abs(model.m_phi)
    norm_ang = _angular_normalisation(model.l, m)

    def radial_weight(r):
        return r**2 * radial_function(model.n, model.l, model.bohr_radius, r) ** 2

    def angular_weight(u):
        return (norm_ang * associated_legendre(model.l, m, np.arccos(u))) ** 2

    r_grid = np.linspace(0.0, r_max, 8193)
    u_grid = np.linspace(-1.0, 1.0, 4097)
    f_max = 1.1 * radial_weight(r_grid).max()
    g_max = 1.1 * angular_weight(u_grid).max()
    expected = np.trapezoid(radial_weight(r_grid), r_grid) / (r_max * f_max) * np.trapezoid(angular_weight(u_grid), u_grid) / (
        2 * g_max
    )
    if expected < 1e-4:
        raise ConfigError([f"rejection envelope acceptance {expected:.2e} is below 1e-4"])

    rng = np.random.Generator(np.random.PCG64(seed))
    batch = batch or max(1024, int(1.3 * n_samples / expected))
    rs, us, phis = [], [], []
    have = 0
    while have < n_samples:
        r = rng.uniform(0.0, r_max, batch)
        u = rng.uniform(-1.0, 1.0, batch)
        ph = rng.uniform(-math.pi, math.pi, batch)
        w = rng.uniform(0.0, 1.0, batch)
        keep = w * f_max * g_max < radial_weight(r) * angular_weight(u)
        rs.append(r[keep])
        us.append(u[keep])
        phis.append(ph[keep])
        have += int(keep.sum())
    r = np.concatenate(rs)[:n_samples]
    u = np.concatenate(us)[:n_samples]
    ph = np.concatenate(phis)[:n_samples]
    return EnsembleSample(model, r, np.arccos(u), ph, seed)


def evolve_ensemble(sample: EnsembleSample, mode, t_end, cartesian=False, rtol=1e-10, atol=1e-12) -> EnsembleSample:
    """Transport every member to ``sample.t + t_end``.

    NBT and RBT_FIRST_ORDER use the reduced (equal-mass) flow unless
    ``cartesian`` is set; RBT_EXACT always integrates members one by one in
    Cartesian form, with the centre of mass at the origin. Members that fail
    are dropped and counted in ``failed``.
    """
    mode = GuidanceMode(mode)
    model = sample.model
    if t_end == 0:
        return replace(sample, r=sample.r.copy(), theta=sample.theta.copy(), phi=sample.phi.copy())
    if cartesian or mode is GuidanceMode.RBT_EXACT:
        return _evolve_cartesian(sample, mode, t_end, rtol, atol)

    if mode is GuidanceMode.NBT:
        rho2 = (sample.r * np.sin(sample.theta)) ** 2
        omega = model.units.hbar * model.m_phi / (model.reduced_mass * rho2)
        return replace(sample, phi=sample.phi + omega * t_end, r=sample.r.copy(), theta=sample.theta.copy(),
                       t=sample.t + t_end)

    m1, m2 = model.masses
    if m1 != m2:
        raise DomainError("the reduced flow needs equal masses")
    c = model.units.c
    if math.isinf(c):
        raise DomainError("RBT modes need a finite speed of light")
    alpha = model.alpha(0)
    ok = sample.r > alpha * (1 + 2 * R_GUARD)
    r, phi = integrate_reduced_ensemble(sample.r[ok], sample.phi[ok], alpha, c, t_end, rtol, atol)
    return EnsembleSample(model, r, sample.theta[ok].copy(), phi, sample.seed, sample.t + t_end,
                          sample.failed + int((~ok).sum()))


def _evolve_cartesian(sample, mode, t_end, rtol, atol):
    model = sample.model
    m = model.masses
    M = m.sum()
    xs = sample.relative_vectors()
    out, failed = [], sample.failed
    for x in xs:
        initial = SystemState(sample.t, [m[1] / M * x, -m[0] / M * x], np.zeros((2, 3)))
        try:
            traj = integrate(model, initial, mode, sample.t + t_end, rtol=rtol, atol=atol)
        except RBTError:
            failed += 1
            continue
        p1, p2 = (h.interpolate(sample.t + t_end)[0] for h in traj.histories)
        out.append(p1 - p2)
    out = np.array(out).reshape(-1, 3)
    r = np.linalg.norm(out, axis=1)
    return EnsembleSample(model, r, np.arccos(np.clip(out[:, 2] / r, -1, 1)), np.arctan2(out[:, 1], out[:, 0]),
                          sample.seed, sample.t + t_end, failed)


# --------------------------------------------------------------------------- densities


def perturbative_density(model: WavefunctionModel, r, theta, t, alpha=None, c=None):
    """Unnormalised first-order density rho0 * exp(-(2 alpha c / r^2) (d ln rho0/dr) alpha t)."""
    c = model.units.c if c is None else c
    alpha = model.alpha(0) if alpha is None else alpha
    rho0 = radial_angular_density(model, r, theta)
    if np.any(rho0 < NODE_FLOOR):
        raise SingularityError("perturbative density evaluated at a node of rho0")
    return rho0 * np.exp(-_shift_rate(model, r, alpha, c) * t)


def dlog_rho0_dr_numeric(model: WavefunctionModel, r, theta, h=1e-6):
    """Central-difference fallback for d ln rho0 / dr."""
    r = np.asarray(r, dtype=float)
    up = np.log(radial_angular_density(model, r + h, theta))
    dn = np.log(radial_angular_density(model, r - h, theta))
    return (up - dn) / (2 * h)


def radial_marginal(model: WavefunctionModel, r, t=0.0, alpha=None, c=None):
    """Radial probability per unit r of the first-order density (angles integrated out)."""
    c = model.units.c if c is None else c
    alpha = model.alpha(0) if alpha is None else alpha
    r = np.asarray(r, dtype=float)
    R = radial_function(model.n, model.l, model.bohr_radius, r)
    return r**2 * R**2 * np.exp(-_shift_rate(model, r, alpha, c) * t)


def _shift_rate(model, r, alpha, c):
    # 2 alpha^2 c / r^2 * d ln rho0/dr; alpha^2 c = hbar^2/(m^2 c) vanishes as c -> inf
    r = np.asarray(r, dtype=float)
    if math.isinf(c) or alpha == 0:
        return np.zeros_like(r)
    return 2 * alpha**2 * c / r**2 * dlog_rho0_dr(model, r)


def bin_averaged_marginal(model, edges, t=0.0, alpha=None, c=None, order=24):
    """Bin averages of :func:`radial_marginal` by Gauss-Legendre quadrature."""
    edges = np.asarray(edges, dtype=float)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    rr = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    vals = radial_marginal(model, rr, t, alpha, c)
    return 0.5 * (vals * weights).sum(axis=1)


@dataclass
class DensityEstimate:
    edges: np.ndarray
    counts: np.ndarray
    n_total: int
    prediction: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.n_total * self.widths)

    @property
    def stat_error(self) -> np.ndarray:
        return np.sqrt(self.counts) / (self.n_total * self.widths)

    @property
    def centres(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def to_csv(self, path):
        pred = self.prediction if self.prediction is not None else np.full(self.counts.shape, np.nan)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DENSITY_COLUMNS)
            for row in zip(self.edges[:-1], self.edges[1:], self.counts, self.density, self.stat_error, pred):
                writer.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), *(repr(float(v)) for v in row[3:])])


def radial_histogram(sample: EnsembleSample, edges) -> DensityEstimate:
    edges = np.asarray(edges, dtype=float)
    counts, _ = np.histogram(sample.r, bins=edges)
    return DensityEstimate(edges, counts, len(sample) + sample.failed, meta={"seed": sample.seed, "t": sample.t})


def compare_with_first_order(estimate: DensityEstimate, model, t, alpha=None, c=None, mask=None):
    """Attach bin predictions rescaled to the Monte Carlo mass over ``mask`` and return per-bin scores.

    Returns ``(rel_dev, rel_sigma)``: |rho_MC - rho_pred| / rho0 and the
    relative Poisson error of each bin.
    """
    mask = np.ones(estimate.counts.shape, bool) if mask is None else np.asarray(mask, bool)
    pred = bin_averaged_marginal(model, estimate.edges, t, alpha, c)
    rho0 = bin_averaged_marginal(model, estimate.edges, 0.0, alpha, c)
    mc = estimate.density
    scale = (mc[mask] * estimate.widths[mask]).sum() / (pred[mask] * estimate.widths[mask]).sum()
    estimate.prediction = pred * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        rel_dev = np.abs(mc - estimate.prediction) / rho0
        rel_sigma = estimate.stat_error / rho0
    return rel_dev, rel_sigma


def radial_moment(source, k: int):
    """``(<r^k>, standard error)`` for an :class:`EnsembleSample` or a :class:`DensityEstimate`."""
    if k not in (1, 2, 3):
        raise DomainError("k must be 1, 2 or 3")
    if isinstance(source, EnsembleSample):
        vals = source.r**k
        n = vals.size
        err = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return float(vals.mean()), err
    w = source.counts.astype(float)
    n = w.sum()
    vals = source.centres**k
    mean = float((w * vals).sum() / n)
    var = float((w * (vals - mean) ** 2).sum() / max(n - 1, 1))
    return mean, math.sqrt(var / n)


# --------------------------------------------------------------------------- continuity equation


@dataclass(frozen=True)
class SphericalGrid:
    r: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    def mesh(self):
        return np.meshgrid(self.r, self.theta, self.phi, indexing="ij")


def continuity_residual(density, velocity, grid: SphericalGrid, t, dt=None):
    """Central-difference residual of d(rho)/dt + div(rho v) on the interior of ``grid``.

    ``density(r, theta, phi, t)`` and ``velocity(r, theta, phi, t) -> (v_r, v_theta, v_phi)``
    are vectorised callables. Returns ``{"sup", "l2", "scale"}`` where
    ``scale`` is the sup of |d(rho)/dt| + |v . grad rho| for judging the
    residual; truncation error of a coarse grid shows up in the residual.
    """
    R, TH, PH = grid.mesh()
    dt = dt if dt is not None else 1e-4 * max(1.0, abs(t))
    rho = density(R, TH, PH, t)
    drho_dt = (density(R, TH, PH, t + dt) - density(R, TH, PH, t - dt)) / (2 * dt)
    vr, vth, vph = velocity(R, TH, PH, t)
    st = np.sin(TH)
    fr = R**2 * rho * vr
    fth = st * rho * vth
    fph = rho * vph
    div = (
        _d(fr, grid.r, 0) / R**2
        + _d(fth, grid.theta, 1) / (R * st)
        + _d(fph, grid.phi, 2) / (R * st)
    )
    res = (drho_dt + div)[1:-1, 1:-1, 1:-1]
    scale = (np.abs(drho_dt) + np.abs(vr * _d(rho, grid.r, 0)))[1:-1, 1:-1, 1:-1]
    return {"sup": float(np.max(np.abs(res))), "l2": float(np.sqrt(np.mean(res**2))), "scale": float(scale.max())}


def _d(f, x, axis):
    return np.gradient(f, x, axis=axis, edge_order=2)


def stationary_density(model: WavefunctionModel):
    def rho(r, theta, phi, t):
        return radial_angular_density(model, r, theta)

    return rho


def nbt_velocity_field(model: WavefunctionModel):
    """Relative-coordinate NBT velocity (purely azimuthal)."""

    def v(r, theta, phi, t):
        vph = model.units.hbar * model.m_phi / (model.reduced_mass * r * np.sin(theta))
        return np.zeros_like(r), np.zeros_like(r), vph

    return v


def reduced_velocity_field(alpha, c):
    """Reduced first-order flow: r' from the cubic law, phi' = r'/alpha, theta frozen."""

    def v(r, theta, phi, t):
        vr = -2 * c / (1 - r**2 / alpha**2)
        return vr, np.zeros_like(r), r * np.sin(theta) * vr / alpha

    return v


def perturbative_density_field(model: WavefunctionModel, alpha, c):
    def rho(r, theta, phi, t):
        return perturbative_density(model, r, theta, t, alpha, c)

    return rho
