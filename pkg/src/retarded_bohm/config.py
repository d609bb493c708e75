"""Experiment configuration: a flat sectioned key/value format with unit suffixes.

Grammar (one ``key = value`` per line, ``#`` comments, ``[section]`` headers)::

    [experiment]
    name   = unstability        # cm_drift | unstability | density_shift | energy_ledger | limits_scan
    units  = internal           # internal | si
    seed   = 20240501
    output = rbt_output

    [reduced]
    r0 = 5                      # internal units: bare numbers only
    # with units = si:  r0 = 1e-10 m,  mass = 9.1093837015e-31 kg,  c = 299792458 m/s

Dimensional keys accept a unit suffix only where SI values are expected:
the ``[si]`` section always, and ``[reduced]`` when ``units = si``. A suffix
where a bare number is expected (or the reverse) is a validation error, as
is any unknown section or key. Every violation is collected before
:class:`~retarded_bohm.errors.ConfigError` is raised.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import os
import re
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError

EXPERIMENTS = ("cm_drift", "unstability", "density_shift", "energy_ledger", "limits_scan")
OUTPUT_ENV = "RBT_OUTPUT_DIR"

# unit -> (dimension, factor to SI)
UNITS = {
    "m": ("length", 1.0),
    "cm": ("length", 1e-2),
    "nm": ("length", 1e-9),
    "pm": ("length", 1e-12),
    "angstrom": ("length", 1e-10),
    "s": ("time", 1.0),
    "fs": ("time", 1e-15),
    "kg": ("mass", 1.0),
    "g": ("mass", 1e-3),
    "m/s": ("speed", 1.0),
    "km/s": ("speed", 1e3),
    "K": ("temperature", 1.0),
}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf)\s*([A-Za-z/]+)?\s*$")


def _field(default, dim=None, doc="", **kw):
    return field(default=default, metadata={"dim": dim, "doc": doc, **kw})


@dataclass(frozen=True)
class ExperimentSection:
    name: str = _field("cm_drift", doc="experiment to run")
    units: str = _field("internal", doc="internal | si")
    seed: int = _field(20240501, doc="PCG64 seed for every random draw")
    output: str = _field("", doc="output directory (default: $RBT_OUTPUT_DIR or ./rbt_output)")


@dataclass(frozen=True)
class ModelSection:
    n: int = _field(2)
    l: int = _field(1)
    m_phi: int = _field(1)
    m1: float = _field(1.0, "mass")
    m2: float = _field(1.0, "mass")
    q1: float = _field(1.0, "charge")
    q2: float = _field(-1.0, "charge")
    K: tuple = _field((0.0, 0.0, 0.0), "wavevector", vector=3)
    hbar: float = _field(1.0, "action")
    coulomb_constant: float = _field(1.0, "coupling")


@dataclass(frozen=True)
class NumericsSection:
    c: tuple = _field((20.0, 40.0, 80.0, 160.0, 320.0), "speed", vector=-1, doc="speed-of-light scan")
    rtol: float = _field(1e-10)
    atol: float = _field(1e-12)
    separation: float = _field(4.0, "length", doc="initial in-plane separation of the two particles")
    periods: float = _field(1.0, doc="run length in NBT orbital periods")
    mass_ratio: float = _field(1836.0, doc="m1/m2 for the unequal-mass drift")
    energy_samples: int = _field(5, doc="ledger rows per energy trajectory")


@dataclass(frozen=True)
class ReducedSection:
    r0: float = _field(5.0, "length")
    alpha: float = _field(1.0, "length", doc="hbar/(m c); ignored when mass is set")
    mass: float = _field(0.0, "mass", doc="constituent mass; 0 means use alpha")
    c: float = _field(1.0, "speed")
    growth: float = _field(1.0, doc="integrate until r = r0 * (1 + growth)")


@dataclass(frozen=True)
class SISection:
    mass: float = _field(9.1093837015e-31, "mass", si=True)
    r_atom: float = _field(5.29177210903e-11, "length", si=True, doc="atomic size for the CM-speed chain")
    r_start: float = _field(1e-10, "length", si=True)
    r_end: float = _field(1.0, "length", si=True)


@dataclass(frozen=True)
class EnsembleSection:
    n_samples: int = _field(100000)
    bins: int = _field(20)
    c: float = _field(10.0, "speed")
    window_lo: float = _field(4.0, doc="first compared radius, in Bohr radii")
    window_hi: float = _field(12.0, doc="last compared radius, in Bohr radii")
    regime: float = _field(1e-2, doc="alpha^2 c t / r^3 at window_lo")


@dataclass(frozen=True)
class ThresholdSection:
    analytic_rel: float = _field(1e-8)
    first_integral_rel: float = _field(1e-8)
    spiral_rel: float = _field(1e-6)
    order_tol: float = _field(0.15)
    route_agreement: float = _field(1e-8)
    density_tol: float = _field(0.05)
    density_sigma: float = _field(3.0)
    energy_rel: float = _field(1e-6)
    factor: float = _field(10.0)


SECTIONS = {
    "experiment": ExperimentSection,
    "model": ModelSection,
    "numerics": NumericsSection,
    "reduced": ReducedSection,
    "si": SISection,
    "ensemble": EnsembleSection,
    "thresholds": ThresholdSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    model: ModelSection = field(default_factory=ModelSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    reduced: ReducedSection = field(default_factory=ReducedSection)
    si: SISection = field(default_factory=SISection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    thresholds: ThresholdSection = field(default_factory=ThresholdSection)

    @property
    def name(self) -> str:
        return self.experiment.name

    @property
    def output_dir(self) -> str:
        return self.experiment.output or os.environ.get(OUTPUT_ENV, "rbt_output")

    def canonical(self) -> str:
        """Serialized form without the output location (which does not affect results)."""
        return serialize_config(replace(self, experiment=replace(self.experiment, output="")))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def override(self, seed=None, output=None, units=None) -> "ExperimentConfig":
        exp = self.experiment
        exp = replace(
            exp,
            seed=exp.seed if seed is None else int(seed),
            output=exp.output if output is None else str(output),
            units=exp.units if units is None else units,
        )
        cfg = replace(self, experiment=exp)
        problems = validate(cfg)
        if problems:
            raise ConfigError(problems)
        return cfg


def parse_quantity(text: str, dim, si: bool):
    """Parse ``"1e-10 m"`` (SI) or ``"5"`` (internal) into a float in SI or internal units."""
    m = _QUANTITY.match(text)
    if not m:
        raise ValueError(f"cannot parse {text!r} as a number")
    value, unit = float(m.group(1)), m.group(2)
    if unit is None:
        if si and dim not in (None,):
            raise ValueError(f"{text!r} needs a {dim} unit suffix")
        return value
    if not si:
        raise ValueError(f"unit suffix {unit!r} not allowed in internal units")
    if unit not in UNITS:
        raise ValueError(f"unknown unit {unit!r}")
    udim, factor = UNITS[unit]
    if udim != dim:
        raise ValueError(f"unit {unit!r} is a {udim}, expected a {dim}")
    return value * factor


def _si_dimensional(section: str, f, units: str) -> bool:
    if f.metadata.get("si"):
        return True
    return section == "reduced" and units == "si" and f.metadata.get("dim") is not None


def _convert(section, f, raw: str, units: str):
    si = _si_dimensional(section, f, units)
    dim = f.metadata.get("dim")
    if f.type in ("str", str):
        return raw.strip()
    if f.type in ("int", int):
        if not re.fullmatch(r"\s*[-+]?\d+\s*", raw):
            raise ValueError(f"{raw!r} is not an integer")
        return int(raw)
    if f.type in ("tuple", tuple):
        parts = raw.replace(",", " ").split()
        vals = tuple(parse_quantity(p, dim, False) for p in parts)
        n = f.metadata.get("vector", -1)
        if n > 0 and len(vals) != n:
            raise ValueError(f"expected {n} components, got {len(vals)}")
        if not vals:
            raise ValueError("empty list")
        return vals
    return parse_quantity(raw, dim if si else None, si)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text; raises :class:`ConfigError` listing every violation."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    problems = []
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    units = parser.get("experiment", "units", fallback="internal").strip()
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            problems.append(f"[{section}]: unknown section")
            continue
        known = {f.name: f for f in fields(SECTIONS[section])}
        kwargs = {}
        for key, raw in parser.items(section):
            if key not in known:
                problems.append(f"[{section}] {key}: unknown key")
                continue
            try:
                kwargs[key] = _convert(section, known[key], raw, units)
            except ValueError as exc:
                problems.append(f"[{section}] {key}: {exc}")
        values[section] = kwargs
    cfg = ExperimentConfig(**{s: SECTIONS[s](**values.get(s, {})) for s in SECTIONS})
    problems += validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def validate(cfg: ExperimentConfig):
    """Return the list of every invariant violated by ``cfg``."""
    p = []
    e, m, n, r, en, th = cfg.experiment, cfg.model, cfg.numerics, cfg.reduced, cfg.ensemble, cfg.thresholds
    if e.name not in EXPERIMENTS:
        p.append(f"[experiment] name: must be one of {EXPERIMENTS}, got {e.name!r}")
    if e.units not in ("internal", "si"):
        p.append(f"[experiment] units: must be internal or si, got {e.units!r}")
    elif e.units == "si" and e.name != "unstability":
        p.append(f"[experiment] units: si applies to the unstability experiment only, not {e.name!r}")
    if e.seed < 0 or e.seed >= 2**64:
        p.append("[experiment] seed: must fit in an unsigned 64-bit integer")
    if m.n < 1:
        p.append("[model] n: must be >= 1")
    if not (1 <= abs(m.m_phi) <= m.l < m.n):
        p.append("[model] l, m_phi: need 1 <= |m_phi| <= l < n")
    for key in ("m1", "m2", "hbar", "coulomb_constant"):
        if not getattr(m, key) > 0:
            p.append(f"[model] {key}: must be > 0")
    if not -m.coulomb_constant * m.q1 * m.q2 > 0:
        p.append("[model] q1, q2: charges must attract for a bound state")
    if any(not c > 0 for c in n.c):
        p.append("[numerics] c: every value must be > 0")
    if e.name == "limits_scan" and len([c for c in n.c if math.isfinite(c)]) < 2:
        p.append("[numerics] c: the scan needs at least two finite values")
    for key in ("rtol", "atol", "separation", "periods", "mass_ratio"):
        if not getattr(n, key) > 0:
            p.append(f"[numerics] {key}: must be > 0")
    if n.energy_samples < 1:
        p.append("[numerics] energy_samples: must be >= 1")
    if not (r.c > 0 and r.r0 > 0 and r.growth > 0):
        p.append("[reduced] r0, c, growth: must be > 0")
    alpha = reduced_alpha(cfg)
    if not alpha > 0:
        p.append("[reduced] alpha: must be > 0 (or give mass > 0)")
    elif not r.r0 > alpha:
        p.append(f"[reduced] r0: invariant r0 > alpha violated (r0={r.r0!r}, alpha={alpha!r})")
    if not cfg.si.r_end > cfg.si.r_start > 0 or not cfg.si.mass > 0 or not cfg.si.r_atom > 0:
        p.append("[si] need mass > 0, r_atom > 0 and r_end > r_start > 0")
    if en.n_samples < 1 or en.bins < 1:
        p.append("[ensemble] n_samples and bins must be >= 1")
    if not en.c > 0:
        p.append("[ensemble] c: must be > 0")
    if not en.window_hi > en.window_lo > 0:
        p.append("[ensemble] need window_hi > window_lo > 0")
    if not en.regime > 0:
        p.append("[ensemble] regime: must be > 0")
    if e.name == "density_shift" and m.m1 != m.m2:
        p.append("[model] m1, m2: the density experiment uses the equal-mass reduced flow")
    for f in fields(th):
        if not getattr(th, f.name) > 0:
            p.append(f"[thresholds] {f.name}: must be > 0")
    return p


def reduced_alpha(cfg: ExperimentConfig) -> float:
    """alpha for the reduced run, from ``alpha`` or from ``mass`` and hbar of the unit system."""
    r = cfg.reduced
    if r.mass > 0:
        if cfg.experiment.units == "si":
            import scipy.constants as const

            hbar = const.hbar
        else:
            hbar = cfg.model.hbar
        return hbar / (r.mass * r.c)
    return r.alpha


def _format(section, f, value, units):
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        text = repr(value)
        if _si_dimensional(section, f, units):
            unit = {"length": "m", "time": "s", "mass": "kg", "speed": "m/s", "temperature": "K"}[f.metadata["dim"]]
            text += f" {unit}"
        return text
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    units = cfg.experiment.units
    lines = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        lines.append(f"[{section}]")
        for f in fields(obj):
            lines.append(f"{f.name} = {_format(section, f, getattr(obj, f.name), units)}")
        lines.append("")
    return "\n".join(lines)


def default_config(name: str, units: str = "internal", **experiment) -> ExperimentConfig:
    """Defaults for ``name``; with ``units="si"`` the reduced run starts from atomic size in SI."""
    cfg = ExperimentConfig(experiment=ExperimentSection(name=name, units=units, **experiment))
    if units == "si":
        import scipy.constants as const

        si = cfg.si
        cfg = replace(cfg, reduced=ReducedSection(r0=si.r_start, alpha=0.0, mass=si.mass, c=const.c, growth=1.0))
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg
