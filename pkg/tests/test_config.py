import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from retarded_bohm.config import (
    EXPERIMENTS,
    OUTPUT_ENV,
    ExperimentConfig,
    default_config,
    parse_config,
    parse_quantity,
    reduced_alpha,
    serialize_config,
)
from retarded_bohm.errors import ConfigError


def test_minimal_config_fills_defaults():
    cfg = parse_config("[experiment]\nname = cm_drift\n")
    assert cfg == default_config("cm_drift")
    assert cfg.model.n == 2 and cfg.model.l == 1 and cfg.model.m_phi == 1
    assert cfg.numerics.c == (20.0, 40.0, 80.0, 160.0, 320.0)


def test_r0_not_above_alpha_names_the_invariant():
    with pytest.raises(ConfigError) as info:
        parse_config("[experiment]\nname = unstability\n[reduced]\nr0 = 0.5\nalpha = 1\n")
    assert any("r0 > alpha" in v for v in info.value.violations)


def test_all_violations_are_reported_together():
    text = """
[experiment]
name = unstability
colour = blue
[model]
n = two
[reduced]
r0 = 1 m
[nonsense]
a = 1
[ensemble]
bins = 0
"""
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    v = "\n".join(info.value.violations)
    for fragment in ("colour: unknown key", "n: ", "not allowed in internal units", "[nonsense]: unknown section",
                     "bins"):
        assert fragment in v
    assert len(info.value.violations) >= 5


def test_si_suffixes_convert_and_are_required():
    text = ("[experiment]\nname = unstability\nunits = si\n[reduced]\nr0 = 1 angstrom\nmass = 9.1093837015e-31 kg\n"
            "c = 299792458 m/s\n")
    cfg = parse_config(text)
    assert cfg.reduced.r0 == pytest.approx(1e-10)
    assert reduced_alpha(cfg) == pytest.approx(3.8615926796e-13, rel=1e-9)
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nname = unstability\nunits = si\n[reduced]\nr0 = 1e-10\n")
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nname = unstability\nunits = si\n[reduced]\nr0 = 1e-10 kg\n")


def test_si_section_always_takes_units():
    cfg = parse_config("[experiment]\nname = cm_drift\n[si]\nr_atom = 52.9 pm\n")
    assert cfg.si.r_atom == pytest.approx(52.9e-12)
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nname = cm_drift\n[si]\nr_atom = 5e-11\n")


def test_si_units_only_for_the_reduced_run():
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nname = density_shift\nunits = si\n")


@pytest.mark.parametrize("text,value", [("5", 5.0), ("-1.5e-3", -1.5e-3), (".5", 0.5), ("inf", math.inf)])
def test_parse_bare_quantities(text, value):
    assert parse_quantity(text, None, False) == value


def test_output_directory_defaults_to_environment(monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, "/somewhere/else")
    assert default_config("cm_drift").output_dir == "/somewhere/else"
    monkeypatch.delenv(OUTPUT_ENV)
    assert default_config("cm_drift").output_dir == "rbt_output"
    assert default_config("cm_drift", output="x").output_dir == "x"


def test_digest_ignores_output_location():
    a = default_config("unstability", output="a")
    b = default_config("unstability", output="b")
    assert a.digest() == b.digest()
    assert a.digest() != default_config("unstability", seed=1).digest()


finite = st.floats(0.5, 1e3, allow_nan=False, allow_infinity=False)


@given(
    st.sampled_from(EXPERIMENTS),
    st.integers(0, 2**64 - 1),
    st.lists(finite, min_size=2, max_size=6),
    st.floats(1.0, 100.0),
    st.floats(1e-3, 0.9),
    st.integers(1, 10**6),
)
def test_round_trip(name, seed, cs, r0, alpha_frac, n_samples):
    text = f"""[experiment]
name = {name}
seed = {seed}
[numerics]
c = {' '.join(repr(c) for c in cs)}
[reduced]
r0 = {r0!r}
alpha = {r0 * alpha_frac!r}
[ensemble]
n_samples = {n_samples}
"""
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


def test_round_trip_si():
    cfg = default_config("unstability", units="si")
    assert parse_config(serialize_config(cfg)) == cfg
    assert "m/s" in serialize_config(cfg)


def test_default_config_is_valid_for_every_experiment():
    for name in EXPERIMENTS:
        assert isinstance(default_config(name), ExperimentConfig)
