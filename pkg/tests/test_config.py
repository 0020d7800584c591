import math

import pytest

from swipt_opt.config import (
    KEYS,
    ConfigError,
    key_table,
    load_config,
    parse_text,
    parse_value,
    preset_names,
)


@pytest.mark.parametrize("text, kind, expect", [
    ("6 mW", "power", 6e-3),
    ("30 dBm", "power", 1.0),
    ("-174 dBm/Hz", "psd", 10 ** -20.4),
    ("100 km^-2", "density", 1e-4),
    ("50 MHz", "freq", 5e7),
    ("2 km", "length", 2000.0),
    ("10 us/bit", "delay", 1e-5),
    ("274 1/mW", "inv_power", 2.74e5),
    ("45 deg", "angle", 45.0),
    ("1e-4, 1 mW", "list_power", (1e-4, 1e-3)),
])
def test_unit_parsing(text, kind, expect):
    assert parse_value(text, kind) == pytest.approx(expect, rel=1e-12)


def test_radians_become_degrees():
    assert parse_value(f"{math.pi / 4!r} rad", "angle") == pytest.approx(45.0, rel=1e-12)


def test_scalars_and_choices():
    assert parse_value("true", "bool") is True and parse_value("off", "bool") is False
    assert parse_value("5", "int") == 5
    assert parse_value("auto", "opt_ratio") is None
    assert parse_value("dps", "choice:ts|sps|dps") == "dps"
    for bad, kind in (("3 parsec", "length"), ("maybe", "bool"), ("x", "choice:ts|sps|dps"),
                      ("1/km^2", "density")):
        with pytest.raises(ValueError):
            parse_value(bad, kind)


def test_unknown_key_and_bad_value_reported_together(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("[radio]\nalpha = 2\nbogus = 1\n")
    with pytest.raises(ConfigError) as err:
        load_config([str(path)])
    keys = {k for k, _ in err.value.problems}
    assert {"radio.alpha", "radio.bogus"} <= keys


def test_file_sections_and_top_level_keys():
    out = parse_text("qos.h0 = 6 mW  # comment\n[radio]\np_tx = 5\n")
    assert out == {"qos.h0": "6 mW", "radio.p_tx": "5"}
    with pytest.raises(ConfigError):
        parse_text("[radio]\np_tx = 1\np_tx = 2\n")


def test_later_sources_win(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("radio.p_tx = 5\n")
    assert load_config([str(path)]).scenario.radio.p_tx == 5.0
    assert load_config([str(path)], sets=["radio.p_tx=7"]).scenario.radio.p_tx == 7.0


def test_paper_preset_values():
    scn = load_config().scenario
    assert scn.radio.bandwidth == 5e7 and scn.radio.reuse == 3 and scn.radio.alpha == 3
    assert scn.population.lambda_u == 1e-2 and scn.population.iot_fraction == 0.8
    assert scn.qos.h0 == 1e-3 and scn.qos.mu == 0.05
    assert (scn.radio.p_tx, scn.population.lambda_b, scn.mode.split) == (11.0, 4.8e-4, 0.99965)


def test_presets_switch_models():
    assert {"paper", "llp", "hlp", "ts", "sps", "dps", "nopassive"} <= set(preset_names())
    hlp = load_config(presets=("paper", "hlp")).scenario.energy
    assert (hlp.q1, hlp.q2, hlp.q3) == (482.3, 48.23, 144.69)
    assert load_config(presets=("paper", "dps"), sets=["mode.split=0.5"]).scenario.mode.kind == "dps"
    off = load_config(presets=("paper", "nopassive")).scenario.sources
    assert not (off.serving_passive or off.other_bs or off.users)
    with pytest.raises(ConfigError):
        load_config(presets=("paper", "nosuch"))


def test_non_scenario_groups():
    run = load_config(sets=["ga.pop_size=40", "sim.replications=7", "fitness.k2=10",
                            "grid.steps_p=5", "grid.refine=2"])
    assert run.ga.pop_size == 40 and run.sim.replications == 7 and run.fitness.k2 == 10
    assert run.grid_steps[0] == 5 and run.grid_refine == 2
    with pytest.raises(ConfigError):
        load_config(sets=["sim.replications=1"])
    with pytest.raises(ConfigError):
        load_config(sets=["ga.pop_size=1"])


def test_malformed_set():
    with pytest.raises(ConfigError) as err:
        load_config(sets=["radio.p_tx"])
    assert err.value.problems[0][0] == "radio.p_tx"


def test_key_table_covers_every_key():
    table = key_table()
    assert [k for k, _, _ in table] == sorted(KEYS)
    assert all(doc for _, _, doc in table)
