"""Tests for scenario parsing, validation, normalization and the built-ins."""

import json

import pytest

from backend.sync_lib.builtin_scenarios import (
    builtin,
    builtin_document,
    builtin_names,
    load_scenario,
)
from backend.sync_lib.errors import ValidationError
from backend.sync_lib.network import link_margin
from backend.sync_lib.noisegen import bump_scale
from backend.sync_lib.scenario import normalize, parse_scenario, serialize


def test_builtin_names():
    assert builtin_names() == [
        "attenuation_sweep",
        "deployed120relay",
        "directsync",
        "hfnoise50",
        "roleswap75",
        "spool75",
    ]


@pytest.mark.parametrize("name", builtin_names())
def test_every_builtin_validates(name):
    config = builtin(name)
    assert config.name == name
    assert config.n_samples == 100_000_000
    assert config.tau0_s == 1e-7


@pytest.mark.parametrize("name", builtin_names())
def test_normalization_is_idempotent(name):
    once = normalize(builtin_document(name))
    assert normalize(once) == once
    assert normalize(json.dumps(once)) == once
    config = parse_scenario(once)
    assert serialize(parse_scenario(serialize(config))) == serialize(config)


def test_builtin_document_is_a_copy():
    doc = builtin_document("spool75")
    doc["name"] = "changed"
    assert builtin_document("spool75")["name"] == "spool75"


def test_spool75_layout():
    config = builtin("spool75")
    assert [n.name for n in config.topology.nodes] == ["switch1", "switch2"]
    assert [p.name for p in config.pairs] == [
        "clock-clock",
        "clock1-laser1",
        "clock2-laser2",
        "laser-laser",
    ]
    assert config.channel(4).divider
    assert not config.channel(3).rf_chain
    assert link_margin(config.topology.links[0]) == pytest.approx(17.75)


def test_relay_hops_match_the_spool_margin():
    spool = builtin("spool75").topology.links[0]
    for link in builtin("deployed120relay").topology.links:
        assert link_margin(link) == pytest.approx(link_margin(spool))
        assert link.uncompensated_fraction == 0.005


def test_attenuation_sweep_reaches_zero_margin():
    config = builtin("attenuation_sweep")
    last = config.with_link_attenuation("patch", config.sweep.attenuation_db[-1])
    assert link_margin(last.topology.links[0]) == pytest.approx(0.0, abs=1e-9)
    assert bump_scale(link_margin(last.topology.links[0])) == pytest.approx(1 / 0.3)
    assert config.topology.links[0].extra_loss_db == 0.0


def test_roleswap_keeps_lasers():
    config = builtin("roleswap75")
    assert config.topology.nodes[0].name == "switch2"
    spool = builtin("spool75")
    assert [laser.upstream for laser in config.lasers] == [
        laser.upstream for laser in spool.lasers
    ]


def test_directsync_lasers_share_one_clock():
    config = builtin("directsync")
    assert config.sync_mode == "direct"
    assert {laser.upstream for laser in config.lasers} == {"switch1"}
    assert config.direct.oscillation.peak_to_peak == pytest.approx(1.0)
    assert config.direct.oscillation.period == pytest.approx(2.0)


def test_config_hash_follows_content():
    config = builtin("spool75")
    assert config.config_hash() == builtin("spool75").config_hash()
    assert config.with_seed(1).config_hash() != config.config_hash()
    assert len(config.config_hash()) == 64


def test_decimation_keeps_capture_length():
    config = builtin("spool75").decimated(10)
    assert config.tau0_s == 1e-6
    assert config.n_samples == 10_000_000
    assert config.duration_s == 10.0
    with pytest.raises(ValidationError, match="factor"):
        builtin("spool75").decimated(0)


def test_decimation_below_nyquist_of_a_bump_is_rejected():
    with pytest.raises(ValidationError, match="Nyquist"):
        builtin("hfnoise50").decimated(100)


def test_validation_collects_every_violation(tiny_document):
    doc = tiny_document
    doc["seed"] = -1
    doc["colour"] = "blue"
    doc["lasers"][0]["upstream"] = "nowhere"
    doc["detection"]["channels"][1]["source"] = "ghost"
    doc["analysis"]["pairs"].append({"name": "bad", "a": 1, "b": 9})
    with pytest.raises(ValidationError) as info:
        parse_scenario(doc)
    violations = info.value.violations
    assert len(violations) == 5
    text = "\n".join(violations)
    assert "seed must be a non-negative integer" in text
    assert "unknown field 'colour'" in text
    assert "upstream 'nowhere' is not a clock node" in text
    assert "unknown source 'ghost'" in text
    assert "channel 9 is not routed" in text


def test_sample_guard(tiny_document):
    tiny_document["duration_s"] = 100.0
    tiny_document["tau0_s"] = 1e-7
    with pytest.raises(ValidationError, match="more than the 200000000 limit"):
        parse_scenario(tiny_document)


def test_factor_range_is_checked_at_parse_time(tiny_document):
    tiny_document["analysis"]["factors"] = [1, 2, 5000]
    with pytest.raises(ValidationError, match="m=5000 out of range"):
        parse_scenario(tiny_document)


def test_deadtime_must_fit_in_one_comparison_interval(tiny_document):
    tiny_document["detection"]["tagger"]["deadtime_ns"] = 2000.0
    with pytest.raises(ValidationError, match="longer than the comparison interval"):
        parse_scenario(tiny_document)
    tiny_document["detection"]["tagger"]["deadtime_ns"] = 900.0
    assert parse_scenario(tiny_document).tagger.deadtime_fs == 900_000_000


def test_tau0_must_cover_whole_clock_cycles(tiny_document):
    tiny_document["tau0_s"] = 1.5e-7
    tiny_document["duration_s"] = 1.5e-4
    with pytest.raises(ValidationError, match="whole number of clock periods"):
        parse_scenario(tiny_document)


def test_direct_mode_rules(tiny_document):
    doc = tiny_document
    doc["sync_mode"] = "direct"
    doc["direct"] = {"clock": "gm"}
    with pytest.raises(ValidationError, match="mllB: direct sync needs upstream 'gm'"):
        parse_scenario(doc)

    doc["lasers"][1]["upstream"] = "gm"
    assert parse_scenario(doc).direct.clock == "gm"

    doc["sync_mode"] = "wr"
    with pytest.raises(ValidationError, match="only allowed with sync_mode 'direct'"):
        parse_scenario(doc)


def test_broken_noise_terms_are_reported(tiny_document):
    tiny_document["topology"]["nodes"][1]["local_noise"] = {
        "power_law": [{"alpha": 3, "rms_at_tau0": 1.0}]
    }
    with pytest.raises(ValidationError, match="sw: unsupported exponent"):
        parse_scenario(tiny_document)


def test_schema_and_json_errors():
    with pytest.raises(ValidationError, match="not valid JSON"):
        parse_scenario("{")
    with pytest.raises(ValidationError, match="unsupported schema"):
        parse_scenario({**builtin_document("spool75"), "schema": 2})


def test_with_changes_revalidates(tiny_document):
    config = parse_scenario(tiny_document)
    with pytest.raises(ValidationError):
        config.with_changes(duration_s=-1.0)
    assert config.with_duration(0.006).n_samples == 6000


def test_load_scenario(tmp_path, tiny_document):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_document))
    assert load_scenario(str(path)).name == "tiny"
    assert load_scenario("spool75").name == "spool75"
    with pytest.raises(ValidationError, match="no built-in scenario or file"):
        load_scenario("spool76")


def test_unknown_sweep_link():
    doc = builtin_document("attenuation_sweep")
    doc["sweep"]["link"] = "trunk"
    with pytest.raises(ValidationError, match="unknown link 'trunk'"):
        parse_scenario(doc)
