"""Scenario file parsing, canonical emission, and hashing tests."""

import pytest
import yaml

from satmimo.config import (
    PRESET_NAMES,
    ScenarioValidationError,
    emit_scenario,
    load_preset,
    parse_scenario,
    parse_scenario_dict,
    scenario_hash,
)


class TestPresets:
    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_preset_parses_and_validates(self, name):
        s = load_preset(name)
        assert s.validate() == []
        assert s.n_satellites == 2
        assert s.n_users == 2

    def test_paper_trial_matches_trial_parameters(self):
        s = load_preset("paper-trial")
        assert s.carriers.downlink_freq_hz == 11.5e9
        assert s.carriers.symbol_rate_baud == 1.25e6
        assert s.satellites[0].nominal_longitude_deg == pytest.approx(7.0)
        assert s.link.cnr_db == (16.5, 10.9)
        assert s.timing.csi_update_period_s == 5.0
        assert s.timing.n_csi_average == 5
        assert s.timing.pll_loop_bandwidth_hz == 7.0
        assert [ut.latitude_deg for ut in s.user_terminals] == [48.073556, 48.073395]

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            load_preset("missing")


class TestRoundTrip:
    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_parse_emit_identity(self, name):
        s = load_preset(name)
        assert parse_scenario_dict(emit_scenario(s)) == s

    def test_parse_from_file(self, tmp_path):
        s = load_preset("paper-trial")
        path = tmp_path / "scenario.yaml"
        path.write_text(yaml.safe_dump(emit_scenario(s)))
        assert parse_scenario(str(path)) == s


class TestHash:
    def test_stable_under_key_reordering(self):
        s = load_preset("paper-trial")
        data = emit_scenario(s)
        reordered = dict(reversed(list(data.items())))
        assert scenario_hash(parse_scenario_dict(reordered)) == scenario_hash(s)

    def test_changes_with_semantics(self):
        a = load_preset("paper-trial")
        b = load_preset("paper-trial")
        b.seed = a.seed + 1
        assert scenario_hash(a) != scenario_hash(b)


class TestValidationErrors:
    def test_empty_file_lists_required_sections(self):
        with pytest.raises(ScenarioValidationError) as info:
            parse_scenario_dict({})
        msg = str(info.value)
        for section in ("stations", "satellites", "carriers"):
            assert section in msg

    def test_k_greater_than_n_rejected(self):
        data = emit_scenario(load_preset("paper-trial"))
        extra = dict(data["stations"][1])
        extra["id"] = "ut3"
        data["stations"].append(extra)
        data["impairments"]["lnbs"].append(dict(data["impairments"]["lnbs"][0]))
        data["link"]["cnr_db"].append(12.0)
        with pytest.raises(ScenarioValidationError, match="K <= N"):
            parse_scenario_dict(data)

    def test_all_errors_collected(self):
        data = emit_scenario(load_preset("paper-trial"))
        data["stations"][0]["latitude_deg"] = "not-a-number"
        data["satellites"][0].pop("nominal_longitude_deg")
        data["timing"]["bogus_key"] = 1.0
        with pytest.raises(ScenarioValidationError) as info:
            parse_scenario_dict(data)
        assert len(info.value.errors) >= 3
        msg = str(info.value)
        assert "latitude_deg" in msg
        assert "nominal_longitude_deg" in msg
        assert "bogus_key" in msg

    def test_exponent_strings_coerced(self):
        # PyYAML 1.1 resolves "13.0e9" as a string; numeric coercion must
        # still accept it
        data = emit_scenario(load_preset("paper-trial"))
        data["carriers"]["downlink_freq_hz"] = "11.5e9"
        s = parse_scenario_dict(data)
        assert s.carriers.downlink_freq_hz == 11.5e9

    def test_bad_reference_tone_above_nyquist(self):
        data = emit_scenario(load_preset("paper-trial"))
        data["carriers"]["reference_tone_freqs_hz"] = [15.0e3, 150.0e3]
        with pytest.raises(ScenarioValidationError, match="Nyquist"):
            parse_scenario_dict(data)

    def test_structural_errors_from_validate(self):
        data = emit_scenario(load_preset("paper-trial"))
        data["stations"][0]["role"] = "user-terminal"  # no gateway left
        with pytest.raises(ScenarioValidationError, match="gateway"):
            parse_scenario_dict(data)
