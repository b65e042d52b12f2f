import numpy as np
import pytest

from hingetrack.scenario import (
    Scenario,
    ScenarioError,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)


class TestValidation:
    def test_defaults_are_valid(self):
        sc = Scenario()
        assert sc.movement == "mo-M"
        assert sc.mode == "m2"
        assert sc.mhe.ts == pytest.approx(sc.ts)

    def test_rejects_unknown_movement(self):
        with pytest.raises(ScenarioError, match="movement"):
            Scenario(movement="zz-M")

    def test_rejects_unknown_mode(self):
        with pytest.raises(ScenarioError, match="mode"):
            Scenario(mode="m3")

    def test_rejects_nonpositive_duration(self):
        with pytest.raises(ScenarioError):
            Scenario(duration=0.0)

    def test_rejects_nonpositive_ts(self):
        with pytest.raises(ScenarioError):
            Scenario(ts=-0.01)

    def test_ts_propagates_to_mhe(self):
        sc = Scenario(ts=0.02)
        assert sc.mhe.ts == pytest.approx(0.02)


class TestSerialization:
    def test_round_trip_preserves_everything(self):
        sc = Scenario(movement="rd-M", duration=5.0, seed=7, mode="m1")
        back = scenario_from_dict(scenario_to_dict(sc))
        assert back.movement == sc.movement
        assert back.duration == pytest.approx(sc.duration)
        assert back.seed == sc.seed
        assert back.mode == sc.mode
        assert np.allclose(back.noise.bias_i, sc.noise.bias_i)
        assert np.allclose(back.chain.l_i_in_bj, sc.chain.l_i_in_bj)
        assert back.mhe.horizon == sc.mhe.horizon

    def test_unknown_top_level_key_rejected(self):
        data = scenario_to_dict(Scenario())
        data["surprise"] = 1
        with pytest.raises(ScenarioError, match="surprise"):
            scenario_from_dict(data)

    def test_unknown_nested_key_rejected(self):
        data = scenario_to_dict(Scenario())
        data["mhe"]["typo_weight"] = 3.0
        with pytest.raises(ScenarioError, match="typo_weight"):
            scenario_from_dict(data)

    def test_noise_keys_are_in_degrees(self):
        data = scenario_to_dict(Scenario())
        assert "noise_std_deg_per_s" in data["noise"]
        assert "bias_i_deg_per_s" in data["noise"]
        # Default study noise: 1 deg/s standard deviation.
        assert data["noise"]["noise_std_deg_per_s"] == pytest.approx(1.0)

    def test_file_round_trip(self, tmp_path):
        sc = Scenario(movement="no-M", duration=3.0, seed=4)
        path = tmp_path / "scenario.yaml"
        save_scenario(sc, path)
        back = load_scenario(path)
        assert back.movement == "no-M"
        assert back.duration == pytest.approx(3.0)
        assert back.seed == 4

    def test_load_missing_file_raises(self, tmp_path):
        with pytest.raises(ScenarioError, match="cannot read"):
            load_scenario(tmp_path / "absent.yaml")

    def test_load_malformed_yaml_raises(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("movement: [unclosed\n")
        with pytest.raises(ScenarioError):
            load_scenario(path)

    def test_load_non_mapping_raises(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- just\n- a list\n")
        with pytest.raises(ScenarioError):
            load_scenario(path)
