import numpy as np
import pytest
import yaml

from dataset.scenario import PlacementSet, Scenario, SweepSpec, build_scenario, default_scenario


def test_default_scenario():
    scenario = default_scenario()
    assert scenario.num_leds == 6
    assert scenario.num_users == 2
    assert scenario.dimming.n_leds == 6


def test_yaml_round_trip():
    scenario = build_scenario({
        "num_users": 3,
        "noise_var_per_user": [1e-14, 2e-14, 3e-14],
        "dimming": {"target_level": 0.66},
        "power": {"power_term_mode": "squared"},
    })
    text = yaml.safe_dump(scenario.to_dict())
    assert Scenario.from_dict(yaml.safe_load(text)) == scenario


def test_string_numbers_are_coerced():
    scenario = build_scenario({"noise_var": "1e-13", "thresholds": {"min_harvest": "1e-9"}})
    assert scenario.noise_var == pytest.approx(1e-13)
    assert scenario.thresholds.min_harvest == pytest.approx(1e-9)


def test_led_count_follows_led_list():
    scenario = build_scenario({"led_positions": [[3.0, 4.0, 3.0], [5.0, 4.0, 3.0]], "num_users": 1})
    assert scenario.num_leds == 2
    assert scenario.dimming.n_leds == 2


@pytest.mark.parametrize("overrides", [
    {"noise_var": 0.0},
    {"num_users": 0},
    {"led_positions": [[9.0, 4.0, 3.0]]},
    {"dimming": {"target_level": 1.5}},
    {"dimming": {"n_leds": 4}},
    {"thresholds": {"qos": -1.0}},
    {"noise_var_per_user": [1e-14]},
    {"unknown_key": 1},
])
def test_invalid_scenarios(overrides):
    with pytest.raises(ValueError):
        build_scenario(overrides)


def test_placement_set_is_seeded():
    scenario = default_scenario()
    a = PlacementSet(scenario, 10, seed=7)
    b = PlacementSet(scenario, 10, seed=7)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert a.positions.shape == (10, 2, 3)
    assert np.all(a.positions[..., 2] <= 1.0)
    assert len(a) == 10
    assert a[3]["positions"].shape == (2, 3)


def test_sweep_spec():
    spec = SweepSpec(parameter="qos", values=(0.5, 1.0), replications=2, seed_base=10)
    cells = list(spec.cells())
    assert [c[0] for c in cells] == [0, 1, 2, 3]
    assert [c[3] for c in cells] == [10, 11, 12, 13]
    assert spec.apply(default_scenario(), 1.0).thresholds.qos == 1.0
    dimmed = SweepSpec(parameter="dimming", values=(0.5, )).apply(default_scenario(), 0.5)
    assert dimmed.dimming.target_level == 0.5
    assert SweepSpec(parameter="num_users", values=(4, )).apply(default_scenario(), 4).num_users == 4
    with pytest.raises(ValueError):
        SweepSpec(parameter="room", values=(1.0, ))
    with pytest.raises(ValueError):
        SweepSpec(parameter="qos", values=())
