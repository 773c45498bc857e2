import numpy as np
import pytest

from dataset.scenario import PlacementSet, build_scenario
from model.channel import build_channel_matrix
from model.dimming import resolve_dimming
from model.environment import ActionVector, evaluate, reward
from model.oracle import (GridSpec, OracleEvaluator, enumerate_selections, fraction_lattice, grid_search,
                          grid_size, load_action, random_search, save_action, simplex_lattice)
from model.rates import Beamformers, RateSplit

TINY = {
    "led_positions": [[3.0, 4.0, 3.0], [5.0, 4.0, 3.0]],
    "num_users": 1,
    "thresholds": {"qos": 0.0, "min_harvest": 0.0},
}
PLACEMENT = np.array([[4.2, 3.8, 0.5]])


def env_reward(scenario, placement, action, scheme='rsma'):
    channels = build_channel_matrix(scenario, placement)
    _, metrics, verdict = evaluate(scenario, resolve_dimming(scenario.dimming), action, channels, scheme)
    return reward(metrics, verdict), metrics


def test_enumerate_selections():
    np.testing.assert_array_equal(enumerate_selections(2, 1), [[1, 0], [0, 1]])
    assert len(enumerate_selections(3, 2)) == 3
    selections = enumerate_selections(6, 4)
    assert len(selections) == 15
    assert np.all(selections.sum(axis=1) == 4)


def test_lattices():
    np.testing.assert_array_equal(simplex_lattice(2, 1, 1.0), [[0.0, 0.0]])
    lattice = simplex_lattice(2, 3, 2.0)
    assert len(lattice) == 5  # origin plus the four vertices of the L1 ball
    assert np.all(np.abs(lattice).sum(axis=1) <= 2.0)
    fractions = fraction_lattice(2, 3)
    assert len(fractions) == 6
    assert np.all(fractions.sum(axis=1) <= 1.0)


def test_zero_grid_returns_zero_action():
    scenario = build_scenario(TINY)
    evaluator = OracleEvaluator(scenario, PLACEMENT)
    result = grid_search(evaluator, GridSpec(beam_points=1, split_points=1))
    assert result.evaluations == 1
    zero = ActionVector(beamformers=Beamformers(np.zeros(2), np.zeros((1, 2))),
                        selection=np.array([1, 1]),
                        split=RateSplit(np.zeros(1)))
    expected, _ = env_reward(scenario, PLACEMENT, zero)
    assert result.best_reward == pytest.approx(expected, abs=1e-15)


def test_grid_best_action_agrees_with_environment():
    scenario = build_scenario(TINY)
    evaluator = OracleEvaluator(scenario, PLACEMENT)
    spec = GridSpec(beam_points=11, split_points=5)
    result = grid_search(evaluator, spec)
    assert result.evaluations == grid_size(evaluator, spec)
    assert result.feasible_found
    expected, metrics = env_reward(scenario, PLACEMENT, result.best_action)
    assert result.best_reward == pytest.approx(expected, rel=1e-12)
    assert result.best_aggregate == pytest.approx(metrics.aggregate_rate, rel=1e-12)
    amplitude = result.best_action.beamformers.per_led_amplitude
    assert np.all(amplitude <= evaluator.amplitude_budget * (1.0 + 1e-9))


def test_evaluator_agrees_with_environment_on_random_actions():
    scenario = build_scenario({"num_users": 2, "thresholds": {"qos": 0.05}, "dimming": {"target_level": 0.66}})
    rng = np.random.default_rng(0)
    for placement in PlacementSet(scenario, 3, seed=1).positions:
        for scheme in ('rsma', 'noma'):
            evaluator = OracleEvaluator(scenario, placement, scheme=scheme)
            xi = evaluator.amplitude_budget
            for _ in range(20):
                selection = np.zeros(6, dtype=np.int64)
                selection[rng.choice(6, size=evaluator.n_active, replace=False)] = 1
                columns = rng.uniform(-1.0, 1.0, size=(3, 6))
                columns *= xi / np.abs(columns).sum(axis=0)
                common = columns[0] if scheme == 'rsma' else np.zeros(6)
                split = rng.uniform(0.0, 0.5, size=2) if scheme == 'rsma' else np.zeros(2)
                action = ActionVector(beamformers=Beamformers(common, columns[1:]),
                                      selection=selection,
                                      split=RateSplit(split))
                expected, metrics = env_reward(scenario, placement, action, scheme)
                out = evaluator.evaluate_action(action)
                assert float(out["reward"]) == pytest.approx(expected, rel=1e-12, abs=1e-12)
                np.testing.assert_allclose(out["harvested"], metrics.harvested, rtol=1e-12)
                assert float(out["total_power"]) == pytest.approx(metrics.total_power, rel=1e-12)


def test_grid_cap():
    evaluator = OracleEvaluator(build_scenario(TINY), PLACEMENT)
    with pytest.raises(ValueError):
        grid_search(evaluator, GridSpec(cap=10))


def test_random_search_budget_monotone():
    evaluator = OracleEvaluator(build_scenario(TINY), PLACEMENT)
    single = random_search(evaluator, 1, np.random.default_rng(0))
    assert single.evaluations == 1
    previous = -np.inf
    for budget in (100, 1000, 3000):
        result = random_search(evaluator, budget, np.random.default_rng(0))
        assert result.evaluations == budget
        assert result.best_reward >= previous
        previous = result.best_reward


def test_best_action_file(tmp_path):
    evaluator = OracleEvaluator(build_scenario(TINY), PLACEMENT)
    action = random_search(evaluator, 50, np.random.default_rng(0)).best_action
    save_action(action, tmp_path / "best_action.yaml")
    loaded = load_action(tmp_path / "best_action.yaml")
    assert float(evaluator.evaluate_action(loaded)["reward"]) == pytest.approx(
        float(evaluator.evaluate_action(action)["reward"]), rel=1e-12)


@pytest.mark.slow
def test_random_search_close_to_grid():
    scenario = build_scenario(TINY)
    evaluator = OracleEvaluator(scenario, PLACEMENT)
    grid = grid_search(evaluator, GridSpec(beam_points=11, split_points=5))
    best = random_search(evaluator, 100000, np.random.default_rng(0))
    assert best.best_reward >= 0.95 * grid.best_reward


@pytest.mark.slow
def test_rsma_not_worse_than_noma():
    scenario = build_scenario(TINY)
    spec = GridSpec(beam_points=11, split_points=5)
    wins = 0
    for placement in PlacementSet(scenario, 50, seed=0).positions:
        rsma = grid_search(OracleEvaluator(scenario, placement, scheme='rsma'), spec)
        noma = grid_search(OracleEvaluator(scenario, placement, scheme='noma'), spec)
        wins += rsma.best_feasible_aggregate >= noma.best_feasible_aggregate - 1e-12
    assert wins >= 48
