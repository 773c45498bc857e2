import numpy as np
import time
import os

from dataset.scenario import PlacementSet, build_scenario
from model.environment import SliptEnvironment, evaluate, reward
from model.oracle import GridSpec, OracleEvaluator, grid_search, grid_size, random_search, save_action
from utils.training_util import seed_everything, format_value_dict, write_csv
from utils.misc_util import CODE_VERSION, Logger, config_hash

ORACLE_COLUMNS = [
    'method', 'scheme', 'best_reward', 'best_aggregate', 'best_feasible_aggregate', 'feasible_found',
    'evaluations', 'env_reward', 'agreement', 'wall_time', 'seed', 'config_hash', 'code_version',
    'schema_version'
]
SCHEMA_VERSION = 1
AGREEMENT_TOLERANCE = 1e-12


def check_agreement(env: SliptEnvironment, evaluator: OracleEvaluator, action):
    """Re-score an oracle action through the environment pipeline; returns (env reward, agrees)."""
    _, metrics, verdict = evaluate(env.scenario, env.dimming_state, action, env.channels, env.scheme)
    env_reward = reward(metrics, verdict, env.reward_mode, env.penalty_weight)
    oracle_reward = float(evaluator.evaluate_action(action)["reward"])
    agrees = abs(env_reward - oracle_reward) <= AGREEMENT_TOLERANCE * max(1.0, abs(oracle_reward))
    return env_reward, agrees


def oracle_search(
    rundir,
    seed,
    scheme,
    scenario,
    env_args,
    # Search
    search,
    grid_args,
    budget,
    placement_seed,
):
    seed_everything(seed)
    Logger(os.path.join(rundir, "oracle_log.txt"), "w+")

    scenario = build_scenario(scenario)
    env = SliptEnvironment(scenario, scheme=scheme, seed=seed, **env_args)
    placement = PlacementSet(scenario, 1, placement_seed).positions[0]
    env.set_placement(placement)
    evaluator = OracleEvaluator(scenario,
                                placement,
                                scheme=scheme,
                                reward_mode=env.reward_mode,
                                penalty_weight=env.penalty_weight)
    print(f"Placement: {np.round(placement, 4).tolist()}")

    start_time = time.time()
    if search == 'grid':
        spec = GridSpec(**grid_args)
        print(f"Grid search over {grid_size(evaluator, spec)} candidates")
        result = grid_search(evaluator, spec, show_progress=True)
    else:
        result = random_search(evaluator, budget, np.random.default_rng(seed), show_progress=True)
    wall_time = time.time() - start_time

    env_reward, agrees = check_agreement(env, evaluator, result.best_action)
    print(f"[{search} search][{wall_time:.2f}s]" + format_value_dict({
        "best_reward": result.best_reward,
        "best_aggregate": result.best_aggregate,
        "env_reward": env_reward,
    }))
    if not result.feasible_found:
        print("No evaluated action satisfied every constraint")
    if not agrees:
        print(f"Oracle and environment disagree on the best action: {result.best_reward} vs {env_reward}")

    row = {
        **result.to_row(),
        "scheme": scheme,
        "env_reward": env_reward,
        "agreement": agrees,
        "wall_time": wall_time,
        "seed": seed,
        "config_hash": config_hash(scenario.to_dict(), dict(env_args), dict(grid_args)),
        "code_version": CODE_VERSION,
        "schema_version": SCHEMA_VERSION,
    }
    write_csv([row], os.path.join(rundir, "oracle_result.csv"), ORACLE_COLUMNS)
    save_action(result.best_action, os.path.join(rundir, "best_action.yaml"))
    print(f"Saved best action to: {os.path.join(rundir, 'best_action.yaml')}")
    return result
