import torch
import time
import tqdm
import os
from multiprocessing import Pool

from dataset.scenario import PlacementSet, SweepSpec, build_scenario
from model.environment import SliptEnvironment
from model.ppo import PPOAgent, PPOConfig, train
from scripts.testing import evaluate_policy
from utils.training_util import seed_everything, write_csv
from utils.misc_util import CODE_VERSION, Logger, config_hash, to_plain

SWEEP_COLUMNS = [
    'sweep_value', 'scheme', 'replication', 'seed', 'mean_rate', 'mean_ee', 'sat_rate', 'wall_time', 'status',
    'config_hash', 'code_version', 'schema_version'
]
SCHEMA_VERSION = 1


def run_cell(task: dict) -> dict:
    """Train one PPO agent for a sweep cell and evaluate its greedy policy on the shared placements."""
    spec = SweepSpec(**task["spec"])
    row = {
        "sweep_value": task["value"],
        "scheme": spec.scheme,
        "replication": task["replication"],
        "seed": task["seed"],
        "mean_rate": float('nan'),
        "mean_ee": float('nan'),
        "sat_rate": float('nan'),
        "wall_time": 0.0,
        "status": "ok",
        "config_hash": config_hash(task["scenario"], {spec.parameter: task["value"]}, task["ppo_args"],
                                   task["env_args"]),
        "code_version": CODE_VERSION,
        "schema_version": SCHEMA_VERSION,
    }

    start_time = time.time()
    try:
        scenario = spec.apply(build_scenario(task["scenario"]), task["value"])
        config = PPOConfig.from_dict(task["ppo_args"])
        seed_everything(task["seed"])
        torch.set_num_threads(1)
        env = SliptEnvironment(scenario,
                               scheme=spec.scheme,
                               episode_length=config.steps,
                               seed=task["seed"],
                               **task["env_args"])
        agent = PPOAgent(env.state_dim, env.num_users, env.num_leds, env.dimming_state.n_active, config)
        train(env, agent, torch.Generator().manual_seed(task["seed"]))

        eval_env = SliptEnvironment(scenario,
                                    scheme=spec.scheme,
                                    episode_length=task["eval_steps"],
                                    seed=task["seed"],
                                    **task["env_args"])
        placements = PlacementSet(scenario, task["num_eval_placements"], task["placement_seed"])
        result = evaluate_policy(eval_env, agent, placements, task["eval_steps"])
        row.update({k: result[k] for k in ("mean_rate", "mean_ee", "sat_rate")})
    except Exception as e:
        print(f"[cell {task['index']}] failed: {type(e).__name__}: {e}")
        row["status"] = "failed"
    if task["record_wall_time"]:
        row["wall_time"] = time.time() - start_time
    return row


def run_sweep(spec: SweepSpec,
              scenario: dict,
              ppo_args: dict,
              env_args: dict,
              num_eval_placements=100,
              placement_seed=2024,
              eval_steps=8,
              num_workers=0,
              record_wall_time=False):
    """
    Run every (value, replication) cell of the sweep, in parallel when num_workers > 0.
    Returns:
        list of result rows in cell order.
    """
    tasks = [{
        "index": index,
        "value": value,
        "replication": replication,
        "seed": seed,
        "spec": to_plain(spec.__dict__),
        "scenario": to_plain(scenario),
        "ppo_args": to_plain(ppo_args),
        "env_args": to_plain(env_args),
        "num_eval_placements": num_eval_placements,
        "placement_seed": placement_seed,
        "eval_steps": eval_steps,
        "record_wall_time": record_wall_time,
    } for index, value, replication, seed in spec.cells()]

    if num_workers > 0:
        with Pool(num_workers) as p:
            rows = list(tqdm.tqdm(p.imap(run_cell, tasks), total=len(tasks), desc='sweep progress'))
    else:
        rows = [run_cell(task) for task in tqdm.tqdm(tasks, desc='sweep progress')]
    return rows


def sweep_loop(
    rundir,
    seed,
    scheme,
    scenario,
    env_args,
    ppo_args,
    # Evaluation
    num_eval_placements,
    placement_seed,
    eval_steps,
    # Sweep
    sweep_args,
    num_workers,
    record_wall_time,
):
    seed_everything(seed)
    Logger(os.path.join(rundir, "sweep_log.txt"), "w+")

    sweep_args = {'seed_base': seed, **to_plain(sweep_args)}
    sweep_args['scheme'] = scheme
    sweep_args['values'] = tuple(float(v) for v in sweep_args.get('values') or ())
    spec = SweepSpec(**sweep_args)
    build_scenario(scenario)  # validate before launching cells
    print(f"Sweeping {spec.parameter} over {list(spec.values)} ({spec.replications} replications, "
          f"scheme {spec.scheme})")

    rows = run_sweep(spec, scenario, ppo_args, env_args, num_eval_placements, placement_seed, eval_steps,
                     num_workers, record_wall_time)
    for row in rows:
        print(f"[{spec.parameter} = {row['sweep_value']}][rep {row['replication']}][{row['status']}] "
              f"rate: {row['mean_rate']:.4f}, ee: {row['mean_ee']:.4f}, sat: {row['sat_rate']:.4f}")

    csv_path = os.path.join(rundir, f"sweep_{spec.parameter}_{spec.scheme}.csv")
    write_csv(rows, csv_path, SWEEP_COLUMNS)
    print(f"Saved sweep results to: {csv_path}")
    num_failed = sum(row["status"] != "ok" for row in rows)
    if num_failed:
        print(f"{num_failed} of {len(rows)} cells failed")
    return rows
