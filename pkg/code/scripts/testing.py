import numpy as np
import tqdm
import os
from torch.utils.data import DataLoader

from dataset.scenario import PlacementSet, build_scenario
from model.environment import SliptEnvironment
from model.ppo import load_checkpoint
from utils.training_util import seed_everything, write_csv
from utils.misc_util import CODE_VERSION, Logger, config_hash, find_latest_model_path

EVAL_COLUMNS = [
    'checkpoint_episode', 'scheme', 'num_placements', 'mean_reward', 'mean_rate', 'mean_ee', 'sat_rate',
    'seed', 'config_hash', 'code_version', 'schema_version'
]
SCHEMA_VERSION = 1


def evaluate_policy(env: SliptEnvironment, agent, placements, eval_steps=8, show_progress=False):
    """
    Greedy evaluation: reset to every placement of the `placements` dataset (items as in
    dataset.scenario.PlacementSet) and run `eval_steps` mean-action steps.
    Metrics are averaged over all steps of all placements.
    """
    loader = DataLoader(placements, batch_size=None, shuffle=False)
    rewards, rates, ees, satisfied = [], [], [], []
    for item in tqdm.tqdm(loader, desc="eval progress", disable=not show_progress):
        state = env.set_placement(item["positions"].numpy())
        for _ in range(eval_steps):
            raw, _ = agent.act(state, deterministic=True)
            state, r, done, info = env.step(raw)
            rewards.append(r)
            rates.append(info["metrics"].aggregate_rate)
            ees.append(info["metrics"].energy_efficiency)
            satisfied.append(info["verdict"].all_satisfied)
            if done:
                break
    return {
        "mean_reward": float(np.mean(rewards)),
        "mean_rate": float(np.mean(rates)),
        "mean_ee": float(np.nanmean(ees)) if not np.all(np.isnan(ees)) else float('nan'),
        "sat_rate": float(np.mean(satisfied)),
    }


def load_agent(rundir, episode=None, config=None):
    checkpoints_dir = os.path.join(rundir, "checkpoints")
    if episode is None:
        ckpt_dir = find_latest_model_path(checkpoints_dir, prefix="episode_")
    else:
        ckpt_dir = os.path.join(checkpoints_dir, f"episode_{episode}")
    assert ckpt_dir is not None and os.path.exists(ckpt_dir), f"No checkpoint found in {checkpoints_dir}"
    return load_checkpoint(os.path.join(ckpt_dir, "model.pth"), config)


def testing_loop(
    rundir,
    seed,
    scheme,
    scenario,
    env_args,
    # Evaluation
    num_eval_placements,
    placement_seed,
    eval_steps,
    eval_episode,
):
    seed_everything(seed)
    Logger(os.path.join(rundir, "testing_log.txt"), "w+")

    scenario = build_scenario(scenario)
    env = SliptEnvironment(scenario, scheme=scheme, episode_length=eval_steps, seed=seed, **env_args)
    agent, episode = load_agent(rundir, eval_episode)
    assert agent.state_dim == env.state_dim, \
        f"Checkpoint state dim {agent.state_dim} does not match environment state dim {env.state_dim}"
    print(f"Loaded checkpoint of episode {episode} from {rundir}")

    placements = PlacementSet(scenario, num_eval_placements, placement_seed)
    result = evaluate_policy(env, agent, placements, eval_steps, show_progress=True)
    print("".join([
        f"[evaluation {len(placements)} placements][episode {episode}]",
        *list(f", {k}: {v:.4f}" for k, v in sorted(result.items())),
    ]))

    row = {
        "checkpoint_episode": episode,
        "scheme": scheme,
        "num_placements": len(placements),
        **result,
        "seed": seed,
        "config_hash": config_hash(scenario.to_dict(), agent.config.to_dict(), dict(env_args)),
        "code_version": CODE_VERSION,
        "schema_version": SCHEMA_VERSION,
    }
    write_csv([row], os.path.join(rundir, "eval_result.csv"), EVAL_COLUMNS)
    return result
