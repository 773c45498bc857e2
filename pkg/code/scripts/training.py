import torch
import numpy as np
import time
import os
from torch.utils.data import DataLoader, Subset
from torch.utils.tensorboard import SummaryWriter

from dataset.scenario import PlacementSet, build_scenario
from model.environment import SliptEnvironment
from model.oracle import GridSpec, OracleEvaluator, grid_search
from model.ppo import PPOAgent, PPOConfig, load_checkpoint, save_checkpoint, train
from scripts.testing import evaluate_policy
from utils.training_util import seed_everything, format_value_dict, write_csv
from utils.misc_util import ensure_dir, find_latest_model_path, Logger

TRAIN_LOG_COLUMNS = ['episode', 'mean_reward', 'surrogate', 'critic_loss', 'sat_rate', 'mean_rate', 'num_updates']


def build_agent(env: SliptEnvironment, config: PPOConfig) -> PPOAgent:
    return PPOAgent(env.state_dim, env.num_users, env.num_leds, env.dimming_state.n_active, config)


def compare_with_oracle(env, agent, placements, grid_args, eval_steps):
    """Mean greedy reward against the mean grid-search incumbent over the given placements."""
    greedy, best = [], []
    for item in DataLoader(placements, batch_size=None, shuffle=False):
        greedy.append(evaluate_policy(env, agent, [item], eval_steps)["mean_reward"])
        evaluator = OracleEvaluator(env.scenario,
                                    item["positions"].numpy(),
                                    scheme=env.scheme,
                                    reward_mode=env.reward_mode,
                                    penalty_weight=env.penalty_weight)
        best.append(grid_search(evaluator, GridSpec(**grid_args)).best_reward)
    return {
        "greedy_reward": float(np.mean(greedy)),
        "oracle_reward": float(np.mean(best)),
        "ratio": float(np.mean(greedy) / np.mean(best)) if np.mean(best) > 0 else float('nan'),
    }


def training_loop(
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
    # Resume training
    load_from,
    # Oracle comparison
    compare_oracle,
    num_oracle_placements,
    grid_args,
    # Logging
    show_every,
    save_every,
):
    seed_everything(seed)
    checkpoints_dir = os.path.join(rundir, "checkpoints")
    tb_logger = SummaryWriter(os.path.join(rundir, "log"))
    Logger(os.path.join(rundir, "training_log.txt"), "w+")
    ensure_dir(checkpoints_dir)

    # build environment and agent
    scenario = build_scenario(scenario)
    config = PPOConfig.from_dict(ppo_args)
    env = SliptEnvironment(scenario, scheme=scheme, episode_length=config.steps, seed=seed, **env_args)
    print(f"Scenario: {scenario.num_users} users, {scenario.num_leds} LEDs, "
          f"N_a = {env.dimming_state.n_active}, i_DC = {env.dimming_state.dc_bias:.6g} A, "
          f"Xi = {env.dimming_state.amplitude_budget:.6g} A, scheme = {scheme}")
    print(f"State dim {env.state_dim}, action dim {env.action_dim}")

    start_episode = 0
    if load_from is not None:
        ckpt_dir = find_latest_model_path(os.path.join(load_from, "checkpoints"), prefix="episode_")
        assert ckpt_dir is not None, f"No checkpoint found in {load_from}"
        agent, last_episode = load_checkpoint(os.path.join(ckpt_dir, "model.pth"), config)
        start_episode = last_episode + 1
        print(f'Resumed from checkpoint: {ckpt_dir}')
    else:
        agent = build_agent(env, config)
    generator = torch.Generator().manual_seed(seed)

    def save(episode):
        ckpt_dir = os.path.join(checkpoints_dir, f'episode_{episode}')
        ensure_dir(ckpt_dir, show_info=False)
        save_checkpoint(os.path.join(ckpt_dir, "model.pth"), agent, episode)
        print(f'Saved checkpoint at episode {episode} to: {ckpt_dir}')

    def on_episode(episode, entry, elapsed):
        if episode % show_every == 0 or episode == config.episodes - 1:
            print(f"[episode {episode:05d}][{elapsed:.2f}s] reward: {entry['mean_reward']:.4f}" +
                  format_value_dict({k: v for k, v in entry.items() if k not in ('episode', 'mean_reward')}))
        if episode % save_every == 0 and episode > 0:
            save(episode)

    start_time = time.time()
    logs = train(env, agent, generator, tb_logger, start_episode, on_episode)
    print(f"Training finished in {time.time() - start_time:.2f}s")
    save(config.episodes - 1)
    write_csv(logs, os.path.join(rundir, "training_log.csv"), TRAIN_LOG_COLUMNS)

    # greedy evaluation on the shared placement set
    eval_env = SliptEnvironment(scenario, scheme=scheme, episode_length=eval_steps, seed=seed, **env_args)
    placements = PlacementSet(scenario, num_eval_placements, placement_seed)
    result = evaluate_policy(eval_env, agent, placements, eval_steps, show_progress=True)
    print(f"[evaluation {len(placements)} placements]" + format_value_dict(result))

    if compare_oracle:
        oracle_placements = Subset(placements, range(min(num_oracle_placements, len(placements))))
        comparison = compare_with_oracle(eval_env, agent, oracle_placements, grid_args, eval_steps)
        print("[oracle comparison]" + format_value_dict(comparison))
        write_csv([comparison], os.path.join(rundir, "oracle_comparison.csv"), list(comparison.keys()))
        result.update({f"oracle_{k}": v for k, v in comparison.items()})

    tb_logger.close()
    return logs, result
