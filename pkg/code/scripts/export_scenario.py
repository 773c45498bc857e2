import inspect
import os

import yaml

from dataset.scenario import build_scenario
from model.environment import SliptEnvironment
from model.ppo import PPOConfig
from utils.misc_util import to_plain

ENV_ARG_NAMES = ('split_scale', 'reward_mode', 'penalty_weight', 'augment_state_with_channels')


def default_env_args() -> dict:
    params = inspect.signature(SliptEnvironment.__init__).parameters
    return {name: params[name].default for name in ENV_ARG_NAMES}


def example_config(seed, scheme, scenario, env_args, ppo_args) -> dict:
    """Complete run configuration: the full scenario plus every environment and PPO argument."""
    ppo = PPOConfig.from_dict(ppo_args).to_dict()
    return {
        'seed': seed,
        'scheme': scheme,
        'scenario': build_scenario(scenario).to_dict(),
        'env_args': {**default_env_args(), **to_plain(env_args)},
        # unset optionals are left out, the config parser reads YAML nulls back as strings
        'ppo_args': {k: v for k, v in ppo.items() if v is not None},
    }


def export_scenario(
    rundir,
    seed,
    scheme,
    scenario,
    env_args,
    ppo_args,
):
    config = example_config(seed, scheme, scenario, env_args, ppo_args)
    path = os.path.join(rundir, "example_config.yaml")
    with open(path, "w") as f:
        yaml.safe_dump(config, f, sort_keys=False)
    print(yaml.safe_dump(config, sort_keys=False), end='')
    print(f"Saved example config to: {path}")
    return config
