import configargparse
import sys
import os
import traceback
import yaml

root_path = os.path.realpath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, root_path)

from utils.misc_util import ensure_dir, EasyDict

EXIT_OK = 0
EXIT_INVALID_CONFIG = 1
EXIT_RUNTIME_FAILURE = 2
EXIT_VALIDATION_FAILURE = 3


def build_base_parser() -> configargparse.ArgumentParser:
    p = configargparse.ArgParser(config_file_parser_class=configargparse.YAMLConfigFileParser)
    p.add('-t',
          '--task',
          required=True,
          choices=['validate', 'oracle', 'train', 'sweep', 'eval', 'example-scenario'],
          help='Task to run')
    p.add('-c', '--config', is_config_file=True, help='Config file path')
    p.add('-o', '--out', default='../data/experiments', help="Experiments output directory")
    p.add('--run_name', default='default', help="Name of this run")
    p.add('--seed', type=int, default=0, help="Random seed")
    p.add('--scheme', default='rsma', choices=['rsma', 'noma'], help="Multiple access scheme")

    # Scenario
    p.add('--scenario', type=yaml.safe_load, default={}, help="Scenario overrides over the default room")
    p.add('--eta', type=float, help="Target dimming level, overrides scenario.dimming.target_level")

    # Environment
    p.add('--env_args',
          type=yaml.safe_load,
          default={},
          help="Environment arguments (split_scale, reward_mode, penalty_weight, "
          "augment_state_with_channels)")

    return p


def add_ppo_arguments(p: configargparse.ArgParser) -> None:
    p.add('--ppo_args', type=yaml.safe_load, default={}, help="PPO hyperparameters")
    p.add('--episodes', type=int, help="Number of training episodes, overrides ppo_args.episodes")


def add_evaluation_arguments(p: configargparse.ArgParser) -> None:
    p.add('--num_eval_placements', type=int, default=100, help="Number of evaluation placements")
    p.add('--placement_seed', type=int, default=2024, help="Seed of the evaluation placement set")
    p.add('--eval_steps', type=int, default=8, help="Greedy steps per evaluation placement")


def add_train_arguments(p: configargparse.ArgParser) -> None:
    add_ppo_arguments(p)
    add_evaluation_arguments(p)

    # Resume training
    p.add('--load_from', help="Resume from the latest checkpoint of this run directory")

    # Oracle comparison
    p.add('--compare_oracle', action='store_true', help="Report greedy reward / oracle reward")
    p.add('--num_oracle_placements', type=int, default=1, help="Placements used for the comparison")
    p.add('--grid_args', type=yaml.safe_load, default={}, help="Oracle grid arguments")

    # Logging
    p.add('--show_every', type=int, default=10, help="Num episodes to display")
    p.add('--save_every', type=int, default=100, help="Num episodes to save checkpoint")


def add_eval_arguments(p: configargparse.ArgParser) -> None:
    add_evaluation_arguments(p)
    p.add('--eval_episode', type=int, help="Checkpoint episode to evaluate (default as latest)")


def add_sweep_arguments(p: configargparse.ArgParser) -> None:
    add_ppo_arguments(p)
    add_evaluation_arguments(p)
    p.add('--sweep_args',
          type=yaml.safe_load,
          default={},
          help="Sweep specification (parameter, values, replications, seed_base)")
    p.add('--num_workers', type=int, default=0, help="Number of sweep worker processes")
    p.add('--record_wall_time', action='store_true', help="Record per-cell wall time")


def add_oracle_arguments(p: configargparse.ArgParser) -> None:
    p.add('--search', default='grid', choices=['grid', 'random'], help="Search method")
    p.add('--grid_args', type=yaml.safe_load, default={}, help="Grid arguments")
    p.add('--budget', type=int, default=100000, help="Random search budget")
    p.add('--placement_seed', type=int, default=2024, help="Seed of the searched placement")


def add_validate_arguments(p: configargparse.ArgParser) -> None:
    p.add('--num_checks', type=int, default=1000, help="Random actions per agreement check")
    p.add('--num_scenarios', type=int, default=10, help="Seeded placements in the agreement check")


def make_run_args(p: configargparse.ArgParser) -> dict:
    args, _ = p.parse_known_args()  # parse args
    args = dict(vars(args))  # convert to dict

    rundir = os.path.join(args['out'], args['run_name'])
    ensure_dir(rundir)  # make run directory

    # fold shortcut flags into the structured sections
    args['scenario'] = dict(args['scenario'] or {})
    eta = args.pop('eta')
    if eta is not None:
        args['scenario']['dimming'] = {**(args['scenario'].get('dimming') or {}), 'target_level': eta}
    if 'ppo_args' in args:
        args['ppo_args'] = dict(args['ppo_args'] or {})
        episodes = args.pop('episodes')
        if episodes is not None:
            args['ppo_args']['episodes'] = episodes

    # write run config
    args.pop('config')
    task = args.pop('task')
    with open(os.path.join(rundir, "run_config.yaml"), "w") as f:
        yaml.safe_dump({'task': task, **args}, f, sort_keys=False)
    print(yaml.safe_dump(args, sort_keys=False), end='')
    print('-' * 60)

    args.pop('out')
    args.pop('run_name')
    args['rundir'] = rundir
    return EasyDict(args)


def main() -> int:
    parser = build_base_parser()
    args, _ = parser.parse_known_args()  # parse args

    try:
        if args.task == 'train':
            from scripts.training import training_loop

            add_train_arguments(parser)
            args = make_run_args(parser)

            training_loop(**args)

        elif args.task == 'eval':
            from scripts.testing import testing_loop

            add_eval_arguments(parser)
            args = make_run_args(parser)

            testing_loop(**args)

        elif args.task == 'sweep':
            from scripts.sweep import sweep_loop

            add_sweep_arguments(parser)
            args = make_run_args(parser)

            sweep_loop(**args)

        elif args.task == 'oracle':
            from scripts.oracle_search import oracle_search

            add_oracle_arguments(parser)
            args = make_run_args(parser)

            oracle_search(**args)

        elif args.task == 'validate':
            from scripts.validation import validation

            add_validate_arguments(parser)
            args = make_run_args(parser)

            if not validation(**args):
                return EXIT_VALIDATION_FAILURE

        elif args.task == 'example-scenario':
            from scripts.export_scenario import export_scenario

            add_ppo_arguments(parser)
            args = make_run_args(parser)

            export_scenario(**args)

        else:
            assert 0, "Unknown task"

    except ValueError as e:
        print(f"Invalid configuration: {e}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
