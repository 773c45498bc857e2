import numpy as np
import os

from dataset.scenario import PlacementSet, build_scenario
from model.channel import build_channel_matrix, channel_gain
from model.dimming import DimmingConfig, resolve_dimming, verify_dimming_constraint
from model.environment import SliptEnvironment, evaluate, project_action, reward
from model.oracle import OracleEvaluator
from model.slipt import beam_power_term
from utils.training_util import seed_everything, write_csv
from utils.misc_util import CODE_VERSION, Logger, config_hash

VALIDATE_COLUMNS = ['check', 'passed', 'detail', 'seed', 'config_hash', 'code_version', 'schema_version']
SCHEMA_VERSION = 1
AGREEMENT_TOLERANCE = 1e-12


def _close(a, b, tolerance=AGREEMENT_TOLERANCE, floor=1.0) -> bool:
    """Relative agreement; `floor` bounds the scale from below for quantities that can vanish."""
    return abs(a - b) <= tolerance * max(abs(a), abs(b), floor)


def random_raw_actions(env: SliptEnvironment, rng: np.random.Generator, num_actions: int) -> np.ndarray:
    """Normalized raw actions: beams in [-1, 1], standard normal logits, split in [0, 1]."""
    n, k = env.num_leds, env.num_users
    beams = rng.uniform(-1.0, 1.0, size=(num_actions, n * (k + 1)))
    logits = rng.normal(size=(num_actions, n))
    split = rng.uniform(0.0, 1.0, size=(num_actions, k))
    return np.concatenate([beams, logits, split], axis=1)


def check_channel(scenario, positions):
    gains = np.concatenate([build_channel_matrix(scenario, p).gains.reshape(-1) for p in positions])
    outside = channel_gain((0.0, 0.0, 3.0), (6.0, 0.0, 0.0), scenario.device)
    passed = bool(np.all(gains >= 0.0) and np.all(np.isfinite(gains)) and outside == 0.0)
    return passed, f"min gain {gains.min():.4g}, gain outside FOV {outside}"


def check_dimming(scenario, num_levels=1000):
    base = scenario.dimming
    failures = []
    for eta in np.linspace(1.0 / num_levels, 1.0, num_levels):
        config = DimmingConfig(target_level=float(eta),
                               n_leds=base.n_leds,
                               current_min=base.current_min,
                               current_max=base.current_max)
        state = resolve_dimming(config)
        if not verify_dimming_constraint(state.n_active, state.dc_bias, config) or state.amplitude_budget < 0.0:
            failures.append(float(eta))
    full = resolve_dimming(DimmingConfig(1.0, base.n_leds, base.current_min, base.current_max))
    exact = full.dc_bias == base.current_bias
    return not failures and exact, f"{len(failures)} of {num_levels} levels failed, i_DC(1) == I_0: {exact}"


def check_projection(env: SliptEnvironment, raws):
    xi = env.dimming_state.amplitude_budget
    violations = 0
    for raw in raws:
        action = env.to_action(raw)
        again = project_action(action.to_raw(), env.num_users, env.num_leds, env.dimming_state.n_active, xi)
        ok = int(action.selection.sum()) == env.dimming_state.n_active \
            and np.all(action.beamformers.per_led_amplitude <= xi * (1.0 + 1e-9)) \
            and np.array_equal(again.selection, action.selection) \
            and np.array_equal(again.beamformers.flatten(), action.beamformers.flatten())
        violations += not ok
    return violations == 0, f"{violations} of {len(raws)} projected actions infeasible or not idempotent"


def check_agreement(env: SliptEnvironment, positions, rng, num_checks):
    """Environment and oracle evaluators on the same random actions."""
    per_placement = max(1, num_checks // len(positions))
    worst, mismatches, total = 0.0, 0, 0
    for placement in positions:
        env.set_placement(placement)
        evaluator = OracleEvaluator(env.scenario, placement, env.scheme, env.reward_mode, env.penalty_weight)
        for raw in random_raw_actions(env, rng, per_placement):
            action = env.to_action(raw)
            _, metrics, verdict = evaluate(env.scenario, env.dimming_state, action, env.channels, env.scheme)
            out = evaluator.evaluate_action(action)
            # rates and rewards are compared against a unit scale, powers in watts purely relatively
            pairs = [
                (reward(metrics, verdict, env.reward_mode, env.penalty_weight), float(out["reward"]), 1.0),
                (metrics.aggregate_rate, float(out["aggregate"]), 1.0),
                (metrics.total_power, float(out["total_power"]), 1e-300),
            ]
            pairs += [(a, b, 1e-300) for a, b in zip(metrics.harvested, out["harvested"])]
            pairs += [(a, b, 1.0) for a, b in zip(metrics.private_rates, out["private_rates"])]
            for a, b, floor in pairs:
                worst = max(worst, abs(a - b) / max(abs(a), abs(b), floor))
            mismatches += not all(_close(a, b, floor=floor) for a, b, floor in pairs) \
                or not np.array_equal(verdict.satisfied, out["satisfied"])
            total += 1
    return mismatches == 0, f"{mismatches} of {total} actions disagree, worst relative gap {worst:.3g}"


def check_energy(env: SliptEnvironment, positions, rng, num_checks):
    """
    Harvested power is non-negative and strictly below the amplifier plus bias consumption, and
    P^tot + sum P^Har equals that consumption.
    """
    power = env.scenario.power
    per_placement = max(1, num_checks // len(positions))
    failures = 0
    for placement in positions:
        env.set_placement(placement)
        for raw in random_raw_actions(env, rng, per_placement):
            action = env.to_action(raw)
            _, metrics, _ = evaluate(env.scenario, env.dimming_state, action, env.channels, env.scheme)
            consumed = power.amplifier_factor \
                * beam_power_term(action.beamformers, action.selection, power.power_term_mode) \
                + power.conversion_factor * env.dimming_state.n_active * env.dimming_state.dc_bias
            harvested = float(np.sum(metrics.harvested))
            balance = metrics.total_power + harvested
            failures += not (_close(balance, consumed, 1e-9, 1e-300) and np.all(metrics.harvested >= 0.0)
                             and harvested < consumed)
    return failures == 0, f"{failures} actions harvest more than they consume or break the power balance"


def check_state_dim(scenario, scheme, seed):
    dims = []
    for augment in (False, True):
        env = SliptEnvironment(scenario, scheme=scheme, augment_state_with_channels=augment, seed=seed)
        dims.append((env.reset().shape[0], env.state_dim))
    return all(a == b for a, b in dims), f"(observed, expected): {dims}"


def validation(
    rundir,
    seed,
    scheme,
    scenario,
    env_args,
    # Checks
    num_checks,
    num_scenarios,
):
    seed_everything(seed)
    Logger(os.path.join(rundir, "validate_log.txt"), "w+")

    scenario = build_scenario(scenario)
    env = SliptEnvironment(scenario, scheme=scheme, seed=seed, **env_args)
    positions = PlacementSet(scenario, num_scenarios, seed).positions
    rng = np.random.default_rng(seed)

    checks = {
        "channel": lambda: check_channel(scenario, positions),
        "dimming": lambda: check_dimming(scenario),
        "projection": lambda: check_projection(env, random_raw_actions(env, rng, num_checks)),
        "agreement": lambda: check_agreement(env, positions, rng, num_checks),
        "energy": lambda: check_energy(env, positions, rng, num_checks),
        "state_dim": lambda: check_state_dim(scenario, scheme, seed),
    }
    rows = []
    for name, check in checks.items():
        passed, detail = check()
        print(f"[{'PASS' if passed else 'FAIL'}][{name}] {detail}")
        rows.append({"check": name, "passed": bool(passed), "detail": detail})

    digest = config_hash(scenario.to_dict(), dict(env_args))
    for row in rows:
        row.update(seed=seed, config_hash=digest, code_version=CODE_VERSION, schema_version=SCHEMA_VERSION)
    write_csv(rows, os.path.join(rundir, "validate_result.csv"), VALIDATE_COLUMNS)

    all_passed = all(row["passed"] for row in rows)
    print(f"{sum(row['passed'] for row in rows)} of {len(rows)} checks passed")
    return all_passed
