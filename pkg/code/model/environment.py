from dataclasses import dataclass
from typing import Optional

import numpy as np

from dataset.scenario import SCHEMES, Scenario, sample_user_positions
from model.channel import ChannelMatrix, build_channel_matrix
from model.dimming import (DIMMING_TOLERANCE, DimmingState, dimming_deviation, resolve_dimming,
                           verify_dimming_constraint)
from model.rates import Beamformers, RateSplit, noma_rates, rsma_rates
from model.slipt import energy_efficiency, harvested_powers, total_power

CONSTRAINT_TOLERANCE = 1e-9
CONSTRAINT_NAMES = ('common_rate', 'qos', 'max_power', 'min_harvest', 'led_selection', 'dimming',
                    'dynamic_range')
REWARD_MODES = ('satisfaction-bonus', 'penalty')


@dataclass(frozen=True)
class ActionVector:
    beamformers: Beamformers
    selection: np.ndarray  # (N,) 0/1, diag of A
    split: RateSplit

    def to_raw(self) -> np.ndarray:
        """Physical-unit raw layout [common | private (user-major) | selection | split]."""
        return np.concatenate([
            self.beamformers.common,
            self.beamformers.private.reshape(-1),
            self.selection.astype(np.float64),
            self.split.allocations,
        ])


@dataclass(frozen=True)
class StateVector:
    common_rates: np.ndarray
    private_rates: np.ndarray
    harvested: np.ndarray
    beams: np.ndarray  # flattened [common | private]

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.common_rates, self.private_rates, self.harvested, self.beams])


@dataclass(frozen=True)
class SystemMetrics:
    common_rates: np.ndarray
    private_rates: np.ndarray
    delivered_split: np.ndarray
    harvested: np.ndarray
    total_power: float
    aggregate_rate: float
    energy_efficiency: float  # nan when the power accounting is not positive
    common_decodable: bool


@dataclass(frozen=True)
class ConstraintVerdict:
    satisfied: np.ndarray  # (7,) bool, C1..C7
    margins: np.ndarray  # (7,) signed slack

    @property
    def num_satisfied(self) -> int:
        return int(np.sum(self.satisfied))

    @property
    def all_satisfied(self) -> bool:
        return bool(np.all(self.satisfied))

    def as_dict(self) -> dict:
        return {name: bool(s) for name, s in zip(CONSTRAINT_NAMES, self.satisfied)}


def action_dim(num_users: int, num_leds: int) -> int:
    return num_leds * (num_users + 2) + num_users


def state_dim(num_users: int, num_leds: int, augment_state_with_channels=False) -> int:
    dim = 3 * num_users + num_leds * (num_users + 1)
    return dim + num_users * num_leds if augment_state_with_channels else dim


def split_raw_action(raw, num_users: int, num_leds: int):
    """Split a raw action into (common, private (K, N), selection logits, split)."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (action_dim(num_users, num_leds), ):
        raise ValueError(f"raw action must have shape ({action_dim(num_users, num_leds)},), "
                         f"got {raw.shape}")
    n, k = num_leds, num_users
    common = raw[:n]
    private = raw[n:n + k * n].reshape(k, n)
    logits = raw[n + k * n:2 * n + k * n]
    split = raw[2 * n + k * n:]
    return common, private, logits, split


def top_k_selection(logits, n_active: int) -> np.ndarray:
    """0/1 vector marking the n_active largest logits, ties broken by the lowest index."""
    order = np.argsort(-np.asarray(logits, dtype=np.float64), kind='stable')
    selection = np.zeros(len(logits), dtype=np.int64)
    selection[order[:n_active]] = 1
    return selection


def project_action(raw, num_users: int, num_leds: int, n_active: int, amplitude_budget: float) -> ActionVector:
    """
    Map a physical-unit raw vector onto the feasible action set.
    Selection keeps the top-N_a logits (C5), each LED's beam column is scaled down uniformly
    when |w_n^(c)| + sum_k |w_kn^(p)| exceeds the budget Xi (C7), and the split is clipped at 0.
    Feasible inputs come back unchanged.
    """
    common, private, logits, split = split_raw_action(raw, num_users, num_leds)
    selection = top_k_selection(logits, n_active)

    amplitude = np.abs(common) + np.abs(private).sum(axis=0)
    scale = np.ones(num_leds)
    over = amplitude > amplitude_budget * (1.0 + 1e-12)
    scale[over] = amplitude_budget / amplitude[over]

    return ActionVector(beamformers=Beamformers(common=common * scale, private=private * scale[None]),
                        selection=selection,
                        split=RateSplit(np.maximum(split, 0.0)))


def _holds(lhs: float, rhs: float, tolerance=CONSTRAINT_TOLERANCE) -> bool:
    return lhs >= rhs - tolerance * max(abs(lhs), abs(rhs))


def evaluate(scenario: Scenario,
             dimming_state: DimmingState,
             action: ActionVector,
             channels: ChannelMatrix,
             scheme: str = 'rsma'):
    """
    Compute rates, harvested powers, total power and the C1..C7 verdict of one action.
    Returns:
        (StateVector, SystemMetrics, ConstraintVerdict)
    """
    assert scheme in SCHEMES, f"Unsupported scheme: {scheme}"
    beams = action.beamformers
    selection = action.selection
    noise = scenario.noise

    if scheme == 'rsma':
        report = rsma_rates(channels, selection, beams, action.split, noise)
    else:
        report = noma_rates(channels, selection, beams.private, noise)

    harvested = harvested_powers(channels, selection, dimming_state.dc_bias, scenario.harvesting)
    p_tot = total_power(beams, selection, dimming_state.dc_bias, dimming_state.n_active, harvested,
                        scenario.power)
    ee = energy_efficiency(report.aggregate, p_tot) if p_tot > 0.0 else float('nan')

    thresholds = scenario.thresholds
    user_rates = report.user_rates
    worst_common = float(np.min(report.common_rates))
    split_total = float(np.sum(action.split.allocations))
    amplitude = beams.per_led_amplitude
    budget = dimming_state.amplitude_budget
    selection_ok = bool(np.all((selection == 0) | (selection == 1))) \
        and int(np.sum(selection)) == dimming_state.n_active

    margins = np.array([
        worst_common - split_total,
        float(np.min(user_rates)) - thresholds.qos,
        thresholds.max_power - p_tot,
        float(np.min(harvested)) - thresholds.min_harvest,
        0.0 if selection_ok else -1.0,
        DIMMING_TOLERANCE
        - dimming_deviation(dimming_state.n_active, dimming_state.dc_bias, scenario.dimming),
        float(np.min(budget - amplitude)),
    ])
    satisfied = np.array([
        _holds(worst_common, split_total),
        all(_holds(float(r), thresholds.qos) for r in user_rates),
        _holds(thresholds.max_power, p_tot),
        all(_holds(float(p), thresholds.min_harvest) for p in harvested),
        selection_ok,
        verify_dimming_constraint(dimming_state.n_active, dimming_state.dc_bias, scenario.dimming),
        all(_holds(budget, float(a)) for a in amplitude),
    ])

    state = StateVector(common_rates=report.common_rates,
                        private_rates=report.private_rates,
                        harvested=harvested,
                        beams=beams.flatten())
    metrics = SystemMetrics(common_rates=report.common_rates,
                            private_rates=report.private_rates,
                            delivered_split=report.delivered_split,
                            harvested=harvested,
                            total_power=p_tot,
                            aggregate_rate=report.aggregate,
                            energy_efficiency=ee,
                            common_decodable=report.common_decodable)
    return state, metrics, ConstraintVerdict(satisfied=satisfied, margins=margins)


def reward(metrics: SystemMetrics, verdict: ConstraintVerdict, mode='satisfaction-bonus', penalty_weight=1.0) -> float:
    """`satisfaction-bonus`: R^Agg (1 + #satisfied). `penalty`: R^Agg - penalty_weight * #violated."""
    if mode == 'satisfaction-bonus':
        return metrics.aggregate_rate * (1 + verdict.num_satisfied)
    assert mode == 'penalty', f"Unsupported reward mode: {mode}"
    return metrics.aggregate_rate - penalty_weight * (len(verdict.satisfied) - verdict.num_satisfied)


class SliptEnvironment:
    """
    Episodic wrapper around `evaluate`. User positions are fixed within an episode and drawn
    uniformly at reset; the next state reports the metrics of the action just taken.
    Actions are normalized raw vectors: beam coordinates are in units of Xi and split
    coordinates in units of `split_scale`.
    """
    def __init__(self,
                 scenario: Scenario,
                 scheme='rsma',
                 episode_length=64,
                 split_scale=2.0,
                 reward_mode='satisfaction-bonus',
                 penalty_weight=1.0,
                 augment_state_with_channels=False,
                 seed=0):
        assert scheme in SCHEMES, f"Unsupported scheme: {scheme}"
        assert reward_mode in REWARD_MODES, f"Unsupported reward mode: {reward_mode}"
        assert episode_length >= 1
        self.scenario = scenario
        self.scheme = scheme
        self.episode_length = episode_length
        self.split_scale = split_scale
        self.reward_mode = reward_mode
        self.penalty_weight = penalty_weight
        self.augment_state_with_channels = augment_state_with_channels
        self.dimming_state = resolve_dimming(scenario.dimming)

        self.rng = np.random.default_rng(seed)
        self.positions = None
        self.channels = None
        self.state = None
        self.t = 0
        self.done = True

    @property
    def num_users(self) -> int:
        return self.scenario.num_users

    @property
    def num_leds(self) -> int:
        return self.scenario.num_leds

    @property
    def action_dim(self) -> int:
        return action_dim(self.num_users, self.num_leds)

    @property
    def state_dim(self) -> int:
        return state_dim(self.num_users, self.num_leds, self.augment_state_with_channels)

    def seed(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        """Start an episode at freshly drawn user positions; returns the zero-action state."""
        if seed is not None:
            self.seed(seed)
        return self.set_placement(sample_user_positions(self.scenario, self.rng))

    def set_placement(self, positions) -> np.ndarray:
        """Start an episode at the given (K, 3) user positions."""
        self.positions = np.asarray(positions, dtype=np.float64).reshape(self.num_users, 3)
        self.channels = build_channel_matrix(self.scenario, self.positions)
        self.t = 0
        self.done = False
        state, _, _ = evaluate(self.scenario, self.dimming_state,
                               self.to_action(np.zeros(self.action_dim)), self.channels, self.scheme)
        self.state = self._observe(state)
        return self.state

    def to_action(self, raw) -> ActionVector:
        """Scale a normalized raw action to physical units and project it."""
        common, private, logits, split = split_raw_action(raw, self.num_users, self.num_leds)
        xi = self.dimming_state.amplitude_budget
        if self.scheme == 'noma':
            common, split = np.zeros_like(common), np.zeros_like(split)
        physical = np.concatenate([common * xi, private.reshape(-1) * xi, logits, split * self.split_scale])
        return project_action(physical, self.num_users, self.num_leds, self.dimming_state.n_active, xi)

    def step(self, raw):
        """
        Returns:
            (next_state, reward, done, info) with info holding the projected action, metrics and verdict.
        """
        if self.done:
            raise RuntimeError("cannot step a finished episode, call reset() first")
        action = self.to_action(raw)
        state, metrics, verdict = evaluate(self.scenario, self.dimming_state, action, self.channels,
                                           self.scheme)
        assert verdict.satisfied[4] and verdict.satisfied[6], "projected action violates C5/C7"
        r = reward(metrics, verdict, self.reward_mode, self.penalty_weight)

        self.t += 1
        self.done = self.t >= self.episode_length
        self.state = self._observe(state)
        return self.state, r, self.done, {"action": action, "metrics": metrics, "verdict": verdict}

    def _observe(self, state: StateVector) -> np.ndarray:
        obs = state.to_array()
        if self.augment_state_with_channels:
            obs = np.concatenate([obs, self.channels.gains.reshape(-1)])
        assert obs.shape == (self.state_dim, )
        return obs
