import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import yaml
from tqdm import tqdm

from dataset.scenario import Scenario
from model.environment import ActionVector
from model.rates import Beamformers, RateSplit

GRID_CAP = 10**7
TOLERANCE = 1e-9
DIMMING_TOLERANCE = 1e-6


def enumerate_selections(num_leds: int, n_active: int) -> np.ndarray:
    """All C(N, N_a) 0/1 selection vectors, ordered lexicographically by their active indices."""
    combos = list(itertools.combinations(range(num_leds), n_active))
    selections = np.zeros((len(combos), num_leds), dtype=np.int64)
    for i, combo in enumerate(combos):
        selections[i, list(combo)] = 1
    return selections


def _holds(lhs, rhs):
    return lhs >= rhs - TOLERANCE * np.maximum(np.abs(lhs), np.abs(rhs))


class OracleEvaluator:
    """
    Batched metric and reward pipeline for one user placement, written against the closed-form
    expressions directly (channel, dimming, rates, harvesting, power) so that it can cross-check
    the environment.
    """
    def __init__(self, scenario: Scenario, positions, scheme='rsma', reward_mode='satisfaction-bonus',
                 penalty_weight=1.0):
        self.scenario = scenario
        self.scheme = scheme
        self.reward_mode = reward_mode
        self.penalty_weight = penalty_weight
        self.num_users = scenario.num_users
        self.num_leds = scenario.num_leds
        self.gains = self._gains(np.asarray(positions, dtype=np.float64).reshape(self.num_users, 3))
        self.noise = np.broadcast_to(np.asarray(scenario.noise, dtype=np.float64), (self.num_users, ))

        dim = scenario.dimming
        self.current_bias = 0.5 * (dim.current_min + dim.current_max)
        self.n_active = max(1, int(math.floor(dim.target_level * dim.n_leds + 0.5)))
        dc = dim.target_level * dim.n_leds / self.n_active * (self.current_bias - dim.current_min) \
            + dim.current_min
        self.dc_bias = min(max(dc, dim.current_min), dim.current_max)
        self.amplitude_budget = max(0.0, min(self.dc_bias - dim.current_min, dim.current_max - self.dc_bias))
        achieved = self.n_active * (self.dc_bias - dim.current_min) \
            / (dim.n_leds * (self.current_bias - dim.current_min))
        self.dimming_ok = abs(achieved - dim.target_level) / dim.target_level <= DIMMING_TOLERANCE

    def _gains(self, users) -> np.ndarray:
        s = self.scenario
        dev = s.device
        leds = np.asarray(s.led_positions, dtype=np.float64)
        led_normals = np.asarray(s.led_normals or [(0.0, 0.0, -1.0)] * self.num_leds, dtype=np.float64)
        pd_normals = np.asarray(s.pd_normals or [(0.0, 0.0, 1.0)] * self.num_users, dtype=np.float64)
        led_normals = led_normals / np.linalg.norm(led_normals, axis=1, keepdims=True)
        pd_normals = pd_normals / np.linalg.norm(pd_normals, axis=1, keepdims=True)

        vec = users[:, None, :] - leds[None, :, :]  # (K, N, 3)
        d = np.linalg.norm(vec, axis=-1)
        if np.any(d == 0.0):
            raise ValueError("LED and user positions coincide (d = 0)")
        unit = vec / d[..., None]
        cos_phi = np.clip(np.einsum('knc,nc->kn', unit, led_normals), -1.0, 1.0)
        cos_psi = np.clip(-np.einsum('knc,kc->kn', unit, pd_normals), -1.0, 1.0)

        m = -math.log(2.0) / math.log(math.cos(math.radians(dev.half_power_semi_angle)))
        g = dev.refractive_index**2 / math.sin(math.radians(dev.fov_semi_angle))**2
        visible = (cos_phi > 0.0) & (cos_psi > 0.0) \
            & (np.degrees(np.arccos(np.clip(cos_psi, -1.0, 1.0))) <= dev.fov_semi_angle)
        gains = (m + 1.0) * dev.pd_area / (2.0 * math.pi * d**2) * g \
            * np.clip(cos_phi, 0.0, None)**m * np.clip(cos_psi, 0.0, None)
        return np.where(visible, gains, 0.0)

    def received(self, common, private, selection):
        """Squared received amplitudes: common (B, K) and private (B, K_rx, K_stream)."""
        eff = self.gains[None] * selection[:, None, :].astype(np.float64)  # (B, K, N)
        rx_common = np.einsum('bkn,bn->bk', eff, common)**2
        rx_private = np.einsum('bkn,bjn->bkj', eff, private)**2
        return eff, rx_common, rx_private

    def common_rates(self, common, private, selection) -> np.ndarray:
        _, rx_common, rx_private = self.received(common, private, selection)
        return np.log2(1.0 + rx_common / (rx_private.sum(axis=-1) + self.noise))

    def _noma_rates(self, eff, rx_private) -> np.ndarray:
        energy = np.sum(eff**2, axis=-1)  # (B, K)
        order = np.argsort(-energy, axis=1, kind='stable')
        position = np.argsort(order, axis=1, kind='stable')
        rates = np.zeros(energy.shape)
        for j in range(self.num_users):
            stronger = position < position[:, j:j + 1]  # (B, K) streams decoded before stream j
            interference = np.einsum('bil,bl->bi', rx_private, stronger.astype(np.float64))
            candidate = np.log2(1.0 + rx_private[:, :, j] / (interference + self.noise))
            decoders = stronger.copy()
            decoders[:, j] = True
            rates[:, j] = np.min(np.where(decoders, candidate, np.inf), axis=1)
        return rates

    def evaluate(self, common, private, selection, split=None, split_fractions=None) -> dict:
        """
        Args:
            common: (B, N), private: (B, K, N) beam weights in amperes.
            selection: (B, N) 0/1.
            split: (B, K) rate allocations, or split_fractions (B, K) scaled by min_k R_k^(c).
        Returns:
            dict of batched metrics, verdict (B, 7) and reward (B,).
        """
        common = np.asarray(common, dtype=np.float64)
        private = np.asarray(private, dtype=np.float64)
        selection = np.asarray(selection)
        batch = common.shape[0]
        eff, rx_common, rx_private = self.received(common, private, selection)
        total_rx = rx_private.sum(axis=-1)

        if self.scheme == 'rsma':
            r_common = np.log2(1.0 + rx_common / (total_rx + self.noise))
            own = np.einsum('bkk->bk', rx_private)
            r_private = np.log2(1.0 + own / (total_rx - own + self.noise))
            if split is None:
                split = np.zeros((batch, self.num_users)) if split_fractions is None \
                    else np.asarray(split_fractions) * r_common.min(axis=1, keepdims=True)
            split = np.maximum(np.asarray(split, dtype=np.float64), 0.0)
        else:
            r_common = np.zeros((batch, self.num_users))
            r_private = self._noma_rates(eff, rx_private)
            split = np.zeros((batch, self.num_users))

        worst_common = r_common.min(axis=1)
        split_total = split.sum(axis=1)
        c1 = _holds(worst_common, split_total)
        delivered = np.where(c1[:, None], split, 0.0)
        aggregate = np.sum(delivered + r_private, axis=1)

        hs = self.scenario.harvesting
        sel = selection.astype(np.float64)
        active_current = (sel @ self.gains.T) * self.dc_bias  # (B, K)
        log_current = active_current if hs.eh_log_active_only \
            else np.broadcast_to(self.gains.sum(axis=1) * self.dc_bias, active_current.shape)
        harvested = hs.fill_factor * hs.thermal_voltage * active_current \
            * np.log(1.0 + log_current / hs.dark_saturation)

        pw = self.scenario.power
        weights = np.concatenate([common[:, None, :], private], axis=1)
        if pw.power_term_mode == 'absolute':
            weights = np.abs(weights)
        elif pw.power_term_mode == 'squared':
            weights = weights**2
        beam_term = np.sum(weights.sum(axis=1) * sel, axis=1)
        p_tot = pw.amplifier_factor * beam_term + pw.conversion_factor * self.n_active * self.dc_bias \
            - harvested.sum(axis=1)
        with np.errstate(divide='ignore', invalid='ignore'):
            ee = np.where(p_tot > 0.0, aggregate / p_tot, np.nan)

        th = self.scenario.thresholds
        amplitude = np.abs(common) + np.abs(private).sum(axis=1)
        satisfied = np.stack([
            c1,
            np.all(_holds(delivered + r_private, th.qos), axis=1),
            _holds(th.max_power, p_tot),
            np.all(_holds(harvested, th.min_harvest), axis=1),
            np.all((selection == 0) | (selection == 1), axis=1) & (selection.sum(axis=1) == self.n_active),
            np.full(batch, self.dimming_ok),
            np.all(_holds(self.amplitude_budget, amplitude), axis=1),
        ], axis=1)

        num_satisfied = satisfied.sum(axis=1)
        if self.reward_mode == 'satisfaction-bonus':
            reward = aggregate * (1 + num_satisfied)
        else:
            reward = aggregate - self.penalty_weight * (satisfied.shape[1] - num_satisfied)

        return {
            "common_rates": r_common,
            "private_rates": r_private,
            "split": split,
            "delivered_split": delivered,
            "aggregate": aggregate,
            "harvested": harvested,
            "total_power": p_tot,
            "energy_efficiency": ee,
            "satisfied": satisfied,
            "reward": reward,
        }

    def evaluate_action(self, action: ActionVector) -> dict:
        """Unbatched evaluation of one projected action."""
        out = self.evaluate(action.beamformers.common[None],
                            action.beamformers.private[None],
                            np.asarray(action.selection)[None],
                            split=np.asarray(action.split.allocations)[None])
        return {k: v[0] for k, v in out.items()}


@dataclass(frozen=True)
class GridSpec:
    beam_points: int = 11  # per-coordinate resolution of the per-LED simplex lattice
    split_points: int = 5  # per-user resolution of the split-fraction lattice
    cap: int = GRID_CAP
    chunk_size: int = 65536

    def __post_init__(self):
        if self.beam_points < 1 or self.split_points < 1:
            raise ValueError("grid resolutions must be >= 1")


def simplex_lattice(dims: int, points: int, budget: float) -> np.ndarray:
    """Points of linspace(-budget, budget, points)^dims with L1 norm <= budget."""
    levels = np.array([0.0]) if points == 1 else np.linspace(-budget, budget, points)
    grid = np.array(list(itertools.product(levels, repeat=dims)), dtype=np.float64).reshape(-1, dims)
    return grid[np.abs(grid).sum(axis=1) <= budget * (1.0 + 1e-12)]


def fraction_lattice(num_users: int, points: int) -> np.ndarray:
    """Per-user split fractions on a lattice with sum <= 1."""
    levels = np.array([0.0]) if points == 1 else np.linspace(0.0, 1.0, points)
    grid = np.array(list(itertools.product(levels, repeat=num_users)), dtype=np.float64)
    return grid[grid.sum(axis=1) <= 1.0 + 1e-12]


@dataclass
class OracleResult:
    best_action: ActionVector
    best_reward: float
    best_aggregate: float
    best_feasible_aggregate: float  # nan when no evaluated action satisfied every constraint
    evaluations: int
    method: str = 'grid'

    @property
    def feasible_found(self) -> bool:
        return not math.isnan(self.best_feasible_aggregate)

    def to_row(self) -> dict:
        return {
            "method": self.method,
            "best_reward": self.best_reward,
            "best_aggregate": self.best_aggregate,
            "best_feasible_aggregate": self.best_feasible_aggregate,
            "feasible_found": self.feasible_found,
            "evaluations": self.evaluations,
        }


class _Incumbent:
    def __init__(self):
        self.reward = -np.inf
        self.aggregate = np.nan
        self.feasible_aggregate = np.nan
        self.action = None
        self.evaluations = 0

    def merge(self, out: dict, common, private, selection):
        self.evaluations += len(out["reward"])
        i = int(np.argmax(out["reward"]))
        if out["reward"][i] > self.reward:
            self.reward = float(out["reward"][i])
            self.aggregate = float(out["aggregate"][i])
            self.action = ActionVector(beamformers=Beamformers(common=common[i].copy(),
                                                               private=private[i].copy()),
                                       selection=np.asarray(selection[i], dtype=np.int64).copy(),
                                       split=RateSplit(out["split"][i].copy()))
        feasible = np.all(out["satisfied"], axis=1)
        if np.any(feasible):
            best = float(np.max(out["aggregate"][feasible]))
            if math.isnan(self.feasible_aggregate) or best > self.feasible_aggregate:
                self.feasible_aggregate = best

    def result(self, method) -> OracleResult:
        return OracleResult(best_action=self.action,
                            best_reward=self.reward,
                            best_aggregate=self.aggregate,
                            best_feasible_aggregate=self.feasible_aggregate,
                            evaluations=self.evaluations,
                            method=method)


def grid_size(evaluator: OracleEvaluator, spec: GridSpec) -> int:
    k, n_active = evaluator.num_users, evaluator.n_active
    streams = k + 1 if evaluator.scheme == 'rsma' else k
    per_led = len(simplex_lattice(streams, spec.beam_points, 1.0))
    fractions = len(fraction_lattice(k, spec.split_points)) if evaluator.scheme == 'rsma' else 1
    return math.comb(evaluator.num_leds, n_active) * per_led**n_active * fractions


def grid_search(evaluator: OracleEvaluator, spec: GridSpec = GridSpec(), show_progress=False) -> OracleResult:
    """
    Exhaustive search over selections x per-LED beam lattices (active LEDs only, inactive beams zero)
    x split fractions. Ties keep the first maximum in enumeration order.
    """
    total = grid_size(evaluator, spec)
    if total > spec.cap:
        raise ValueError(f"grid of {total} evaluations exceeds the cap of {spec.cap}")

    k, n = evaluator.num_users, evaluator.num_leds
    rsma = evaluator.scheme == 'rsma'
    lattice = simplex_lattice(k + 1 if rsma else k, spec.beam_points, evaluator.amplitude_budget)
    if not rsma:
        lattice = np.concatenate([np.zeros((len(lattice), 1)), lattice], axis=1)
    fractions = fraction_lattice(k, spec.split_points) if rsma else np.zeros((1, k))
    num_beam_combos = len(lattice)**evaluator.n_active
    chunk = max(1, spec.chunk_size // len(fractions))

    incumbent = _Incumbent()
    selections = enumerate_selections(n, evaluator.n_active)
    with tqdm(total=total, disable=not show_progress, desc="grid search") as pbar:
        for selection in selections:
            active = np.flatnonzero(selection)
            for start in range(0, num_beam_combos, chunk):
                idx = np.arange(start, min(start + chunk, num_beam_combos))
                digits = np.stack(np.unravel_index(idx, (len(lattice), ) * len(active)), axis=1)
                columns = np.zeros((len(idx), k + 1, n))
                columns[:, :, active] = np.transpose(lattice[digits], (0, 2, 1))

                columns = np.repeat(columns, len(fractions), axis=0)
                frac = np.tile(fractions, (len(idx), 1))
                sel = np.broadcast_to(selection, (len(columns), n))
                common, private = columns[:, 0], columns[:, 1:]
                out = evaluator.evaluate(common, private, sel, split_fractions=frac)
                incumbent.merge(out, common, private, sel)
                pbar.update(len(columns))
    return incumbent.result('grid')


def random_search(evaluator: OracleEvaluator, budget: int, rng: np.random.Generator, chunk_size=1024,
                  show_progress=False) -> OracleResult:
    """
    Uniform sampling of projected actions. Draws come in fixed-size chunks, so a larger budget
    evaluates a superset of the samples of a smaller one under the same seed.
    """
    assert budget >= 1
    k, n = evaluator.num_users, evaluator.num_leds
    xi = evaluator.amplitude_budget
    incumbent = _Incumbent()
    with tqdm(total=budget, disable=not show_progress, desc="random search") as pbar:
        while incumbent.evaluations < budget:
            logits = rng.uniform(size=(chunk_size, n))
            columns = rng.uniform(-xi, xi, size=(chunk_size, k + 1, n))
            fractions = rng.uniform(size=(chunk_size, k))

            take = min(chunk_size, budget - incumbent.evaluations)
            order = np.argsort(-logits[:take], axis=1, kind='stable')[:, :evaluator.n_active]
            sel = np.zeros((take, n), dtype=np.int64)
            np.put_along_axis(sel, order, 1, axis=1)
            columns = columns[:take]
            if evaluator.scheme == 'noma':
                columns[:, 0] = 0.0
            amplitude = np.abs(columns).sum(axis=1)
            scale = np.where(amplitude > xi, xi / np.where(amplitude > 0.0, amplitude, 1.0), 1.0)
            columns = columns * scale[:, None, :]
            frac = fractions[:take]
            frac = frac / np.maximum(frac.sum(axis=1, keepdims=True), 1.0)

            common, private = columns[:, 0], columns[:, 1:]
            out = evaluator.evaluate(common, private, sel, split_fractions=frac)
            incumbent.merge(out, common, private, sel)
            pbar.update(take)
    return incumbent.result('random')


def save_action(action: ActionVector, path):
    with open(path, "w") as f:
        yaml.safe_dump(
            {
                "selection": [int(a) for a in action.selection],
                "common": [float(w) for w in action.beamformers.common],
                "private": [[float(w) for w in row] for row in action.beamformers.private],
                "split": [float(r) for r in action.split.allocations],
            }, f)


def load_action(path) -> ActionVector:
    with open(path, "r") as f:
        d = yaml.safe_load(f)
    return ActionVector(beamformers=Beamformers(common=np.asarray(d["common"], dtype=np.float64),
                                                private=np.asarray(d["private"], dtype=np.float64)),
                        selection=np.asarray(d["selection"], dtype=np.int64),
                        split=RateSplit(np.asarray(d["split"], dtype=np.float64)))
