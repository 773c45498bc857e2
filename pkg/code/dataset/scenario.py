import copy
import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import torch
from torch.utils.data import Dataset

from model.channel import DeviceConstants
from model.dimming import DimmingConfig
from model.slipt import HarvestingConstants, PowerConstants

SWEEP_PARAMETERS = ('dimming', 'qos', 'min_harvest', 'num_users')
SCHEMES = ('rsma', 'noma')


@dataclass(frozen=True)
class Thresholds:
    qos: float = 3.0  # minimum per-user rate, bits/s/Hz
    max_power: float = 20.0  # P_max, watts
    min_harvest: float = 1e-8  # P^Har_min, watts

    def __post_init__(self):
        for name in ('qos', 'max_power', 'min_harvest'):
            if getattr(self, name) < 0.0:
                raise ValueError(f"threshold {name} must be >= 0, got {getattr(self, name)}")


def _to_tuple(value):
    if isinstance(value, (list, tuple)):
        return tuple(_to_tuple(v) for v in value)
    return float(value)


def _to_list(value):
    if isinstance(value, tuple):
        return [_to_list(v) for v in value]
    return value


@dataclass(frozen=True)
class Scenario:
    """
    Indoor multi-LED room: geometry, device constants, noise, thresholds and dimming target.
    Every field is immutable; use `dataclasses.replace` or `Scenario.from_dict` to derive variants.
    """
    room: Tuple[float, float, float] = (8.0, 8.0, 3.0)
    led_positions: Tuple[Tuple[float, float, float], ...] = (
        (2.0, 2.0, 3.0), (4.0, 2.0, 3.0), (6.0, 2.0, 3.0),
        (2.0, 6.0, 3.0), (4.0, 6.0, 3.0), (6.0, 6.0, 3.0),
    )
    num_users: int = 2
    user_bounds: Tuple[Tuple[float, float], ...] = ((0.0, 8.0), (0.0, 8.0), (0.0, 1.0))
    device: DeviceConstants = field(default_factory=DeviceConstants)
    harvesting: HarvestingConstants = field(default_factory=HarvestingConstants)
    power: PowerConstants = field(default_factory=PowerConstants)
    noise_var: float = 1e-14
    noise_var_per_user: Optional[Tuple[float, ...]] = None
    thresholds: Thresholds = field(default_factory=Thresholds)
    dimming: DimmingConfig = field(default_factory=DimmingConfig)
    led_normals: Optional[Tuple[Tuple[float, float, float], ...]] = None
    pd_normals: Optional[Tuple[Tuple[float, float, float], ...]] = None
    seed: int = 0

    def __post_init__(self):
        if len(self.room) != 3 or min(self.room) <= 0.0:
            raise ValueError(f"room extents must be three positive lengths, got {self.room}")
        if len(self.led_positions) == 0:
            raise ValueError("scenario needs at least one LED")
        for led in self.led_positions:
            if len(led) != 3 or any(not 0.0 <= c <= r for c, r in zip(led, self.room)):
                raise ValueError(f"LED position {led} is outside the room {self.room}")
        if self.num_users < 1:
            raise ValueError(f"num_users must be >= 1, got {self.num_users}")
        if len(self.user_bounds) != 3:
            raise ValueError(f"user_bounds needs one (low, high) pair per axis, got {self.user_bounds}")
        for (low, high), r in zip(self.user_bounds, self.room):
            if not 0.0 <= low <= high <= r:
                raise ValueError(f"user bounds ({low}, {high}) must lie inside the room extent {r}")
        if self.noise_var <= 0.0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")
        if self.noise_var_per_user is not None:
            if len(self.noise_var_per_user) != self.num_users:
                raise ValueError("noise_var_per_user needs one entry per user")
            if min(self.noise_var_per_user) <= 0.0:
                raise ValueError("noise_var_per_user entries must be positive")
        if self.dimming.n_leds != self.num_leds:
            raise ValueError(f"dimming.n_leds ({self.dimming.n_leds}) does not match "
                             f"the number of LEDs ({self.num_leds})")
        if self.led_normals is not None and len(self.led_normals) != self.num_leds:
            raise ValueError("led_normals needs one orientation per LED")
        if self.pd_normals is not None and len(self.pd_normals) != self.num_users:
            raise ValueError("pd_normals needs one orientation per user")

    @property
    def num_leds(self) -> int:
        return len(self.led_positions)

    @property
    def noise(self):
        """Scalar noise variance or (K,) per-user override."""
        if self.noise_var_per_user is not None:
            return np.asarray(self.noise_var_per_user, dtype=np.float64)
        return self.noise_var

    def to_dict(self) -> dict:
        """Plain YAML-safe mapping; unset optional overrides are omitted."""
        return {k: v for k, v in _to_list_tree(dataclasses.asdict(self)).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = copy.deepcopy(d)
        kwargs = {}
        for name in ('room', 'led_positions', 'user_bounds', 'noise_var_per_user', 'led_normals',
                     'pd_normals'):
            if d.get(name) is not None:
                kwargs[name] = _to_tuple(d[name])
        for name in ('num_users', 'seed'):
            if name in d:
                kwargs[name] = int(d[name])
        if 'noise_var' in d:
            kwargs['noise_var'] = float(d['noise_var'])

        num_leds = len(kwargs.get('led_positions', cls.led_positions))
        dimming = dict(d.get('dimming') or {})
        dimming['n_leds'] = int(dimming.get('n_leds', num_leds))
        kwargs['dimming'] = DimmingConfig(**_floats(dimming, exclude=('n_leds', )))
        kwargs['device'] = DeviceConstants(**_floats(d.get('device') or {}))
        kwargs['harvesting'] = HarvestingConstants(
            **_floats(d.get('harvesting') or {}, exclude=('eh_log_active_only', )))
        kwargs['power'] = PowerConstants(**_floats(d.get('power') or {}, exclude=('power_term_mode', )))
        kwargs['thresholds'] = Thresholds(**_floats(d.get('thresholds') or {}))

        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**kwargs)


def _floats(d: dict, exclude=()) -> dict:
    # YAML reads `1e-14` as a string, so coerce numeric fields explicitly
    return {k: (v if k in exclude else float(v)) for k, v in d.items()}


def _to_list_tree(value):
    if isinstance(value, dict):
        return {k: _to_list_tree(v) for k, v in value.items()}
    return _to_list(value)


def default_scenario() -> Scenario:
    """8x8x3 m room with six ceiling LEDs (2 m apart along x, 4 m along y) and the reference constants."""
    return Scenario()


def merge_dict(base: dict, overrides: Optional[dict]) -> dict:
    """Recursively merge `overrides` over a copy of `base`."""
    merged = copy.deepcopy(base)
    for k, v in (overrides or {}).items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = merge_dict(merged[k], v)
        else:
            merged[k] = copy.deepcopy(v)
    return merged


def build_scenario(overrides: Optional[dict] = None) -> Scenario:
    """Merge a (partial) scenario mapping over the default scenario and validate it."""
    merged = merge_dict(default_scenario().to_dict(), overrides)
    if 'n_leds' not in ((overrides or {}).get('dimming') or {}):
        merged['dimming'].pop('n_leds')  # follow the (possibly overridden) LED list
    return Scenario.from_dict(merged)


def sample_user_positions(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """(K, 3) user positions drawn uniformly inside the scenario's user bounds."""
    bounds = np.asarray(scenario.user_bounds, dtype=np.float64)
    return rng.uniform(bounds[:, 0], bounds[:, 1], size=(scenario.num_users, 3))


class PlacementSet(Dataset):
    """
    Fixed evaluation set of seeded user placements, shared across sweep cells so comparisons are paired.
    Item i is a dict with the placement index and its (K, 3) positions.
    """
    def __init__(self, scenario: Scenario, num_placements=100, seed=0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.positions = np.stack(
            [sample_user_positions(scenario, rng) for _ in range(num_placements)])

    def __len__(self):
        return len(self.positions)

    def __getitem__(self, idx) -> dict:
        return {
            "id": torch.tensor(idx, dtype=torch.long),
            "positions": torch.from_numpy(self.positions[idx]),
        }


@dataclass(frozen=True)
class SweepSpec:
    parameter: str  # one of SWEEP_PARAMETERS
    values: Tuple[float, ...]
    scheme: str = 'rsma'
    replications: int = 1
    seed_base: int = 0

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {self.parameter!r}")
        if len(self.values) == 0:
            raise ValueError("sweep value list must be nonempty")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")

    def apply(self, scenario: Scenario, value) -> Scenario:
        """Scenario for one swept value."""
        if self.parameter == 'dimming':
            return dataclasses.replace(scenario,
                                       dimming=dataclasses.replace(scenario.dimming,
                                                                   target_level=float(value)))
        if self.parameter == 'qos':
            return dataclasses.replace(scenario,
                                       thresholds=dataclasses.replace(scenario.thresholds,
                                                                      qos=float(value)))
        if self.parameter == 'min_harvest':
            return dataclasses.replace(scenario,
                                       thresholds=dataclasses.replace(scenario.thresholds,
                                                                      min_harvest=float(value)))
        return dataclasses.replace(scenario, num_users=int(value), noise_var_per_user=None,
                                   pd_normals=None)

    def cells(self):
        """(cell_index, value, replication, seed) in row order."""
        index = 0
        for value in self.values:
            for replication in range(self.replications):
                yield index, value, replication, self.seed_base + index
                index += 1
