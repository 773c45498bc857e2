import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

DOWN = (0.0, 0.0, -1.0)
UP = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class DeviceConstants:
    """Photodiode / LED constants of the line-of-sight link."""
    fov_semi_angle: float = 60.0  # degrees
    half_power_semi_angle: float = 60.0  # degrees
    pd_area: float = 1e-4  # m^2
    refractive_index: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.fov_semi_angle < 90.0:
            raise ValueError(f"fov_semi_angle must be in (0, 90) degrees, got {self.fov_semi_angle}")
        if not 0.0 < self.half_power_semi_angle < 90.0:
            raise ValueError("half_power_semi_angle must be in (0, 90) degrees, "
                             f"got {self.half_power_semi_angle}")
        if self.pd_area <= 0.0:
            raise ValueError(f"pd_area must be positive, got {self.pd_area}")
        if self.refractive_index < 0.0:
            raise ValueError(f"refractive_index must be >= 0, got {self.refractive_index}")


@dataclass(frozen=True)
class ChannelMatrix:
    """K x N line-of-sight gains, row k = user, column n = LED."""
    gains: np.ndarray

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]

    @property
    def num_leds(self) -> int:
        return self.gains.shape[1]


def lambertian_order(half_power_semi_angle: float) -> float:
    """m = -ln 2 / ln(cos(half-power semi-angle))."""
    cos_half = math.cos(math.radians(half_power_semi_angle))
    if cos_half <= 0.0 or cos_half >= 1.0:
        raise ValueError("half-power semi-angle must give 0 < cos < 1, "
                         f"got {half_power_semi_angle} degrees")
    return -math.log(2.0) / math.log(cos_half)


def concentrator_gain(incidence_angle: float, constants: DeviceConstants) -> float:
    """Optical concentrator gain n_R^2 / sin^2(FOV) inside the field of view, zero outside."""
    if incidence_angle < 0.0:
        raise ValueError(f"incidence angle must be >= 0, got {incidence_angle}")
    if incidence_angle > constants.fov_semi_angle:
        return 0.0
    return constants.refractive_index**2 / math.sin(math.radians(constants.fov_semi_angle))**2


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("orientation vector must be non-zero")
    return v / norm


def channel_gain(led: Sequence[float],
                 user: Sequence[float],
                 constants: DeviceConstants,
                 led_normal: Sequence[float] = DOWN,
                 pd_normal: Sequence[float] = UP) -> float:
    """
    LoS DC gain between one LED and one photodiode.
    Args:
        led, user: (3,) positions in meters.
        constants: device constants.
        led_normal, pd_normal: orientation vectors (normalized here).
    Returns:
        h = (m+1) A / (2 pi d^2) * G(psi) * cos^m(phi) * cos(psi) inside the FOV, else 0.
    """
    led = np.asarray(led, dtype=np.float64)
    user = np.asarray(user, dtype=np.float64)
    los = user - led
    d = float(np.linalg.norm(los))
    if d == 0.0:
        raise ValueError("LED and user positions coincide (d = 0)")

    direction = los / d
    cos_phi = float(np.clip(np.dot(direction, _unit(led_normal)), -1.0, 1.0))
    cos_psi = float(np.clip(np.dot(-direction, _unit(pd_normal)), -1.0, 1.0))
    if cos_phi <= 0.0 or cos_psi <= 0.0:
        return 0.0  # behind the LED or the photodiode

    psi = math.degrees(math.acos(cos_psi))
    gain = concentrator_gain(psi, constants)
    if gain == 0.0:
        return 0.0

    m = lambertian_order(constants.half_power_semi_angle)
    return (m + 1.0) * constants.pd_area / (2.0 * math.pi * d**2) \
        * gain * cos_phi**m * cos_psi


def build_channel_matrix(scenario, user_positions, pd_normals: Optional[Sequence] = None) -> ChannelMatrix:
    """
    Evaluate channel_gain over all (user, LED) pairs of a scenario.
    Args:
        scenario: dataset.scenario.Scenario with LED positions / orientations.
        user_positions: (K, 3) user coordinates.
        pd_normals: optional (K, 3) photodiode orientations, defaults to the scenario's.
    Returns:
        ChannelMatrix with (K, N) gains.
    """
    user_positions = np.asarray(user_positions, dtype=np.float64).reshape(-1, 3)
    led_normals = scenario.led_normals or [DOWN] * scenario.num_leds
    if pd_normals is None:
        pd_normals = scenario.pd_normals or [UP] * len(user_positions)

    gains = np.zeros((len(user_positions), scenario.num_leds))
    for k, user in enumerate(user_positions):
        for n, led in enumerate(scenario.led_positions):
            gains[k, n] = channel_gain(led, user, scenario.device, led_normals[n], pd_normals[k])
    return ChannelMatrix(gains)
