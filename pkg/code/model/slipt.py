from dataclasses import dataclass

import numpy as np

from model.rates import Beamformers

POWER_TERM_MODES = ('as-printed', 'absolute', 'squared')


@dataclass(frozen=True)
class HarvestingConstants:
    fill_factor: float = 0.75  # tau
    thermal_voltage: float = 0.025  # V_t, volts
    dark_saturation: float = 1e-9  # I_s, amperes
    eh_log_active_only: bool = False  # restrict the log-argument sum to active LEDs

    def __post_init__(self):
        if not 0.0 < self.fill_factor <= 1.0:
            raise ValueError(f"fill_factor must be in (0, 1], got {self.fill_factor}")
        if self.thermal_voltage <= 0.0:
            raise ValueError(f"thermal_voltage must be positive, got {self.thermal_voltage}")
        if self.dark_saturation <= 0.0:
            raise ValueError(f"dark_saturation must be positive, got {self.dark_saturation}")


@dataclass(frozen=True)
class PowerConstants:
    amplifier_factor: float = 1.2  # zeta
    conversion_factor: float = 1.0  # phi, W/A
    power_term_mode: str = 'absolute'

    def __post_init__(self):
        if self.amplifier_factor < 1.0:
            raise ValueError(f"amplifier_factor must be >= 1, got {self.amplifier_factor}")
        if self.conversion_factor <= 0.0:
            raise ValueError(f"conversion_factor must be positive, got {self.conversion_factor}")
        if self.power_term_mode not in POWER_TERM_MODES:
            raise ValueError(f"power_term_mode must be one of {POWER_TERM_MODES}, "
                             f"got {self.power_term_mode!r}")


def harvested_powers(channels, selection, dc_bias: float, constants: HarvestingConstants) -> np.ndarray:
    """
    Harvested DC power of every user.
    Args:
        channels: (K, N) gains.
        selection: (N,) binary LED activation.
        dc_bias: i_DC in amperes.
    Returns:
        (K,) tau V_t (sum_n a_n h_kn i_DC) ln(1 + sum_n h_kn i_DC / I_s), in watts.
    """
    if dc_bias < 0.0:
        raise ValueError(f"dc_bias must be >= 0, got {dc_bias}")
    gains = np.atleast_2d(getattr(channels, 'gains', channels)).astype(np.float64)
    selection = np.asarray(selection, dtype=np.float64)

    active_current = gains @ selection * dc_bias
    log_current = active_current if constants.eh_log_active_only else gains.sum(axis=1) * dc_bias
    return constants.fill_factor * constants.thermal_voltage * active_current \
        * np.log1p(log_current / constants.dark_saturation)


def harvested_power(k: int, channels, selection, dc_bias: float, constants: HarvestingConstants) -> float:
    return float(harvested_powers(channels, selection, dc_bias, constants)[k])


def beam_power_term(beamformers: Beamformers, selection, mode: str = 'absolute') -> float:
    """sum_n a_n (w_n^(c) + sum_k w_kn^(p)), with the weights taken raw, absolute or squared."""
    weights = np.concatenate([beamformers.common[None], beamformers.private], axis=0)
    if mode == 'absolute':
        weights = np.abs(weights)
    elif mode == 'squared':
        weights = weights**2
    else:
        assert mode == 'as-printed', f"Unsupported power term mode: {mode}"
    return float(np.dot(weights.sum(axis=0), np.asarray(selection, dtype=np.float64)))


def total_power(beamformers: Beamformers, selection, dc_bias: float, n_active: int, harvested,
                constants: PowerConstants) -> float:
    """P^tot = zeta * beam term + phi N_a i_DC - sum_k P_k^Har, in watts."""
    return constants.amplifier_factor * beam_power_term(beamformers, selection, constants.power_term_mode) \
        + constants.conversion_factor * n_active * dc_bias - float(np.sum(harvested))


def energy_efficiency(aggregate_rate: float, total_power: float) -> float:
    if total_power <= 0.0:
        raise ValueError(f"total power must be positive to define energy efficiency, got {total_power}")
    return aggregate_rate / total_power
