import math
import warnings
from dataclasses import dataclass

DIMMING_TOLERANCE = 1e-6


@dataclass(frozen=True)
class DimmingConfig:
    target_level: float = 1.0  # eta in (0, 1]
    n_leds: int = 6
    current_min: float = 0.0  # I_l, amperes
    current_max: float = 10e-3  # I_h, amperes

    def __post_init__(self):
        if not 0.0 < self.target_level <= 1.0:
            raise ValueError(f"target dimming level must be in (0, 1], got {self.target_level}")
        if self.n_leds < 1:
            raise ValueError(f"n_leds must be >= 1, got {self.n_leds}")
        if not self.current_min < self.current_max:
            raise ValueError(f"current_min ({self.current_min}) must be below "
                             f"current_max ({self.current_max})")

    @property
    def current_bias(self) -> float:
        """I_0, the bias of full analog dimming with every LED on."""
        return 0.5 * (self.current_min + self.current_max)


@dataclass(frozen=True)
class DimmingState:
    n_active: int
    dc_bias: float
    amplitude_budget: float
    clamped: bool = False


def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def active_led_count(config: DimmingConfig) -> int:
    """N_a = round(eta * N), at least one LED."""
    return max(1, _round_half_away(config.target_level * config.n_leds))


def _raw_dc_bias(config: DimmingConfig, n_active: int) -> float:
    if n_active <= 0:
        raise ValueError(f"number of active LEDs must be >= 1, got {n_active}")
    ratio = config.target_level * config.n_leds / n_active
    if ratio == 1.0:
        return config.current_bias
    return ratio * (config.current_bias - config.current_min) + config.current_min


def dc_bias(config: DimmingConfig, n_active: int) -> float:
    """Uniform DC bias eta N (I_0 - I_l) / N_a + I_l, clamped into [I_l, I_h]."""
    raw = _raw_dc_bias(config, n_active)
    clamped = min(max(raw, config.current_min), config.current_max)
    if clamped != raw:
        warnings.warn(f"DC bias {raw:.6g} A outside [{config.current_min}, {config.current_max}] A, "
                      "clamped")
    return clamped


def amplitude_budget(dc_bias: float, config: DimmingConfig) -> float:
    """Per-LED modulation budget Xi = min(i_DC - I_l, I_h - i_DC)."""
    return max(0.0, min(dc_bias - config.current_min, config.current_max - dc_bias))


def verify_dimming_constraint(n_active: int,
                              dc_bias: float,
                              config: DimmingConfig,
                              tolerance: float = DIMMING_TOLERANCE) -> bool:
    return dimming_deviation(n_active, dc_bias, config) <= tolerance


def dimming_deviation(n_active: int, dc_bias: float, config: DimmingConfig) -> float:
    """Relative deviation of the achieved dimming level from the target."""
    achieved = n_active * (dc_bias - config.current_min) \
        / (config.n_leds * (config.current_bias - config.current_min))
    return abs(achieved - config.target_level) / config.target_level


def resolve_dimming(config: DimmingConfig) -> DimmingState:
    n_active = active_led_count(config)
    raw = _raw_dc_bias(config, n_active)
    bias = min(max(raw, config.current_min), config.current_max)
    return DimmingState(n_active=n_active,
                        dc_bias=bias,
                        amplitude_budget=amplitude_budget(bias, config),
                        clamped=bias != raw)
