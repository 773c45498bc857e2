from dataclasses import dataclass

import numpy as np

from model.channel import ChannelMatrix

FEASIBILITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Beamformers:
    common: np.ndarray  # (N,) w^(c)
    private: np.ndarray  # (K, N), row k = w_k^(p)

    @property
    def per_led_amplitude(self) -> np.ndarray:
        """(N,) |w_n^(c)| + sum_k |w_{k,n}^(p)|."""
        return np.abs(self.common) + np.abs(self.private).sum(axis=0)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.common, self.private.reshape(-1)])


@dataclass(frozen=True)
class RateSplit:
    allocations: np.ndarray  # (K,) r*_k, bits/s/Hz

    def __post_init__(self):
        if np.any(np.asarray(self.allocations) < 0):
            raise ValueError("common-rate allocations must be non-negative")


@dataclass(frozen=True)
class RateReport:
    common_rates: np.ndarray  # (K,)
    private_rates: np.ndarray  # (K,)
    delivered_split: np.ndarray  # (K,) split actually credited to users
    aggregate: float
    common_decodable: bool

    @property
    def user_rates(self) -> np.ndarray:
        return self.delivered_split + self.private_rates


def _gains(channels) -> np.ndarray:
    return channels.gains if isinstance(channels, ChannelMatrix) else np.asarray(channels)


def _noise(noise_var, k: int) -> float:
    sigma2 = float(np.asarray(noise_var, dtype=np.float64)[k]) if np.ndim(noise_var) else float(noise_var)
    if sigma2 <= 0.0:
        raise ValueError(f"noise variance must be positive, got {sigma2}")
    return sigma2


def _received(h_k: np.ndarray, selection: np.ndarray, w: np.ndarray) -> float:
    """|h_k^T A w|^2 for one beam vector w."""
    return float(np.dot(h_k * selection, w))**2


def common_rate(k, channels, selection, beamformers: Beamformers, noise_var) -> float:
    """Rate of the common stream at user k, all private streams treated as noise."""
    sigma2 = _noise(noise_var, k)
    h_k = _gains(channels)[k]
    selection = np.asarray(selection, dtype=np.float64)
    signal = _received(h_k, selection, beamformers.common)
    interference = sum(_received(h_k, selection, w_j) for w_j in beamformers.private)
    return float(np.log2(1.0 + signal / (interference + sigma2)))


def private_rate(k, channels, selection, beamformers: Beamformers, noise_var) -> float:
    """Rate of user k's private stream after common-stream cancellation."""
    sigma2 = _noise(noise_var, k)
    h_k = _gains(channels)[k]
    selection = np.asarray(selection, dtype=np.float64)
    signal = _received(h_k, selection, beamformers.private[k])
    interference = sum(
        _received(h_k, selection, w_j) for j, w_j in enumerate(beamformers.private) if j != k)
    return float(np.log2(1.0 + signal / (interference + sigma2)))


def common_split_feasible(common_rates, split: RateSplit, tolerance=FEASIBILITY_TOLERANCE) -> bool:
    """C1: min_k R_k^(c) >= sum_k r*_k (relative slack `tolerance`)."""
    worst = float(np.min(common_rates))
    total = float(np.sum(split.allocations))
    return worst >= total - tolerance * max(abs(worst), abs(total))


def aggregate_rate(split: RateSplit, private_rates) -> float:
    return float(np.sum(np.asarray(split.allocations) + np.asarray(private_rates)))


def rsma_rates(channels, selection, beamformers: Beamformers, split: RateSplit, noise_var) -> RateReport:
    """
    Evaluate every user's RSMA rates. The split is credited only if the common stream is
    decodable by all users (C1); otherwise the delivered split is zero.
    """
    num_users = beamformers.private.shape[0]
    common = np.array(
        [common_rate(k, channels, selection, beamformers, noise_var) for k in range(num_users)])
    private = np.array(
        [private_rate(k, channels, selection, beamformers, noise_var) for k in range(num_users)])
    decodable = common_split_feasible(common, split)
    delivered = np.asarray(split.allocations, dtype=np.float64) if decodable \
        else np.zeros(num_users)
    return RateReport(common_rates=common,
                      private_rates=private,
                      delivered_split=delivered,
                      aggregate=aggregate_rate(RateSplit(delivered), private),
                      common_decodable=decodable)


def sic_order(channels, selection) -> np.ndarray:
    """User indices sorted by descending effective channel energy ||A h_k||^2 (ties by index)."""
    energy = np.sum((_gains(channels) * np.asarray(selection, dtype=np.float64))**2, axis=1)
    return np.argsort(-energy, kind='stable')


def noma_rates(channels, selection, private_beamformers, noise_var) -> RateReport:
    """
    Downlink NOMA with successive interference cancellation.
    Each user cancels the streams of all weaker-ordered users before decoding its own and
    treats the streams of stronger-ordered users as noise. A stream is decoded at the
    minimum rate over every user that has to decode it (its owner and all stronger users).
    """
    gains = _gains(channels)
    selection = np.asarray(selection, dtype=np.float64)
    private_beamformers = np.asarray(private_beamformers, dtype=np.float64)
    num_users = private_beamformers.shape[0]
    order = sic_order(gains, selection)
    position = np.empty(num_users, dtype=int)
    position[order] = np.arange(num_users)

    rates = np.zeros(num_users)
    for j in range(num_users):
        stronger = [l for l in range(num_users) if position[l] < position[j]]
        decoders = stronger + [j]
        candidates = []
        for i in decoders:
            h_i = gains[i]
            signal = _received(h_i, selection, private_beamformers[j])
            interference = sum(_received(h_i, selection, private_beamformers[l]) for l in stronger)
            candidates.append(np.log2(1.0 + signal / (interference + _noise(noise_var, i))))
        rates[j] = min(candidates)

    zeros = np.zeros(num_users)
    return RateReport(common_rates=zeros,
                      private_rates=rates,
                      delivered_split=zeros.copy(),
                      aggregate=float(np.sum(rates)),
                      common_decodable=True)
