from typing import NamedTuple

import torch
import torch.nn as nn

from utils.training_util import weights_init

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


class ActorOutput(NamedTuple):
    mean: torch.Tensor  # (B, C) continuous coordinates: beams and split
    log_std: torch.Tensor  # (B, C), clamped to [LOG_STD_MIN, LOG_STD_MAX]
    logits: torch.Tensor  # (B, N) LED selection logits


def build_mlp(module: nn.Module, dim_in, num_layers, dim_hidden, init_type):
    """Register hidden layers l0..l{num_layers-2} on `module`; returns the last hidden width."""
    dims = [dim_in] + [dim_hidden] * (num_layers - 1)
    for i in range(num_layers - 1):
        layer = nn.Linear(dims[i], dims[i + 1])
        layer.apply(weights_init(init_type))
        setattr(module, f'l{i}', layer)
    return dims[-1]


class ActorNetwork(nn.Module):
    """
    Hybrid policy network. A tanh MLP trunk feeds a Gaussian head over the continuous action
    coordinates (beam weights in units of Xi, split in units of split_scale) with a state-independent
    log-std, and a logit head over the N LEDs used for top-N_a selection.
    """
    def __init__(
        self,
        dim_state: int,
        num_continuous: int,
        num_leds: int,
        num_layers=3,
        dim_hidden=128,
        init_type='orthogonal',
        log_std_init=-0.5,
    ):
        super().__init__()
        self.num_layers = num_layers
        dim_out = build_mlp(self, dim_state, num_layers, dim_hidden, init_type)
        self.activation = nn.Tanh()

        self.mean_head = nn.Linear(dim_out, num_continuous)
        self.logit_head = nn.Linear(dim_out, num_leds)
        self.mean_head.apply(weights_init('policy_head'))
        self.logit_head.apply(weights_init('policy_head'))
        self.log_std = nn.Parameter(torch.full((num_continuous, ), float(log_std_init)))

    def forward(self, state: torch.Tensor) -> ActorOutput:
        """
        Args:
            state: (B, dim_state) normalized states.
        """
        x = state
        for i in range(self.num_layers - 1):
            x = self.activation(getattr(self, f'l{i}')(x))
        mean = self.mean_head(x)
        log_std = torch.clamp(self.log_std, LOG_STD_MIN, LOG_STD_MAX).expand_as(mean)
        return ActorOutput(mean, log_std, self.logit_head(x))


class CriticNetwork(nn.Module):
    def __init__(self, dim_state: int, num_layers=3, dim_hidden=128, init_type='orthogonal'):
        super().__init__()
        self.num_layers = num_layers
        dim_out = build_mlp(self, dim_state, num_layers, dim_hidden, init_type)
        self.activation = nn.Tanh()
        self.value_head = nn.Linear(dim_out, 1)
        self.value_head.apply(weights_init('value_head'))

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        """(B, dim_state) -> (B,) state values."""
        x = state
        for i in range(self.num_layers - 1):
            x = self.activation(getattr(self, f'l{i}')(x))
        return self.value_head(x).squeeze(-1)


class RunningMeanStd(nn.Module):
    """
    Per-coordinate running mean / variance of observed states, kept in float64 buffers so they
    travel with checkpoints. States mix rates (~1) with harvested watts (~1e-9), hence the
    scale-relative floor on the standard deviation.
    """
    def __init__(self, dim: int, clip=10.0):
        super().__init__()
        self.clip = clip
        self.register_buffer('mean', torch.zeros(dim, dtype=torch.float64))
        self.register_buffer('var', torch.ones(dim, dtype=torch.float64))
        self.register_buffer('count', torch.zeros((), dtype=torch.float64))

    @torch.no_grad()
    def update(self, x: torch.Tensor):
        """Merge a (B, dim) batch into the running statistics."""
        x = x.to(torch.float64).reshape(-1, self.mean.shape[0])
        batch_mean = x.mean(dim=0)
        batch_var = x.var(dim=0, unbiased=False)
        batch_count = float(x.shape[0])

        if self.count.item() == 0.0:
            self.mean.copy_(batch_mean)
            self.var.copy_(batch_var)
            self.count.fill_(batch_count)
            return

        total = self.count + batch_count
        delta = batch_mean - self.mean
        m2 = self.var * self.count + batch_var * batch_count + delta**2 * self.count * batch_count / total
        self.mean.add_(delta * batch_count / total)
        self.var.copy_(m2 / total)
        self.count.copy_(total)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        std = torch.sqrt(self.var) + 1e-8 * torch.abs(self.mean) + 1e-30
        y = (x.to(torch.float64) - self.mean) / std
        return torch.clamp(y, -self.clip, self.clip).to(x.dtype)
