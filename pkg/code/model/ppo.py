import copy
import math
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch

from model.networks import ActorNetwork, ActorOutput, CriticNetwork, RunningMeanStd
from utils.misc_util import CODE_VERSION, construct_class_by_name, to_plain
from utils.training_util import add_dict_to, assert_shape, log_value_dict

CHECKPOINT_VERSION = 1
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class PPOConfig:
    clip_eps: float = 0.2  # epsilon
    discount: float = 0.9  # lambda
    actor_lr: float = 3e-4  # delta_A
    critic_lr: float = 1e-3  # delta_C
    minibatch_size: int = 64  # Q
    episodes: int = 500  # E
    steps: int = 64  # T
    update_epochs: int = 1
    gae_lambda: Optional[float] = None  # None: one-step TD advantage
    entropy_coef: float = 0.0
    num_layers: int = 3
    dim_hidden: int = 128
    init_type: str = 'orthogonal'
    log_std_init: float = -0.5
    optim_class: str = 'torch.optim.SGD'
    optim_args: dict = field(default_factory=dict)
    normalize_obs: bool = True
    dtype: str = 'float64'

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must be in [0, 1), got {self.discount}")
        if self.actor_lr <= 0.0 or self.critic_lr <= 0.0:
            raise ValueError("learning rates must be positive")
        if self.minibatch_size < 1 or self.steps < 1 or self.episodes < 1 or self.update_epochs < 1:
            raise ValueError("minibatch_size, steps, episodes and update_epochs must be >= 1")
        if self.gae_lambda is not None and not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "PPOConfig":
        d = to_plain(d or {})
        for name in ('clip_eps', 'discount', 'actor_lr', 'critic_lr', 'entropy_coef', 'log_std_init'):
            if name in d:
                d[name] = float(d[name])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Transition:
    state: np.ndarray
    raw_action: np.ndarray
    log_prob: float  # under theta_old
    reward: float
    next_state: Optional[np.ndarray]  # None: no bootstrap
    action: object = None  # projected ActionVector, kept for inspection


# Policy distribution
# ------------------------------------------------------------------------------------------


def split_policy_action(raw: torch.Tensor, num_users: int, num_leds: int):
    """(B, action_dim) raw -> continuous (B, N(K+1)+K) and selection slot (B, N)."""
    n_beam = num_leds * (num_users + 1)
    continuous = torch.cat([raw[:, :n_beam], raw[:, n_beam + num_leds:]], dim=1)
    return continuous, raw[:, n_beam:n_beam + num_leds]


def join_policy_action(continuous: torch.Tensor, selection: torch.Tensor, num_users: int, num_leds: int):
    n_beam = num_leds * (num_users + 1)
    return torch.cat([continuous[:, :n_beam], selection, continuous[:, n_beam:]], dim=1)


def gaussian_log_prob(mean, log_std, x) -> torch.Tensor:
    """Sum of independent Gaussian log-densities over the last dimension."""
    z = (x - mean) * torch.exp(-log_std)
    return torch.sum(-0.5 * z**2 - log_std - _LOG_SQRT_2PI, dim=-1)


def top_k_order(scores: torch.Tensor, k: int) -> torch.Tensor:
    """(B, N) -> (B, k) indices of the k largest scores in descending order, lowest index first on ties."""
    _, order = torch.sort(-scores, dim=-1, stable=True)
    return order[:, :k]


def selection_log_prob(logits: torch.Tensor, order: torch.Tensor) -> torch.Tensor:
    """Sequential-softmax (Plackett-Luce) log-probability of drawing `order` without replacement."""
    remaining = torch.ones_like(logits, dtype=torch.bool)
    total = torch.zeros(logits.shape[0], dtype=logits.dtype, device=logits.device)
    for i in range(order.shape[1]):
        idx = order[:, i:i + 1]
        masked = logits.masked_fill(~remaining, float('-inf'))
        total = total + logits.gather(1, idx).squeeze(1) - torch.logsumexp(masked, dim=-1)
        remaining = remaining.scatter(1, idx, False)
    return total


def policy_sample(actor_output: ActorOutput,
                  n_active: int,
                  num_users: int,
                  generator: Optional[torch.Generator] = None,
                  deterministic=False):
    """
    Draw a raw action from the hybrid policy.
    Continuous coordinates are Gaussian; the LED selection is Gumbel-top-N_a over the logits and
    the perturbed logits are stored in the selection slot so the environment's top-N_a recovers the
    drawn set. Deterministic mode returns the mean and the raw logits with log_prob None.
    Returns:
        raw: (B, action_dim), log_prob: (B,) or None
    """
    mean, log_std, logits = actor_output
    num_leds = logits.shape[1]
    if deterministic:
        return join_policy_action(mean, logits, num_users, num_leds), None

    noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype, device=mean.device)
    continuous = mean + torch.exp(log_std) * noise
    uniform = torch.rand(logits.shape, generator=generator, dtype=logits.dtype, device=logits.device)
    uniform = uniform.clamp(torch.finfo(logits.dtype).tiny, 1.0 - torch.finfo(logits.dtype).eps)
    perturbed = logits - torch.log(-torch.log(uniform))

    raw = join_policy_action(continuous, perturbed, num_users, num_leds)
    return raw, log_prob(actor_output, raw, n_active, num_users)


def log_prob(actor_output: ActorOutput, raw: torch.Tensor, n_active: int, num_users: int) -> torch.Tensor:
    mean, log_std, logits = actor_output
    continuous, selection = split_policy_action(raw, num_users, logits.shape[1])
    order = top_k_order(selection, n_active)
    return gaussian_log_prob(mean, log_std, continuous) + selection_log_prob(logits, order)


# PPO objective
# ------------------------------------------------------------------------------------------


def advantage(reward, value, next_value, discount):
    """Omega = r + lambda V(s') - V(s); without a next state, Omega = r - V(s)."""
    if next_value is None:
        return reward - value
    return reward + discount * next_value - value


def compute_advantages(rewards, values, next_values, has_next, discount, gae_lambda=None):
    """
    Advantages for one episode, all (T,) tensors in time order.
    With gae_lambda set, one-step TD errors are accumulated backwards with weight discount*gae_lambda.
    """
    deltas = advantage(rewards, values, next_values * has_next, discount)
    if gae_lambda is None:
        return deltas
    advantages = torch.zeros_like(deltas)
    running = torch.zeros((), dtype=deltas.dtype)
    for t in reversed(range(len(deltas))):
        running = deltas[t] + discount * gae_lambda * running * has_next[t]
        advantages[t] = running
    return advantages


def clipped_surrogate(ratio, advantages, clip_eps):
    """min(beta Omega, clip(beta, 1-eps, 1+eps) Omega), elementwise."""
    return torch.minimum(ratio * advantages, torch.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages)


def _check_finite_grads(module: torch.nn.Module, optimizer, name: str):
    for p in module.parameters():
        if p.grad is not None and not torch.all(torch.isfinite(p.grad)):
            optimizer.zero_grad(set_to_none=True)
            raise FloatingPointError(f"non-finite gradient in {name} update, parameters left unchanged")


class PPOAgent:
    """
    Actor-critic pair with frozen copies (theta_old, phi_old) used for rollouts, ratios and
    TD targets, plus the running state normalizer.
    """
    def __init__(self, state_dim: int, num_users: int, num_leds: int, n_active: int, config: PPOConfig):
        self.config = config
        self.state_dim = state_dim
        self.num_users = num_users
        self.num_leds = num_leds
        self.n_active = n_active
        self.dtype = getattr(torch, config.dtype)
        num_continuous = num_leds * (num_users + 1) + num_users

        self.actor = ActorNetwork(state_dim,
                                  num_continuous,
                                  num_leds,
                                  num_layers=config.num_layers,
                                  dim_hidden=config.dim_hidden,
                                  init_type=config.init_type,
                                  log_std_init=config.log_std_init).to(self.dtype)
        self.critic = CriticNetwork(state_dim,
                                    num_layers=config.num_layers,
                                    dim_hidden=config.dim_hidden,
                                    init_type=config.init_type).to(self.dtype)
        self.actor_old = copy.deepcopy(self.actor).requires_grad_(False)
        self.critic_old = copy.deepcopy(self.critic).requires_grad_(False)
        self.normalizer = RunningMeanStd(state_dim)

        self.actor_optimizer = construct_class_by_name(self.actor.parameters(),
                                                       class_name=config.optim_class,
                                                       lr=config.actor_lr,
                                                       **config.optim_args)
        self.critic_optimizer = construct_class_by_name(self.critic.parameters(),
                                                        class_name=config.optim_class,
                                                        lr=config.critic_lr,
                                                        **config.optim_args)

    def observe(self, states) -> torch.Tensor:
        states = torch.as_tensor(np.asarray(states), dtype=self.dtype).reshape(-1, self.state_dim)
        return self.normalizer(states) if self.config.normalize_obs else states

    @torch.no_grad()
    def act(self, state, generator=None, deterministic=False):
        """Sample (or pick greedily) a raw action for one state under theta_old."""
        out = self.actor_old(self.observe(state))
        raw, lp = policy_sample(out, self.n_active, self.num_users, generator, deterministic)
        return raw[0].numpy(), (None if lp is None else float(lp[0]))

    @torch.no_grad()
    def value_old(self, states) -> torch.Tensor:
        return self.critic_old(self.observe(states))

    def actor_update(self, states, raw_actions, old_log_probs, advantages) -> dict:
        """One optimizer step ascending the mean clipped surrogate over a minibatch."""
        out = self.actor(states)
        ratio = torch.exp(log_prob(out, raw_actions, self.n_active, self.num_users) - old_log_probs)
        surrogate = clipped_surrogate(ratio, advantages, self.config.clip_eps).mean()
        loss = -surrogate
        if self.config.entropy_coef > 0:
            entropy = torch.sum(out.log_std + 0.5 + _LOG_SQRT_2PI, dim=-1).mean()
            loss = loss - self.config.entropy_coef * entropy

        self.actor_optimizer.zero_grad(set_to_none=True)
        loss.backward()
        _check_finite_grads(self.actor, self.actor_optimizer, 'actor')
        self.actor_optimizer.step()
        return {"surrogate": surrogate.item(), "ratio": ratio.mean().item()}

    def critic_update(self, states, returns) -> dict:
        """One optimizer step on the MSE between V_phi(s) and the target R_hat."""
        loss = torch.mean((self.critic(states) - returns)**2)
        self.critic_optimizer.zero_grad(set_to_none=True)
        loss.backward()
        _check_finite_grads(self.critic, self.critic_optimizer, 'critic')
        self.critic_optimizer.step()
        return {"critic_loss": loss.item()}

    def sync_old(self):
        self.actor_old.load_state_dict(self.actor.state_dict())
        self.critic_old.load_state_dict(self.critic.state_dict())

    def state_dict(self) -> dict:
        return {
            "actor": self.actor.state_dict(),
            "critic": self.critic.state_dict(),
            "actor_old": self.actor_old.state_dict(),
            "critic_old": self.critic_old.state_dict(),
            "normalizer": self.normalizer.state_dict(),
            "actor_optimizer": self.actor_optimizer.state_dict(),
            "critic_optimizer": self.critic_optimizer.state_dict(),
        }

    def load_state_dict(self, state: dict):
        for name in ('actor', 'critic', 'actor_old', 'critic_old', 'normalizer', 'actor_optimizer',
                     'critic_optimizer'):
            getattr(self, name).load_state_dict(state[name])


def save_checkpoint(path, agent: PPOAgent, episode: int):
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "code_version": CODE_VERSION,
            "episode": episode,
            "config": agent.config.to_dict(),
            "dims": {
                "state_dim": agent.state_dim,
                "num_users": agent.num_users,
                "num_leds": agent.num_leds,
                "n_active": agent.n_active,
            },
            **agent.state_dict(),
        }, path)


def load_checkpoint(path, config: Optional[PPOConfig] = None) -> Tuple[PPOAgent, int]:
    """Rebuild an agent from a checkpoint; `config` replaces the stored hyperparameters if given."""
    ckpt = torch.load(path, map_location='cpu')
    assert ckpt.get("version") == CHECKPOINT_VERSION, \
        f"Unsupported checkpoint version {ckpt.get('version')} in {path}"
    agent = PPOAgent(**ckpt["dims"], config=config or PPOConfig(**ckpt["config"]))
    agent.load_state_dict(ckpt)
    return agent, ckpt["episode"]


# Training loop
# ------------------------------------------------------------------------------------------


def rollout(env, agent: PPOAgent, steps: int, generator=None) -> Tuple[List[Transition], dict]:
    """Collect one episode of `steps` transitions under theta_old."""
    state = env.reset()
    transitions = []
    num_satisfied = 0
    rates = []
    for _ in range(steps):
        raw, lp = agent.act(state, generator)
        next_state, r, done, info = env.step(raw)
        transitions.append(Transition(state, raw, lp, r, next_state, info["action"]))
        num_satisfied += int(info["verdict"].all_satisfied)
        rates.append(info["metrics"].aggregate_rate)
        state = next_state
        if done:
            break
    stats = {
        "sat_rate": num_satisfied / len(transitions),
        "mean_rate": float(np.mean(rates)),
    }
    return transitions, stats


def update(agent: PPOAgent, transitions: List[Transition], generator=None) -> dict:
    """Advantages from the frozen critic, then `update_epochs` passes of shuffled Q-sized minibatches."""
    cfg = agent.config
    dtype = agent.dtype
    states = agent.observe(np.stack([t.state for t in transitions]))
    has_next = torch.tensor([t.next_state is not None for t in transitions], dtype=dtype)
    next_states = agent.observe(
        np.stack([t.state if t.next_state is None else t.next_state for t in transitions]))
    rewards = torch.tensor([t.reward for t in transitions], dtype=dtype)
    raw_actions = torch.as_tensor(np.stack([t.raw_action for t in transitions]), dtype=dtype)
    old_log_probs = torch.tensor([t.log_prob for t in transitions], dtype=dtype)

    with torch.no_grad():
        values = agent.critic_old(states)
        next_values = agent.critic_old(next_states)
    assert_shape(values, (len(transitions), ))
    assert_shape(raw_actions, (len(transitions), None))
    advantages = compute_advantages(rewards, values, next_values, has_next, cfg.discount, cfg.gae_lambda)
    if cfg.gae_lambda is None:
        returns = rewards + cfg.discount * next_values * has_next
    else:
        returns = advantages + values

    losses = {}
    num_updates = 0
    for _ in range(cfg.update_epochs):
        perm = torch.randperm(len(transitions), generator=generator)
        for start in range(0, len(transitions), cfg.minibatch_size):
            idx = perm[start:start + cfg.minibatch_size]
            actor_stats = agent.actor_update(states[idx], raw_actions[idx], old_log_probs[idx],
                                             advantages[idx])
            critic_stats = agent.critic_update(states[idx], returns[idx])
            add_dict_to(losses, {**actor_stats, **critic_stats})
            num_updates += 1

    agent.sync_old()
    if cfg.normalize_obs:
        agent.normalizer.update(torch.as_tensor(np.stack([t.state for t in transitions])))
    losses = {k: v / num_updates for k, v in losses.items()}
    losses["num_updates"] = num_updates
    return losses


def train(env, agent: PPOAgent, generator=None, tb_logger=None, start_episode=0, episode_callback=None):
    """
    Episode loop: roll out T steps under theta_old, update theta and phi on minibatches of that
    episode, then copy theta, phi into the frozen networks.
    Returns:
        list of per-episode log dicts (episode, mean_reward, surrogate, critic_loss, sat_rate, mean_rate)
    """
    cfg = agent.config
    logs = []
    for episode in range(start_episode, cfg.episodes):
        start_time = time.time()
        transitions, stats = rollout(env, agent, cfg.steps, generator)
        losses = update(agent, transitions, generator)

        entry = {
            "episode": episode,
            "mean_reward": float(np.mean([t.reward for t in transitions])),
            "surrogate": losses["surrogate"],
            "critic_loss": losses["critic_loss"],
            "sat_rate": stats["sat_rate"],
            "mean_rate": stats["mean_rate"],
            "num_updates": losses["num_updates"],
        }
        logs.append(entry)
        if tb_logger is not None:
            log_value_dict(tb_logger, 'train', {k: v for k, v in entry.items() if k != 'episode'}, episode)
        if episode_callback is not None:
            episode_callback(episode, entry, time.time() - start_time)
    return logs
