"""Off-policy actor-critic learners: DDPG, TD3 and SAC.

All three share the replay loop in :class:`ActorCriticLearner`; they differ
in the critic target, the actor objective and how often targets move.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..env import observation
from ..exceptions import DivergenceError
from ..hydro import SimParams
from ..policies import Policy
from .buffer import ReplayBuffer
from .mlp import Mlp, make_optimizer, polyak_update
from .seeding import stream, stream_seed
from .tasks import to_discharge

log = logging.getLogger(__name__)

ALGORITHMS = ("ddpg", "td3", "sac")
POLICY_FORMAT = "damrl.policy"
POLICY_VERSION = 1
_LOG_2PI = math.log(2.0 * math.pi)


# -- targets and losses ---------------------------------------------------------------

def critic_target(reward, done, gamma, q_next, algorithm="ddpg", q_next2=None, alpha=0.0,
                  logp_next=None):
    """Bootstrapped regression target for the critics.

    DDPG uses the single target critic; TD3 the smaller of two; SAC
    additionally subtracts ``alpha`` times the next action's log-density.
    """
    reward, done, q_next = (np.asarray(v, dtype=float) for v in (reward, done, q_next))
    if algorithm == "ddpg":
        value = q_next
    else:
        value = np.minimum(q_next, np.asarray(q_next2, dtype=float))
        if algorithm == "sac":
            value = value - alpha * np.asarray(logp_next, dtype=float)
        elif algorithm != "td3":
            raise ValueError(f"unknown algorithm {algorithm!r}")
    return reward + (1.0 - done) * gamma * value


def smoothed_target_action(action, rng, sigma, clip):
    """TD3 target-policy smoothing: clipped Gaussian noise, then action bounds."""
    noise = np.clip(rng.normal(0.0, sigma, size=np.shape(action)), -clip, clip)
    return np.clip(action + noise, -1.0, 1.0)


def _softplus(x):
    return np.logaddexp(0.0, x)


def squash_log_std(raw, lo, hi):
    return lo + 0.5 * (hi - lo) * (np.tanh(raw) + 1.0)


def tanh_gaussian_log_prob(u, mu, log_std):
    """Log-density of ``a = tanh(u)`` with ``u ~ N(mu, exp(log_std)^2)``, summed over
    action dimensions."""
    z = (u - mu) * np.exp(-log_std)
    gauss = -0.5 * z * z - log_std - 0.5 * _LOG_2PI
    # log(1 - tanh(u)^2) without cancellation
    log_jac = 2.0 * (math.log(2.0) - u - _softplus(-2.0 * u))
    return np.sum(gauss - log_jac, axis=-1)


def sac_sample(out, eps, lo, hi):
    """Reparameterised draw from a SAC actor head ``[mu, raw_log_std]``.

    Returns ``(action, log_prob, parts)``; ``parts`` feeds the backward pass.
    """
    k = out.shape[-1] // 2
    mu, raw = out[..., :k], out[..., k:]
    log_std = squash_log_std(raw, lo, hi)
    std = np.exp(log_std)
    u = mu + std * eps
    a = np.tanh(u)
    logp = tanh_gaussian_log_prob(u, mu, log_std)
    return a, logp, (mu, raw, std, u)


def _critic_input(obs, act):
    return np.concatenate([obs, act], axis=1)


def ddpg_actor_loss(actor: Mlp, critic: Mlp, obs):
    """``-mean Q(s, pi(s))`` and its gradient w.r.t. the actor parameters.

    The gradient is the deterministic policy gradient: dQ/da pushed back
    through the actor.
    """
    n = obs.shape[0]
    act, tape = actor.forward(obs)
    q, ctape = critic.forward(_critic_input(obs, act))
    _, dx = critic.backward(ctape, np.full_like(q, -1.0 / n))
    grads, _ = actor.backward(tape, dx[:, obs.shape[1]:])
    return float(-q.mean()), grads


def sac_actor_loss(actor: Mlp, critic1: Mlp, critic2: Mlp, obs, eps, alpha, lo, hi):
    """``mean(alpha * log pi(a|s) - min Q(s, a))`` with a reparameterised ``a``,
    and its gradient w.r.t. the actor parameters."""
    n, d_obs = obs.shape
    out, tape = actor.forward(obs)
    a, logp, (mu, raw, std, u) = sac_sample(out, eps, lo, hi)
    x = _critic_input(obs, a)
    q1, t1 = critic1.forward(x)
    q2, t2 = critic2.forward(x)
    first = q1 <= q2
    qmin = np.where(first, q1, q2)
    loss = float(np.mean(alpha * logp - qmin[:, 0]))

    _, dx1 = critic1.backward(t1, first.astype(float))
    _, dx2 = critic2.backward(t2, (~first).astype(float))
    dq_da = dx1[:, d_obs:] + dx2[:, d_obs:]
    d_u = (alpha * 2.0 * a - dq_da * (1.0 - a * a)) / n
    d_log_std = -alpha / n + d_u * std * eps
    d_raw = d_log_std * 0.5 * (hi - lo) * (1.0 - np.tanh(raw) ** 2)
    grads, _ = actor.backward(tape, np.concatenate([d_u, d_raw], axis=1))
    return loss, grads


def critic_loss_grads(critic: Mlp, obs, act, target):
    """Mean squared TD error and its parameter gradients; also returns Q."""
    q, tape = critic.forward(_critic_input(obs, act))
    diff = q[:, 0] - target
    grads, _ = critic.backward(tape, (2.0 / len(diff)) * diff[:, None])
    return float(np.mean(diff * diff)), grads, q[:, 0]


# -- policy artifact --------------------------------------------------------------------

class TrainedPolicy(Policy):
    """Deterministic actor plus the normalisation it was trained with."""

    def __init__(self, actor: Mlp, algorithm: str, sim_params: SimParams | None = None,
                 rain_scale: float = 100.0):
        self.actor = actor
        self.algorithm = algorithm
        self.sim_params = sim_params
        self.rain_scale = rain_scale
        self.a_max = sim_params.a_max if sim_params is not None else 1.0

    def predict(self, obs):
        """Normalised actions in [-1, 1] for a batch (or one) observation."""
        out = self.actor(obs)
        if self.algorithm == "sac":
            k = out.shape[-1] // 2
            return np.tanh(out[..., :k])
        return out

    def act(self, state, explore: bool = False) -> float:
        if self.sim_params is None:
            raise ValueError("policy was trained without simulator parameters")
        obs = observation(state, self.sim_params, self.rain_scale)
        return to_discharge(self.predict(obs), self.a_max)

    def to_dict(self) -> dict:
        d = {"format": POLICY_FORMAT, "version": POLICY_VERSION, "algorithm": self.algorithm,
             "actor": self.actor.to_dict(), "normalization": {"rain_scale": self.rain_scale}}
        if self.sim_params is not None:
            curve = self.sim_params.curve
            d["normalization"].update(a_max=self.a_max, level_min=curve.level_min,
                                      level_max=curve.level_max)
            d["sim_params"] = self.sim_params.to_mapping()
        return d

    @classmethod
    def from_dict(cls, d) -> "TrainedPolicy":
        if d.get("format") != POLICY_FORMAT or d.get("version") != POLICY_VERSION:
            raise ValueError(f"not a version-{POLICY_VERSION} policy document")
        params = SimParams.from_mapping(d["sim_params"]) if "sim_params" in d else None
        return cls(Mlp.from_dict(d["actor"]), d["algorithm"], params,
                   d["normalization"]["rain_scale"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TrainedPolicy":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- learner -----------------------------------------------------------------------------

def evaluate_returns(act_fn, task, n_episodes, seed, max_steps=100_000):
    """Undiscounted returns of ``act_fn`` over ``n_episodes`` of ``task``."""
    task.reseed(seed)
    returns = []
    for _ in range(n_episodes):
        obs, total = task.reset(), 0.0
        for _ in range(max_steps):
            obs, r, terminal, truncated = task.step(act_fn(obs))
            total += r
            if terminal or truncated:
                break
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns))


class ActorCriticLearner(BaseEstimator):
    """Replay-based actor-critic trainer.

    ``fit(task)`` trains on a task object (see :mod:`damrl.rl.tasks`) and
    records ``curve_`` rows ``(env_steps, mean_return, std_return)`` from
    exploration-free evaluations every ``eval_interval`` steps.
    ``predict(obs)`` returns deterministic normalised actions.

    Time-limit truncations are bootstrapped through unless
    ``bootstrap_time_limit=False``.
    """

    def __init__(self, algorithm="td3", gamma=0.999, actor_lr=1e-3, critic_lr=1e-3, tau=0.005,
                 batch_size=128, buffer_size=100_000, hidden_sizes=(64, 64), activation="tanh",
                 exploration_noise=0.1, policy_delay=2, target_noise=0.2, noise_clip=0.5,
                 alpha=0.2, log_std_bounds=(-5.0, 2.0), optimizer="sgd", reward_scale=1.0,
                 total_steps=50_000, warmup_steps=1000, eval_interval=5000, eval_episodes=1,
                 bootstrap_time_limit=True, max_abs_q=1e8, seed=0):
        self.algorithm = algorithm
        self.gamma = gamma
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.tau = tau
        self.batch_size = batch_size
        self.buffer_size = buffer_size
        self.hidden_sizes = hidden_sizes
        self.activation = activation
        self.exploration_noise = exploration_noise
        self.policy_delay = policy_delay
        self.target_noise = target_noise
        self.noise_clip = noise_clip
        self.alpha = alpha
        self.log_std_bounds = log_std_bounds
        self.optimizer = optimizer
        self.reward_scale = reward_scale
        self.total_steps = total_steps
        self.warmup_steps = warmup_steps
        self.eval_interval = eval_interval
        self.eval_episodes = eval_episodes
        self.bootstrap_time_limit = bootstrap_time_limit
        self.max_abs_q = max_abs_q
        self.seed = seed

    def _validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.policy_delay < 1 or self.alpha < 0:
            raise ValueError("policy_delay must be >= 1 and alpha >= 0")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError("buffer_size must be at least batch_size")

    # networks ---------------------------------------------------------------

    def _build(self, obs_dim, act_dim):
        rng = stream(self.seed, "init")
        hidden = list(self.hidden_sizes)
        acts = [self.activation] * len(hidden) + ["linear"]
        if self.algorithm == "sac":
            self.actor_ = Mlp([obs_dim, *hidden, 2 * act_dim], acts, "none", rng)
        else:
            self.actor_ = Mlp([obs_dim, *hidden, act_dim], acts, "tanh", rng)
        self.critic1_ = Mlp([obs_dim + act_dim, *hidden, 1], acts, "none", rng)
        self.critics_ = [self.critic1_]
        if self.algorithm != "ddpg":
            self.critic2_ = Mlp([obs_dim + act_dim, *hidden, 1], acts, "none", rng)
            self.critics_.append(self.critic2_)
        self.critic_targets_ = [c.copy() for c in self.critics_]
        self.actor_target_ = self.actor_.copy() if self.algorithm != "sac" else None
        self.actor_opt_ = make_optimizer(self.optimizer, self.actor_.params, self.actor_lr)
        self.critic_opts_ = [make_optimizer(self.optimizer, c.params, self.critic_lr)
                             for c in self.critics_]
        self.obs_dim_, self.act_dim_ = obs_dim, act_dim

    def predict(self, obs):
        check_is_fitted(self, "actor_")
        out = self.actor_(obs)
        if self.algorithm == "sac":
            return np.tanh(out[..., :self.act_dim_])
        return out

    def _explore(self, obs, rng):
        if self.algorithm == "sac":
            out = self.actor_(obs)
            eps = rng.standard_normal(self.act_dim_)
            return sac_sample(out, eps, *self.log_std_bounds)[0]
        a = self.actor_(obs) + rng.normal(0.0, self.exploration_noise, self.act_dim_)
        return np.clip(a, -1.0, 1.0)

    # one gradient round ---------------------------------------------------------

    def _next_value_target(self, r, d, s2):
        if self.algorithm == "ddpg":
            q = self.critic_targets_[0](_critic_input(s2, self.actor_target_(s2)))[:, 0]
            return critic_target(r, d, self.gamma, q)
        if self.algorithm == "td3":
            a2 = smoothed_target_action(self.actor_target_(s2), self._noise_rng,
                                        self.target_noise, self.noise_clip)
            x = _critic_input(s2, a2)
            return critic_target(r, d, self.gamma, self.critic_targets_[0](x)[:, 0], "td3",
                                 self.critic_targets_[1](x)[:, 0])
        eps = self._noise_rng.standard_normal((len(r), self.act_dim_))
        a2, logp2, _ = sac_sample(self.actor_(s2), eps, *self.log_std_bounds)
        x = _critic_input(s2, a2)
        return critic_target(r, d, self.gamma, self.critic_targets_[0](x)[:, 0], "sac",
                             self.critic_targets_[1](x)[:, 0], self.alpha, logp2)

    def _update(self, batch):
        s, a, r, s2, d = batch
        self.n_updates_ += 1
        y = self._next_value_target(r, d, s2)
        for critic, opt in zip(self.critics_, self.critic_opts_):
            loss, grads, q = critic_loss_grads(critic, s, a, y)
            if not math.isfinite(loss):
                raise DivergenceError(f"critic loss is {loss} at update {self.n_updates_}")
            if np.max(np.abs(q)) > self.max_abs_q:
                raise DivergenceError(
                    f"|Q| reached {np.max(np.abs(q)):.3g} at update {self.n_updates_}")
            opt.step(grads)
        self.last_critic_loss_ = loss

        if self.algorithm == "td3" and self.n_updates_ % self.policy_delay:
            return
        if self.algorithm == "sac":
            eps = self._noise_rng.standard_normal((len(r), self.act_dim_))
            loss, grads = sac_actor_loss(self.actor_, self.critics_[0], self.critics_[1], s,
                                         eps, self.alpha, *self.log_std_bounds)
        else:
            loss, grads = ddpg_actor_loss(self.actor_, self.critics_[0], s)
        if not math.isfinite(loss):
            raise DivergenceError(f"actor loss is {loss} at update {self.n_updates_}")
        self.actor_opt_.step(grads)
        self.last_actor_loss_ = loss

        for target, critic in zip(self.critic_targets_, self.critics_):
            polyak_update(target, critic, self.tau)
        if self.actor_target_ is not None:
            polyak_update(self.actor_target_, self.actor_, self.tau)

    # training loop ---------------------------------------------------------------

    def fit(self, task, eval_task=None):
        self._validate()
        self._build(task.obs_dim, task.act_dim)
        eval_task = task if eval_task is None else eval_task
        buffer = ReplayBuffer(self.buffer_size, task.obs_dim, task.act_dim, stream(self.seed, "buffer"))
        self.buffer_ = buffer
        self._noise_rng = stream(self.seed, "noise")
        warm_rng = stream(self.seed, "warmup")
        eval_seed = stream_seed(self.seed, "eval")
        task.reseed(stream_seed(self.seed, "env"))
        self.n_updates_ = 0
        self.curve_ = []

        obs = task.reset()
        for t in range(1, self.total_steps + 1):
            if t <= self.warmup_steps:
                action = warm_rng.uniform(-1.0, 1.0, task.act_dim)
            else:
                action = self._explore(obs, self._noise_rng)
            next_obs, reward, terminal, truncated = task.step(action)
            done = terminal or (truncated and not self.bootstrap_time_limit)
            buffer.add(obs, action, reward * self.reward_scale, next_obs, done)
            obs = task.reset() if terminal or truncated else next_obs

            if t > self.warmup_steps and len(buffer) >= self.batch_size:
                self._update(buffer.sample(self.batch_size))
            if self.eval_interval and t % self.eval_interval == 0:
                mean, std = evaluate_returns(self.predict, eval_task, self.eval_episodes, eval_seed)
                self.curve_.append((t, mean, std))
                log.info("%s step %d: eval return %.4f", self.algorithm, t, mean)
                # evaluation may share the training task's simulator
                if eval_task is task:
                    task.reseed(stream_seed(self.seed, "env") + t)
                    obs = task.reset()
        return self

    def to_policy(self, sim_params=None, rain_scale=100.0) -> TrainedPolicy:
        check_is_fitted(self, "actor_")
        return TrainedPolicy(self.actor_.copy(), self.algorithm, sim_params, rain_scale)


def DDPG(**kwargs):
    return ActorCriticLearner(algorithm="ddpg", **kwargs)


def TD3(**kwargs):
    return ActorCriticLearner(algorithm="td3", **kwargs)


def SAC(**kwargs):
    return ActorCriticLearner(algorithm="sac", **kwargs)
