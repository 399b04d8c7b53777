"""Uniform experience replay."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first."""

    def __init__(self, capacity, obs_dim, act_dim, rng=None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, act_dim))
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity)
        self.rng = np.random.default_rng(0) if rng is None else rng
        self._next = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, done):
        action = np.atleast_1d(np.asarray(action, dtype=float))
        if obs.shape != next_obs.shape:
            raise ValueError("obs and next_obs differ in shape")
        if np.any(np.abs(action) > 1.0 + 1e-12):
            raise ValueError("stored actions must be normalised to [-1, 1]")
        i = self._next
        self.obs[i], self.actions[i], self.rewards[i] = obs, action, reward
        self.next_obs[i], self.dones[i] = next_obs, float(done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push(self, t: Transition):
        self.add(t.obs, t.action, t.reward, t.next_obs, t.done)

    def sample_indices(self, batch_size):
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        return self.rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size):
        idx = self.sample_indices(batch_size)
        return (self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx],
                self.dones[idx])
