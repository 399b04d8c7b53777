"""Control tasks in the shape the learners expect.

A task exposes ``obs_dim``, ``act_dim``, ``reseed(seed)``, ``reset() -> obs``
and ``step(action) -> (obs, reward, terminal, truncated)`` with actions
normalised to ``[-1, 1]``.
"""

import numpy as np

from ..env import DamEnv, EpisodeConfig, observation


class QuadraticToyTask:
    """One-step task: a position drawn from [-1, 1], reward ``-(a - target)**2``."""

    act_dim = 1
    obs_dim = 1

    def __init__(self, target=0.5, seed=0):
        self.target = target
        self.reseed(seed)

    def reseed(self, seed):
        self.rng = np.random.default_rng(seed)

    def reset(self):
        self._obs = np.array([self.rng.uniform(-1.0, 1.0)])
        return self._obs.copy()

    def step(self, action):
        a = float(np.clip(np.ravel(action)[0], -1.0, 1.0))
        return self._obs.copy(), -(a - self.target) ** 2, True, False


def to_discharge(action, a_max):
    """Map a normalised action in [-1, 1] to cumecs in [0, a_max]."""
    a = float(np.clip(np.ravel(action)[0], -1.0, 1.0))
    return 0.5 * (a + 1.0) * a_max


def to_normalised(discharge, a_max):
    return np.array([2.0 * float(discharge) / a_max - 1.0])


class DamControlTask:
    """The dam simulator with normalised observations and actions.

    Reaching ``max_step`` is reported as truncation, not termination.
    """

    act_dim = 1

    def __init__(self, config: EpisodeConfig, rain_scale: float = 100.0):
        self.config = config
        self.params = config.params
        self.rain_scale = rain_scale
        self.env = DamEnv(config)
        self.obs_dim = 1 + self.params.rainfall_window + 2
        self.last_outcome = None

    def reseed(self, seed):
        self.env.rng = np.random.default_rng(seed)

    def _obs(self, state):
        return observation(state, self.params, self.rain_scale)

    def reset(self):
        return self._obs(self.env.reset())

    def step(self, action):
        out = self.env.step(to_discharge(action, self.params.a_max))
        self.last_outcome = out
        return self._obs(out.next_state), out.reward.total, False, out.done
