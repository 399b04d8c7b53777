"""Exploration-free policy evaluation on the dam simulator."""

from dataclasses import replace

import numpy as np

from ..env import DamEnv, run_episode


def evaluate_policy(policy, config, n_episodes=1, seed=None):
    """Mean and standard deviation of episode returns.

    Episodes run back to back on one simulator seeded with ``seed`` (the
    config's own seed when omitted). Returns a dict with the summary
    statistics and the traces themselves.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    env = DamEnv(config if seed is None else replace(config, seed=seed))
    traces = [run_episode(policy, env) for _ in range(n_episodes)]
    undiscounted = np.array([t.undiscounted_return for t in traces])
    discounted = np.array([t.discounted_return for t in traces])
    return {
        "mean_return": float(undiscounted.mean()), "std_return": float(undiscounted.std()),
        "mean_discounted_return": float(discounted.mean()),
        "std_discounted_return": float(discounted.std()),
        "flood_days": float(np.mean([t.flood_days for t in traces])),
        "spill_total": float(np.mean([t.spill_total for t in traces])),
        "traces": traces,
    }
