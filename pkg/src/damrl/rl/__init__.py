"""From-scratch actor-critic reinforcement learning."""

from .buffer import ReplayBuffer, Transition
from .evaluation import evaluate_policy
from .learners import (
    DDPG,
    SAC,
    TD3,
    ActorCriticLearner,
    TrainedPolicy,
    critic_target,
    ddpg_actor_loss,
    sac_actor_loss,
)
from .mlp import Mlp, Tape, grad, mlp_forward, polyak_update
from .tasks import DamControlTask, QuadraticToyTask

__all__ = [
    "ActorCriticLearner", "DDPG", "TD3", "SAC", "TrainedPolicy", "ReplayBuffer", "Transition",
    "Mlp", "Tape", "grad", "mlp_forward", "polyak_update", "critic_target", "ddpg_actor_loss",
    "sac_actor_loss", "evaluate_policy", "DamControlTask", "QuadraticToyTask",
]
