"""Reservoir-operation simulator, inflow models and actor-critic learners."""

__version__ = "0.1.0"
