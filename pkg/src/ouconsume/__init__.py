"""Optimal barrier consumption under Ornstein-Uhlenbeck discounting.

The package computes the optimal consumption barrier and value function
for a linear income stream discounted by an OU short rate, and checks
every analytic quantity against an independent Monte Carlo oracle.
"""

from ouconsume.model import ModelParams, ParameterError, State, derive_params

__all__ = ["ModelParams", "ParameterError", "State", "derive_params"]
__version__ = "0.1.0"
