"""Finite event-tree laboratory for exponential utility under drift perturbation."""
from __future__ import annotations

__version__ = "0.1.0"

from .bmo import bmo_norm, constants_report, llogl_constant, reverse_holder_constant
from .calculus import Market, build_market, stochastic_exponential, stochastic_integral
from .entropy import SolveResult, solve_exponential
from .errors import BmoLabError
from .polytope import entropy_polytope_oracle
from .tree import EventTree, binomial_tree, regular_tree
from .truncated import solve_truncated

__all__ = [
    "BmoLabError",
    "EventTree",
    "Market",
    "SolveResult",
    "binomial_tree",
    "bmo_norm",
    "build_market",
    "constants_report",
    "entropy_polytope_oracle",
    "llogl_constant",
    "regular_tree",
    "reverse_holder_constant",
    "solve_exponential",
    "solve_truncated",
    "stochastic_exponential",
    "stochastic_integral",
]
