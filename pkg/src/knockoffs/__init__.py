"""Knockoff constructions: swap-group tools, Gaussian, copula, mixture and
discretized knockoffs, diagnostics, and a knockoff-filter simulator."""

from . import copula, diagnostics, discretization, filter_sim, gaussian, mixture, swap_group
from ._rng import DEFAULT_SEED, make_rng
from .errors import (
    BoundaryError,
    ConfigError,
    ConstructionError,
    DegenerateError,
    InvalidDensityError,
    InvalidInputError,
    InvalidTestFunctionError,
    KnockoffError,
    NumericIntegrityError,
    ResourceLimitError,
    UnsupportedModelError,
)
from .swap_group import SwapSet, apply_swap, enumerate_swaps

__version__ = "0.1.0"
