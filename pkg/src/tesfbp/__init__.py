"""Transmuted exponential solutions for parabolic free boundary problems."""

from .errors import TesError
from .russian import (RussianOptionSpec, SolverConfig, bsm_to_pqw, perpetual_solution,
                      price_option, solve_fhro)

__all__ = ["TesError", "RussianOptionSpec", "SolverConfig", "bsm_to_pqw",
           "perpetual_solution", "price_option", "solve_fhro"]
__version__ = "0.1.0"
