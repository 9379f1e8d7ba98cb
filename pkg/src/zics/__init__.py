"""Stationary distributions of mass-action reaction networks by maximum-entropy closure."""
from ._backend import BACKEND
from .errors import DomainError, InputError, ZicsError
from .moments import MomentBasis, MomentEquations, build_basis, export_equations, generate_equations
from .network import (
    ConservationLaw,
    ReactionNetwork,
    conservation_laws,
    load_network,
    parse_network,
    save_network,
    to_open_form,
    validate_over,
)
from .oracle import SsaConfig, cme_stationary, generator_apply, ssa_sample
from .solver import ClosureSolution, SolverConfig, jacobian, residual, solve_adaptive, solve_at_order
from .statespace import DistributionTable, StateSpace, parse_space

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ClosureSolution",
    "ConservationLaw",
    "DistributionTable",
    "DomainError",
    "InputError",
    "MomentBasis",
    "MomentEquations",
    "ReactionNetwork",
    "SolverConfig",
    "SsaConfig",
    "StateSpace",
    "ZicsError",
    "build_basis",
    "cme_stationary",
    "conservation_laws",
    "export_equations",
    "generate_equations",
    "generator_apply",
    "jacobian",
    "load_network",
    "parse_network",
    "parse_space",
    "residual",
    "save_network",
    "solve_adaptive",
    "solve_at_order",
    "ssa_sample",
    "to_open_form",
    "validate_over",
]
