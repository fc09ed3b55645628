"""MNL bandit with knapsacks: simulation, planning and benchmark oracles."""
from .errors import CapabilityError, ConfigurationError, SolverStall
from .mnl import Instance, choice_prob, choice_probs, revenue

__all__ = ["CapabilityError", "ConfigurationError", "Instance", "SolverStall", "choice_prob", "choice_probs", "revenue"]
__version__ = "0.1.0"
