"""Uplink NOMA for a cellular-connected UAV with cooperative interference cancellation."""
from .errors import ConfigError, ContractViolation, InputDomainError
from .hexgrid import HexTopology, build_topology
from .channel import ChannelConfig
from .scenario import Scenario, generate_scenario
from .noma_core import UavAllocation, evaluate
from .schemes import altruistic_solve, egoistic_solve, non_orthogonal_solve, oma_solve
from .optimizer import ao_solve

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractViolation", "InputDomainError", "HexTopology", "build_topology",
    "ChannelConfig", "Scenario", "generate_scenario", "UavAllocation", "evaluate",
    "altruistic_solve", "egoistic_solve", "non_orthogonal_solve", "oma_solve", "ao_solve",
]
