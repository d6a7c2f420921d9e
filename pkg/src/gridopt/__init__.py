"""Power-flow toolkit for locating and sizing a TCSC on a transmission network."""
from .grid_model import (
    Branch,
    Bus,
    BusKind,
    CaseError,
    CaseParseError,
    Generator,
    Network,
    ieee30,
    parse_ieee_cdf,
    read_ieee_cdf,
    scale_loads,
    validate,
)
from .optimizers import Firefly, ImprovedGSA, OptimizerConfig
from .pipeline import PlacementReport, StudyConfig, TcscPlacement, run_study
from .power_flow import PowerFlowSolution, SolverOptions, build_ybus, solve
from .tcsc import TcscDevice, apply_tcsc, tcsc_cost

__version__ = "0.1.0"

__all__ = [
    "Branch", "Bus", "BusKind", "CaseError", "CaseParseError", "Generator", "Network",
    "ieee30", "parse_ieee_cdf", "read_ieee_cdf", "scale_loads", "validate",
    "Firefly", "ImprovedGSA", "OptimizerConfig",
    "PlacementReport", "StudyConfig", "TcscPlacement", "run_study",
    "PowerFlowSolution", "SolverOptions", "build_ybus", "solve",
    "TcscDevice", "apply_tcsc", "tcsc_cost",
]
