"""Desk-scale electromagnetic-transient circuit simulator."""

from .engine import (
    MaxIterationsExceeded,
    SimState,
    SimulationError,
    Simulator,
    SingularMatrixError,
    SolverConfig,
    Waveforms,
    dc_operating_point,
    nr_solve,
    run_transient,
)
from .mna import UnknownIndex, build_index
from .netlist import Circuit, NetlistError, ValidationError, load_netlist, parse_netlist, unparse, validate

__all__ = [
    "Circuit",
    "MaxIterationsExceeded",
    "NetlistError",
    "SimState",
    "SimulationError",
    "Simulator",
    "SingularMatrixError",
    "SolverConfig",
    "UnknownIndex",
    "ValidationError",
    "Waveforms",
    "build_index",
    "dc_operating_point",
    "load_netlist",
    "nr_solve",
    "parse_netlist",
    "run_transient",
    "unparse",
    "validate",
]

__version__ = "0.1.0"
