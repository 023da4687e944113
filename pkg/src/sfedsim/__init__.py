"""sfedsim: behavioral S-FED compact model and mixed-mode circuit simulator."""

from .model import (
    BiasPoint,
    DeviceTemperature,
    SFedMode,
    SFedParams,
    SFedRole,
    classify_mode,
    device_conductances,
    device_current,
    threshold_voltage,
)
from .netlist import Circuit, emit_netlist, parse_netlist, validate
from .engine import SolverOptions, dc_operating_point, solve_linear, transient
from .neuron import NeuronConfig, build_if_neuron, detect_spikes, run_neuron

__version__ = "0.1.0"

__all__ = [
    "BiasPoint",
    "Circuit",
    "DeviceTemperature",
    "NeuronConfig",
    "SFedMode",
    "SFedParams",
    "SFedRole",
    "SolverOptions",
    "build_if_neuron",
    "classify_mode",
    "detect_spikes",
    "device_conductances",
    "device_current",
    "dc_operating_point",
    "emit_netlist",
    "parse_netlist",
    "run_neuron",
    "solve_linear",
    "threshold_voltage",
    "transient",
    "validate",
]
