"""Integrate-and-fire neuron circuit builder and figure-of-merit extraction.

The neuron integrates synaptic current pulses on a membrane capacitor.  A
gate-tunable threshold diode (D1) dumps membrane charge into a sense
resistor (D3) once the membrane crosses the tunable threshold; a two-stage
inverter buffer squares the sensed voltage into a rail-to-rail output
spike, which switches the reset device (D2) to discharge the membrane.  A
diode-connected companion (D4) drains spike-node overshoot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import DcSolution, SolverOptions, Waveform, dc_operating_point, transient
from .model import DeviceTemperature, SFedParams, SFedRole
from .netlist import (
    Capacitor,
    Circuit,
    CircuitGlobals,
    ISourcePulseTrain,
    Resistor,
    SFed,
    Transient,
    VSourceDC,
)

PULSE_EDGE = 1e-12        # s, synaptic pulse rise and fall time
SENSE_WIRE_OHMS = 100.0   # wire between the sense junction and the buffer input
DEFAULT_OUTPUT_INTERVAL = 2.5e-11


class ConfigError(ValueError):
    pass


class ZeroSpikes(ValueError):
    pass


class NoSpike(ValueError):
    pass


class MissingBranch(KeyError):
    pass


@dataclass(frozen=True)
class NeuronConfig:
    v_dd: float = 1.2
    v_bg: float | None = None          # defaults to v_dd / 2
    v_ref1: float = 0.8                # D1 gate-drain bias
    v_ref2: float = 0.1                # D1 gate-source bias
    v_ref3: float = 0.4                # D3 gate bias
    c_mem: float = 1e-15
    i_syn_amplitude: float = 250e-9
    pulse_width: float = 1e-9
    pulse_period: float = 10e-9
    n_pulses: int = 50
    channel_length: float = 10.0       # nm
    temperature: DeviceTemperature = field(default_factory=DeviceTemperature)

    def __post_init__(self) -> None:
        if self.v_dd <= 0:
            raise ConfigError("v_dd must be positive")
        if self.c_mem <= 0:
            raise ConfigError("c_mem must be positive")
        if self.pulse_width < 2 * PULSE_EDGE:
            raise ConfigError("pulse_width must cover the rise and fall edges")
        if self.pulse_period < self.pulse_width:
            raise ConfigError("pulse_period must be at least pulse_width")
        if self.n_pulses < 0:
            raise ConfigError("n_pulses must be non-negative")

    @property
    def back_gate(self) -> float:
        return self.v_dd / 2 if self.v_bg is None else self.v_bg

    def with_updates(self, **kwargs) -> "NeuronConfig":
        return replace(self, **kwargs)


@dataclass
class SpikeMetrics:
    spike_times: list[float]
    spike_amplitudes: list[float]
    spikes_to_fire: int
    energy_per_spike: float
    static_power: float
    spiking_frequency: float
    firing_threshold_measured: float


def synaptic_pulse_train(config: NeuronConfig) -> ISourcePulseTrain:
    """Trapezoidal stimulus injected into the membrane node."""
    if config.pulse_width < 2 * PULSE_EDGE:
        raise ConfigError("pulse_width below rise + fall")
    return ISourcePulseTrain(
        name="Isyn",
        pos="0",
        neg="mem",
        amplitude=config.i_syn_amplitude,
        pulse_width=config.pulse_width,
        period=config.pulse_period,
        rise=PULSE_EDGE,
        fall=PULSE_EDGE,
        n_pulses=config.n_pulses,
        delay=0.0,
    )


def build_if_neuron(config: NeuronConfig, model: SFedParams | None = None) -> Circuit:
    """Assemble the eight-device neuron plus membrane cap, stimulus and rails."""
    length = config.channel_length
    role = SFedRole
    devices = [
        SFed("XD1", "mem", "vref1", "vref2", "sense", role.THRESHOLD_DIODE,
             length_nm=length),
        SFed("XD2", "mem", "out", "out", "0", role.DIODE_CONNECTED_RESET,
             length_nm=length),
        SFed("XD3", "sense", "vref3", "vref3", "0", role.RESISTOR_LIKE,
             length_nm=length),
        SFed("XD4", "spike", "spike", "0", "0", role.DIODE_CONNECTED_RESET,
             length_nm=length),
        SFed("XD5", "vdd", "spike", "spike", "buf", role.INVERTER_PULL_UP,
             length_nm=length),
        SFed("XD6", "buf", "spike", "spike", "0", role.INVERTER_PULL_DOWN,
             length_nm=length),
        SFed("XD7", "vdd", "buf", "buf", "out", role.INVERTER_PULL_UP,
             length_nm=length),
        SFed("XD8", "out", "buf", "buf", "0", role.INVERTER_PULL_DOWN,
             length_nm=length),
        Resistor("Rw", "sense", "spike", SENSE_WIRE_OHMS),
        Capacitor("Cmem", "mem", "0", config.c_mem),
        synaptic_pulse_train(config),
        VSourceDC("Vdd", "vdd", "0", config.v_dd),
        VSourceDC("Vbg", "vbg", "0", config.back_gate),
        VSourceDC("Vref1", "vref1", "0", config.v_ref1),
        VSourceDC("Vref2", "vref2", "0", config.v_ref2),
        VSourceDC("Vref3", "vref3", "0", config.v_ref3),
    ]
    t_stop = config.n_pulses * config.pulse_period
    analyses = [Transient(t_stop, DEFAULT_OUTPUT_INTERVAL)] if t_stop > 0 else []
    return Circuit(
        devices=devices,
        analyses=analyses,
        globals=CircuitGlobals(
            v_dd=config.v_dd, v_bg=config.back_gate, temperature=config.temperature
        ),
    )


def detect_spikes(
    waveform: Waveform,
    node: str = "out",
    level: float = 0.6,
    hysteresis: float = 0.05,
) -> tuple[list[float], list[float]]:
    """Upward crossings of `level`, closed by a fall below `level - hysteresis`.

    Spike time is the interpolated upward crossing; amplitude is the maximum
    voltage between the crossing pair (run end closes a dangling spike).
    """
    v = waveform.voltage(node)
    t = waveform.times
    spike_times: list[float] = []
    amplitudes: list[float] = []
    armed = True
    rise_idx: int | None = None
    for k in range(1, len(t)):
        if armed and v[k - 1] < level <= v[k]:
            frac = (level - v[k - 1]) / (v[k] - v[k - 1])
            spike_times.append(float(t[k - 1] + frac * (t[k] - t[k - 1])))
            rise_idx = k
            armed = False
        elif not armed and v[k] < level - hysteresis:
            amplitudes.append(float(np.max(v[rise_idx - 1 : k + 1])))
            armed = True
            rise_idx = None
    if rise_idx is not None:
        amplitudes.append(float(np.max(v[rise_idx - 1 :])))
    return spike_times, amplitudes


def energy_per_spike(
    times: np.ndarray,
    i_syn_trace: np.ndarray,
    v_mem_trace: np.ndarray,
    n_spikes: int,
) -> float:
    """Windowed synaptic input energy divided by the number of fired spikes."""
    if n_spikes == 0:
        raise ZeroSpikes("no output spikes in the run")
    integral = float(np.trapz(i_syn_trace * v_mem_trace, times))
    return integral / n_spikes


def static_power(dc: DcSolution, v_dd: float) -> float:
    """Quiescent supply power through the two inverter pull-up devices."""
    for name in ("XD5", "XD7"):
        if name not in dc.branch_currents:
            raise MissingBranch(name)
    return v_dd * (abs(dc.branch_currents["XD5"]) + abs(dc.branch_currents["XD7"]))


def measure_firing_threshold(waveform: Waveform, spike_times: list[float]) -> float:
    """Peak membrane voltage in the window ending at the first output spike."""
    if not spike_times:
        raise NoSpike("the run never fired")
    t = waveform.times
    v_mem = waveform.voltage("mem")
    cutoff = spike_times[0]
    mask = t <= cutoff
    if not np.any(mask):
        raise NoSpike("first spike precedes the output grid")
    return float(np.max(v_mem[mask]))


def count_spikes_to_fire(config: NeuronConfig, first_spike_time: float) -> int:
    """Number of input pulses started strictly before the first output spike."""
    started = math.floor(first_spike_time / config.pulse_period) + 1
    return min(int(started), config.n_pulses)


@dataclass
class NeuronRun:
    config: NeuronConfig
    circuit: Circuit
    waveform: Waveform
    dc: DcSolution
    metrics: SpikeMetrics


def run_neuron(
    config: NeuronConfig,
    model: SFedParams | None = None,
    opts: SolverOptions = SolverOptions(),
    output_interval: float = DEFAULT_OUTPUT_INTERVAL,
    t_stop: float | None = None,
) -> NeuronRun:
    """Build, simulate (DC + transient) and extract all figures of merit."""
    from .model import DEFAULT_PARAMS

    params = model if model is not None else DEFAULT_PARAMS
    circuit = build_if_neuron(config, params)
    models = {"default": params}
    dc = dc_operating_point(circuit, opts, models)
    stop = t_stop if t_stop is not None else config.n_pulses * config.pulse_period
    wave = transient(circuit, opts, stop, output_interval, models)

    spike_times, amplitudes = detect_spikes(
        wave, "out", level=config.v_dd / 2, hysteresis=0.05
    )
    n_spikes = len(spike_times)
    power = static_power(dc, config.v_dd)
    if n_spikes:
        energy = energy_per_spike(
            wave.times, wave.current("Isyn"), wave.voltage("mem"), n_spikes
        )
        threshold = measure_firing_threshold(wave, spike_times)
        stf = count_spikes_to_fire(config, spike_times[0])
    else:
        energy = 0.0
        threshold = float("nan")
        stf = 0
    if n_spikes >= 2:
        frequency = (n_spikes - 1) / (spike_times[-1] - spike_times[0])
    else:
        frequency = 0.0

    metrics = SpikeMetrics(
        spike_times=spike_times,
        spike_amplitudes=amplitudes,
        spikes_to_fire=stf,
        energy_per_spike=energy,
        static_power=power,
        spiking_frequency=frequency,
        firing_threshold_measured=threshold,
    )
    return NeuronRun(config, circuit, wave, dc, metrics)
