"""Development harness: run the neuron and print every figure of merit."""

import sys
import time

sys.path.insert(0, "src")

import numpy as np

from sfedsim.model import DEFAULT_PARAMS
from sfedsim.neuron import NeuronConfig, run_neuron


def describe(tag, config, model=DEFAULT_PARAMS, t_stop=None):
    t0 = time.time()
    run = run_neuron(config, model, t_stop=t_stop)
    el = time.time() - t0
    m = run.metrics
    w = run.waveform
    print(f"== {tag} (wall {el:.1f}s)")
    print("   dc:", {k: round(v, 4) for k, v in run.dc.node_voltages.items()})
    print(f"   static power {m.static_power*1e9:.2f} nW  "
          f"(ID5 {run.dc.branch_currents['XD5']*1e9:.2f} nA, "
          f"ID7 {run.dc.branch_currents['XD7']*1e9:.2f} nA)")
    print(f"   spikes {len(m.spike_times)}  stf {m.spikes_to_fire}  "
          f"freq {m.spiking_frequency/1e6:.2f} MHz")
    print(f"   threshold {m.firing_threshold_measured:.4f} V  "
          f"energy {m.energy_per_spike*1e15:.4f} fJ")
    if m.spike_amplitudes:
        print(f"   amplitudes min {min(m.spike_amplitudes):.4f} "
              f"max {max(m.spike_amplitudes):.4f}")
    if m.spike_times:
        print("   spike times (ns):", [round(t * 1e9, 2) for t in m.spike_times[:12]])
    # membrane peaks per pulse
    vm = w.voltage("mem")
    period = config.pulse_period
    peaks = []
    for k in range(min(config.n_pulses, 12)):
        mask = (w.times >= k * period) & (w.times < (k + 1) * period)
        if mask.any():
            peaks.append(round(float(vm[mask].max()), 4))
    print("   mem peaks/pulse:", peaks)
    vs = w.voltage("spike")
    print(f"   spike node: rest {vs[0]:.4f} max {vs.max():.4f}")
    return run


if __name__ == "__main__":
    base = NeuronConfig()
    if "--quick" in sys.argv:
        describe("nominal 1ns (12 pulses)", base.with_updates(n_pulses=12))
    else:
        describe("nominal 1ns (12 pulses)", base.with_updates(n_pulses=12))
        describe("0.5ns (14 pulses)", base.with_updates(pulse_width=0.5e-9, n_pulses=14))
