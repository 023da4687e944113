"""Development harness: full criterion matrix at current model constants."""

import sys, time
sys.path.insert(0, "src")
from sfedsim.model import DEFAULT_PARAMS, DeviceTemperature
from sfedsim.neuron import NeuronConfig, run_neuron

def row(tag, cfg, t_stop=None):
    t0 = time.time()
    r = run_neuron(cfg, DEFAULT_PARAMS, t_stop=t_stop)
    m = r.metrics
    amp = f"{min(m.spike_amplitudes):.4f}-{max(m.spike_amplitudes):.4f}" if m.spike_amplitudes else "-"
    print(f"{tag:28s} stf={m.spikes_to_fire:2d} thr={m.firing_threshold_measured:7.4f} "
          f"E={m.energy_per_spike*1e15:6.3f}fJ P={m.static_power*1e9:6.2f}nW "
          f"f={m.spiking_frequency/1e6:6.2f}MHz amp={amp} n={len(m.spike_times)} ({time.time()-t0:.0f}s)")
    return m

base = NeuronConfig()
print("== nominal (full 50 pulses)")
row("nominal pw=1n", base)
print("== pulse widths")
for pw in (0.5e-9, 1.5e-9, 2.0e-9):
    row(f"pw={pw*1e9}n", base.with_updates(pulse_width=pw, n_pulses=30))
print("== thresholds (0.5n pulses)")
for v1, v2 in ((0.4, 0.2), (0.8, 0.1), (1.0, 0.0)):
    row(f"vref=({v1},{v2})", base.with_updates(v_ref1=v1, v_ref2=v2, pulse_width=0.5e-9, n_pulses=26))
print("== channel length")
for L in (7.5, 12.5, 15.0):
    row(f"L={L}nm", base.with_updates(channel_length=L, n_pulses=30))
print("== vdd")
for vdd in (0.8, 1.0):
    row(f"vdd={vdd}", base.with_updates(v_dd=vdd, n_pulses=30))
print("== temperature")
for tc in (-40.0, 120.0):
    row(f"T={tc}C", base.with_updates(temperature=DeviceTemperature.from_celsius(tc), n_pulses=30))
