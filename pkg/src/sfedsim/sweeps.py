"""Parameter sweep harness and compact-model calibration.

Sweeps rerun the neuron experiment across one axis (gate reference pair,
pulse width, channel length, supply voltage, temperature) and tabulate the
figures of merit.  Calibration fits the free model coefficients to a list
of weighted metric targets with a derivative-free simplex search; the
threshold-law coefficients stay pinned at their exactly-derived values.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .model import DEFAULT_PARAMS, DeviceTemperature, SFedParams
from .neuron import NeuronConfig, NoSpike, SpikeMetrics, run_neuron
from .units import format_value, parse_value


class SweepParameter(enum.Enum):
    VREF_PAIR = "VRefPair"
    PULSE_WIDTH = "PulseWidth"
    CHANNEL_LENGTH = "ChannelLength"
    SUPPLY_VOLTAGE = "SupplyVoltage"
    TEMPERATURE = "Temperature"


_RANGE_LIMITS = {
    SweepParameter.PULSE_WIDTH: (0.5e-9, 2e-9),
    SweepParameter.CHANNEL_LENGTH: (7.5, 15.0),
    SweepParameter.SUPPLY_VOLTAGE: (0.8, 1.2),
    SweepParameter.TEMPERATURE: (-40.0, 120.0),
}

METRIC_COLUMNS = (
    "spikes_to_fire",
    "threshold_v",
    "amplitude_v",
    "energy_j",
    "power_w",
    "freq_hz",
)


@dataclass(frozen=True)
class SweepSpec:
    parameter: SweepParameter
    points: tuple
    base_config: NeuronConfig = field(default_factory=NeuronConfig)
    tracked_metrics: tuple[str, ...] = METRIC_COLUMNS

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("sweep needs at least one point")
        limits = _RANGE_LIMITS.get(self.parameter)
        if limits is not None:
            lo, hi = limits
            for pt in self.points:
                if not lo <= float(pt) <= hi:
                    raise ValueError(
                        f"{self.parameter.value} point {pt} outside supported "
                        f"range [{lo}, {hi}]"
                    )
        else:
            vdd = self.base_config.v_dd
            for pair in self.points:
                v1, v2 = pair
                if not (0 <= v1 <= vdd and 0 <= v2 <= vdd):
                    raise ValueError(f"reference pair {pair} outside [0, v_dd]")
        unknown = set(self.tracked_metrics) - set(METRIC_COLUMNS)
        if unknown:
            raise ValueError(f"unknown metrics {sorted(unknown)}")


def _config_at(spec: SweepSpec, point) -> NeuronConfig:
    base = spec.base_config
    p = spec.parameter
    if p is SweepParameter.VREF_PAIR:
        v1, v2 = point
        return base.with_updates(v_ref1=v1, v_ref2=v2)
    if p is SweepParameter.PULSE_WIDTH:
        return base.with_updates(pulse_width=float(point))
    if p is SweepParameter.CHANNEL_LENGTH:
        return base.with_updates(channel_length=float(point))
    if p is SweepParameter.SUPPLY_VOLTAGE:
        return base.with_updates(v_dd=float(point), v_bg=None)
    if p is SweepParameter.TEMPERATURE:
        return base.with_updates(
            temperature=DeviceTemperature.from_celsius(float(point))
        )
    raise ValueError(p)  # pragma: no cover


@dataclass
class SweepRow:
    point: object
    config: NeuronConfig
    metrics: SpikeMetrics | None
    error: str | None = None

    def values(self, tracked: tuple[str, ...]) -> dict[str, float]:
        m = self.metrics
        if m is None:
            return {k: float("nan") for k in tracked}
        amplitude = max(m.spike_amplitudes) if m.spike_amplitudes else float("nan")
        all_values = {
            "spikes_to_fire": float(m.spikes_to_fire),
            "threshold_v": m.firing_threshold_measured,
            "amplitude_v": amplitude,
            "energy_j": m.energy_per_spike,
            "power_w": m.static_power,
            "freq_hz": m.spiking_frequency,
        }
        return {k: all_values[k] for k in tracked}


def _run_point(args) -> tuple[int, object, NeuronConfig, SpikeMetrics | None, str | None]:
    idx, point, config, params = args
    try:
        run = run_neuron(config, params)
        return idx, point, config, run.metrics, None
    except Exception as exc:  # solver failures become row annotations
        return idx, point, config, None, f"{type(exc).__name__}: {exc}"


def run_sweep(
    spec: SweepSpec,
    params: SFedParams = DEFAULT_PARAMS,
    jobs: int = 1,
) -> list[SweepRow]:
    """One full neuron run per point; failed points carry their solver error."""
    tasks = [
        (i, pt, _config_at(spec, pt), params) for i, pt in enumerate(spec.points)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = [_run_point(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    return [SweepRow(pt, cfg, m, err) for _, pt, cfg, m, err in results]


def sweep_csv(spec: SweepSpec, rows: list[SweepRow]) -> str:
    header = ["point"] + list(spec.tracked_metrics) + ["error"]
    lines = [",".join(header)]
    for row in rows:
        point = (
            f"{row.point[0]}/{row.point[1]}"
            if spec.parameter is SweepParameter.VREF_PAIR
            else f"{row.point}"
        )
        vals = row.values(spec.tracked_metrics)
        cells = [point]
        cells += [f"{vals[k]:.9g}" for k in spec.tracked_metrics]
        cells.append(row.error or "")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def threshold_sweep(
    vref_pairs: list[tuple[float, float]],
    base_config: NeuronConfig | None = None,
    params: SFedParams = DEFAULT_PARAMS,
) -> list[tuple[tuple[float, float], float | None, str | None]]:
    """Measured firing threshold per reference pair; NoSpike rows annotated.

    Thresholds are probed with half-width pulses so the staircase quantization
    stays fine relative to the +-50 mV windows of interest.
    """
    base = base_config if base_config is not None else NeuronConfig()
    probe = base.with_updates(pulse_width=min(base.pulse_width, 0.5e-9), n_pulses=30)
    out = []
    for pair in vref_pairs:
        cfg = probe.with_updates(v_ref1=pair[0], v_ref2=pair[1])
        try:
            run = run_neuron(cfg, params)
            if not run.metrics.spike_times:
                raise NoSpike("no output spike within the pulse budget")
            out.append((pair, run.metrics.firing_threshold_measured, None))
        except NoSpike as exc:
            out.append((pair, None, f"NoSpike: {exc}"))
    return out


# -- calibration -------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationTarget:
    metric: str
    target: float
    tolerance: float  # relative; 0 means exact match required
    weight: float = 1.0
    qualifiers: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.weight <= 0:
            raise ValueError("weight must be > 0")


@dataclass(frozen=True)
class CalibrationTargets:
    targets: tuple[CalibrationTarget, ...]

    def __post_init__(self) -> None:
        if not self.targets:
            raise ValueError("need at least one calibration target")


class BudgetExhausted(RuntimeError):
    def __init__(self, best_residual: float):
        self.best_residual = best_residual
        super().__init__(f"calibration budget exhausted, residual {best_residual:.4f}")


_FIT_FIELDS = (
    "i_sat",
    "v_slope",
    "i_off",
    "g_res",
    "lambda_leak",
    "k_vth_l",
    "alpha_t",
    "c_par",
)


def _metric_value(
    name: str, qualifiers: dict, params: SFedParams, base: NeuronConfig
) -> float:
    cfg = base
    if "pw" in qualifiers:
        cfg = cfg.with_updates(pulse_width=float(qualifiers["pw"]))
    if "l" in qualifiers:
        cfg = cfg.with_updates(channel_length=float(qualifiers["l"]) * 1e9)
    if "vdd" in qualifiers:
        cfg = cfg.with_updates(v_dd=float(qualifiers["vdd"]), v_bg=None)

    if name == "static_power":
        from .engine import dc_operating_point
        from .neuron import build_if_neuron, static_power

        circuit = build_if_neuron(cfg, params)
        dc = dc_operating_point(circuit, models={"default": params})
        return static_power(dc, cfg.v_dd)
    if name in ("energy_per_spike", "spiking_frequency", "threshold_v"):
        run = run_neuron(cfg, params)
        return {
            "energy_per_spike": run.metrics.energy_per_spike,
            "spiking_frequency": run.metrics.spiking_frequency,
            "threshold_v": run.metrics.firing_threshold_measured,
        }[name]
    if name == "spikes_to_fire":
        # a dozen firing cycles are unnecessary to count the first one
        short = cfg.with_updates(n_pulses=min(cfg.n_pulses, 16))
        run = run_neuron(short, params)
        return float(run.metrics.spikes_to_fire)
    if name == "resistor_current":
        # single ResistorLike device at the qualifier bias; toy-fit helper
        from .model import BiasPoint, SFedRole, device_current

        v = float(qualifiers.get("v", 0.4))
        return device_current(BiasPoint(v, 0.4, 0.4), SFedRole.RESISTOR_LIKE, params)
    raise ValueError(f"unknown calibration metric {name!r}")


def _target_error(value: float, target: CalibrationTarget) -> float:
    if target.tolerance == 0.0:
        return 0.0 if value == target.target else 1.0 + abs(value - target.target)
    scale = max(abs(target.target), 1e-30)
    return abs(value - target.target) / scale


def residual_report(
    params: SFedParams, targets: CalibrationTargets, base: NeuronConfig | None = None
) -> tuple[float, list[tuple[CalibrationTarget, float, float]]]:
    """Weighted mean relative error plus per-target (value, error) detail."""
    base = base if base is not None else NeuronConfig()
    detail = []
    num = 0.0
    den = 0.0
    for tgt in targets.targets:
        try:
            value = _metric_value(tgt.metric, tgt.qualifiers, params, base)
        except Exception:
            value = float("nan")
        err = _target_error(value, tgt) if math.isfinite(value) else 10.0
        detail.append((tgt, value, err))
        num += tgt.weight * err
        den += tgt.weight
    return num / den, detail


def targets_met(detail: list[tuple[CalibrationTarget, float, float]]) -> bool:
    return all(err <= tgt.tolerance for tgt, _, err in detail)


def calibrate(
    initial: SFedParams,
    targets: CalibrationTargets,
    budget: int = 500,
    base_config: NeuronConfig | None = None,
    on_step=None,
) -> tuple[SFedParams, float]:
    """Nelder-Mead fit of the free coefficients; returns (params, residual).

    Deterministic for a fixed initial simplex.  Short-circuits when the
    initial parameters already satisfy every target tolerance.  Raises
    BudgetExhausted when the best residual still exceeds 1.0 after the
    evaluation budget.
    """
    if budget < 100:
        raise ValueError("budget must be >= 100 evaluations")
    base = base_config if base_config is not None else NeuronConfig()

    evals = 0
    cache: dict[tuple, tuple[float, bool]] = {}

    def objective(vec) -> float:
        nonlocal evals
        key = tuple(vec)
        if key in cache:
            return cache[key][0]
        evals += 1
        try:
            trial = replace(initial, **dict(zip(_FIT_FIELDS, vec)))
        except ValueError:
            cache[key] = (50.0, False)
            return 50.0
        res, detail = residual_report(trial, targets, base)
        cache[key] = (res, targets_met(detail))
        return res

    res0, detail0 = residual_report(initial, targets, base)
    if targets_met(detail0):
        return initial, res0

    # deterministic initial simplex: +8% per coordinate
    x0 = [getattr(initial, f) for f in _FIT_FIELDS]
    n = len(x0)
    simplex = [list(x0)]
    for i in range(n):
        pt = list(x0)
        pt[i] = pt[i] * 1.08 if pt[i] != 0 else 1e-4
        simplex.append(pt)
    values = [objective(pt) for pt in simplex]
    best_history = [min(values)]

    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5
    while evals < budget:
        order = sorted(range(n + 1), key=lambda i: values[i])
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        if on_step is not None:
            on_step(evals, values[0])
        best_history.append(values[0])
        assert best_history[-1] <= best_history[-2] + 1e-15

        centroid = [
            sum(pt[j] for pt in simplex[:-1]) / n for j in range(n)
        ]
        worst = simplex[-1]
        refl = [c + alpha * (c - w) for c, w in zip(centroid, worst)]
        f_refl = objective(refl)
        if f_refl < values[0]:
            exp = [c + gamma * (r - c) for c, r in zip(centroid, refl)]
            f_exp = objective(exp)
            if f_exp < f_refl:
                simplex[-1], values[-1] = exp, f_exp
            else:
                simplex[-1], values[-1] = refl, f_refl
        elif f_refl < values[-2]:
            simplex[-1], values[-1] = refl, f_refl
        else:
            contr = [c + rho * (w - c) for c, w in zip(centroid, worst)]
            f_contr = objective(contr)
            if f_contr < values[-1]:
                simplex[-1], values[-1] = contr, f_contr
            else:
                best = simplex[0]
                for i in range(1, n + 1):
                    simplex[i] = [
                        b + sigma * (p - b) for b, p in zip(best, simplex[i])
                    ]
                    values[i] = objective(simplex[i])
                    if evals >= budget:
                        break
        # convergence: all targets met at the best vertex
        res, met = cache.get(tuple(simplex[0]), (values[0], False))
        if met:
            return replace(initial, **dict(zip(_FIT_FIELDS, simplex[0]))), res

    order = sorted(range(n + 1), key=lambda i: values[i])
    best_vec = simplex[order[0]]
    best_res = values[order[0]]
    if best_res > 1.0:
        raise BudgetExhausted(best_res)
    return replace(initial, **dict(zip(_FIT_FIELDS, best_vec))), best_res


# -- config file formats -----------------------------------------------------


def parse_sweep_file(text: str, base: NeuronConfig | None = None) -> SweepSpec:
    """Key-value sweep spec: `parameter = ...`, `points = ...`, overrides."""
    base = base if base is not None else NeuronConfig()
    parameter: SweepParameter | None = None
    points: list = []
    overrides: dict = {}
    tracked: tuple[str, ...] = METRIC_COLUMNS
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key == "parameter":
            lookup = {p.value.lower(): p for p in SweepParameter}
            if value.lower() not in lookup:
                raise ValueError(f"line {lineno}: unknown parameter {value!r}")
            parameter = lookup[value.lower()]
        elif key == "points":
            for tok in value.split():
                if "/" in tok:
                    v1, v2 = tok.split("/", 1)
                    points.append((parse_value(v1), parse_value(v2)))
                else:
                    points.append(parse_value(tok))
        elif key == "tracked_metrics":
            tracked = tuple(m.strip() for m in value.split(",") if m.strip())
        elif key in ("pulse_width", "pulse_period", "v_dd", "v_ref1", "v_ref2",
                     "v_ref3", "c_mem", "i_syn_amplitude"):
            overrides[key] = parse_value(value)
        elif key == "n_pulses":
            overrides[key] = int(value)
        elif key == "temp":
            overrides["temperature"] = DeviceTemperature.from_celsius(parse_value(value))
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    if parameter is None:
        raise ValueError("sweep file missing `parameter =` line")
    if not points:
        raise ValueError("sweep file missing `points =` line")
    if parameter is SweepParameter.CHANNEL_LENGTH:
        points = [p * 1e9 if p < 1e-6 else p for p in points]  # metres -> nm
    if parameter is SweepParameter.VREF_PAIR:
        bad = [p for p in points if not isinstance(p, tuple)]
        if bad:
            raise ValueError("VRefPair points must be v1/v2 pairs")
    return SweepSpec(parameter, tuple(points), base.with_updates(**overrides), tracked)


def parse_targets_file(text: str) -> CalibrationTargets:
    """One target per line: `metric target tolerance weight [key=value ...]`."""
    targets: list[CalibrationTarget] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 3:
            raise ValueError(
                f"line {lineno}: expected `metric target tolerance [weight] [k=v...]`"
            )
        metric = tokens[0]
        target = parse_value(tokens[1])
        tolerance = parse_value(tokens[2])
        weight = 1.0
        quals: dict = {}
        rest = tokens[3:]
        if rest and "=" not in rest[0]:
            weight = parse_value(rest[0])
            rest = rest[1:]
        for tok in rest:
            if "=" not in tok:
                raise ValueError(f"line {lineno}: expected key=value, got {tok!r}")
            k, _, v = tok.partition("=")
            quals[k.lower()] = parse_value(v)
        targets.append(CalibrationTarget(metric, target, tolerance, weight, quals))
    return CalibrationTargets(tuple(targets))


def metrics_csv_row(
    config_id: str, config: NeuronConfig, metrics: SpikeMetrics
) -> str:
    amplitude = (
        max(metrics.spike_amplitudes) if metrics.spike_amplitudes else float("nan")
    )
    cells = [
        config_id,
        f"{config.v_dd:.9g}",
        f"{config.v_ref1:.9g}",
        f"{config.v_ref2:.9g}",
        f"{config.pulse_width:.9g}",
        f"{config.pulse_period:.9g}",
        f"{config.channel_length:.9g}",
        f"{config.temperature.celsius:.9g}",
        f"{metrics.spikes_to_fire}",
        f"{metrics.firing_threshold_measured:.9g}",
        f"{amplitude:.9g}",
        f"{metrics.energy_per_spike:.9g}",
        f"{metrics.static_power:.9g}",
        f"{metrics.spiking_frequency:.9g}",
    ]
    return ",".join(cells)


METRICS_CSV_HEADER = (
    "config_id,vdd,vref1,vref2,pw_s,period_s,L_nm,T_C,"
    "spikes_to_fire,threshold_v,amplitude_v,energy_j,power_w,freq_hz"
)
