"""Behavioral compact model of the side-contacted field-effect diode (S-FED).

The device has four terminals: drain, gate-drain (GD), gate-source (GS) and
source, plus a grounded back gate that serves as the bias reference.  Mode
classification follows the sign triple (V_DS, V_GS, V_GD); gate voltages are
measured with respect to the grounded back gate, drain-source as the terminal
difference.  Role-specific current laws are smooth (C-infinity) so a Newton
solver sees well-defined Jacobians everywhere.

All evaluation functions are pure; parameter sets are immutable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .units import format_value, parse_value

KELVIN_REF = 300.0

# Fixed shape constants of the role laws.  These are part of the model's
# functional form; the fit parameters live in SFedParams.
MODE_BLEND_WIDTH = 0.010      # V, smoothing of the OFF-mode blend
MODE_BLEND_MARGIN = 0.05      # V, blend centered this far inside the OFF region
OFF_SAT_WIDTH = 0.005         # V, leakage current saturation width
TD_ANCHOR = 0.575             # V, conduction foot below the extracted threshold
TD_ON_FLOOR = 0.05            # V, minimum conduction knee
TD_ON_SMOOTH = 0.02           # V, smooth-max width for the knee floor
RST_GAIN = 0.09                # reset-role current scale relative to i_sat
RST_VON = 0.55                # V, gate turn-on of the reset law
RST_VSLOPE = 0.025             # V, gate steepness of the reset law
RST_SAT_WIDTH = 0.40          # V, drain-source saturation width of the reset law
RST_PARK = 0.26              # V, reset parking offset below zero bias
INV_GAIN = 0.12              # inverter-role current scale relative to i_sat
INV_VON = 0.36                # V, inverter switch turn-on
INV_VSLOPE = 0.12             # V, inverter overdrive scale (quadratic law)
INV_SAT_WIDTH = 0.15          # V, inverter output saturation width
INV_LEAK_FRAC = 0.0319         # off-state floor fraction at reference length


class SFedRole(enum.Enum):
    """Circuit role an S-FED instance plays; selects the I-V law."""

    THRESHOLD_DIODE = "ThresholdDiode"
    DIODE_CONNECTED_RESET = "DiodeConnectedReset"
    RESISTOR_LIKE = "ResistorLike"
    INVERTER_PULL_UP = "InverterPullUp"
    INVERTER_PULL_DOWN = "InverterPullDown"


@dataclass(frozen=True)
class BiasPoint:
    """Bias triple selecting the operating mode.

    v_ds is the drain-source difference; v_gs and v_gd are the GS/GD gate
    voltages relative to the grounded back gate (the reference against which
    the paper quotes its gate biases).
    """

    v_ds: float
    v_gs: float
    v_gd: float

    def __post_init__(self) -> None:
        for name in ("v_ds", "v_gs", "v_gd"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"BiasPoint.{name} must be finite")


@dataclass(frozen=True)
class SFedMode:
    label: str      # A..H
    on: bool
    structure: str  # band structure drain to source, e.g. "P+PNN+"

    @property
    def state(self) -> str:
        return "ON" if self.on else "OFF"


# Sign-pattern table; key is (v_ds >= 0, v_gs >= 0, v_gd >= 0).  Exact zeros
# count as the non-negative branch.  The final row carries label H; the
# source table lists G twice for distinct structures.
_MODE_TABLE: dict[tuple[bool, bool, bool], SFedMode] = {
    (True, True, False): SFedMode("A", True, "P+PNN+"),
    (True, True, True): SFedMode("B", True, "P+NNN+"),
    (True, False, False): SFedMode("C", True, "P+PPN+"),
    (True, False, True): SFedMode("D", False, "P+IIN+"),
    (False, True, False): SFedMode("E", True, "P+PNN+"),
    (False, True, True): SFedMode("F", True, "P+NNN+"),
    (False, False, False): SFedMode("G", True, "P+PPN+"),
    (False, False, True): SFedMode("H", True, "P+NPN+"),
}

ALL_MODES = tuple(_MODE_TABLE.values())


def classify_mode(bias: BiasPoint) -> SFedMode:
    """Map a bias sign pattern to its operating mode (total function)."""
    return _MODE_TABLE[(bias.v_ds >= 0.0, bias.v_gs >= 0.0, bias.v_gd >= 0.0)]


@dataclass(frozen=True)
class DeviceTemperature:
    """Operating temperature; supported sweep range -40 to +120 Celsius."""

    t_kelvin: float = 300.15

    def __post_init__(self) -> None:
        if not 233.15 - 1e-9 <= self.t_kelvin <= 393.15 + 1e-9:
            raise ValueError(
                f"temperature {self.t_kelvin} K outside supported 233.15..393.15 K"
            )

    @classmethod
    def from_celsius(cls, t_c: float) -> "DeviceTemperature":
        return cls(t_c + 273.15)

    @property
    def celsius(self) -> float:
        return self.t_kelvin - 273.15


@dataclass(frozen=True)
class SFedParams:
    """Compact-model coefficients.

    The threshold law is V_th = vth_a0 + vth_ags*v_gs + vth_agd*v_gd
    + k_vth_l*(L - l_ref); its coefficients are pinned by the three
    gate-bias/threshold calibration points and stay fixed during fitting.
    """

    i_sat: float = 4.0e-6          # A, ON-current scale
    v_slope: float = 0.004         # V, turn-on steepness
    i_off: float = 1.0e-11         # A, OFF-state leakage at reference geometry
    vth_a0: float = 1.4            # V
    vth_ags: float = -3.0          # dimensionless
    vth_agd: float = 0.0           # dimensionless
    g_res: float = 1.5e-9          # S, resistor-role conductance
    l_ref: float = 10.0            # nm, reference channel length
    k_vth_l: float = 0.008         # V/nm, threshold shift per nm of length
    lambda_leak: float = 5.03      # nm, leakage decay length
    alpha_t: float = 0.10          # temperature exponent on i_sat
    c_par: float = 1.0e-17         # F, parasitic capacitance per terminal pair

    def __post_init__(self) -> None:
        if self.i_sat <= 0.0:
            raise ValueError("i_sat must be positive")
        if self.i_off <= 0.0:
            raise ValueError("i_off must be positive")
        if self.i_sat / self.i_off < 1.0e4:
            raise ValueError("on/off current ratio below 1e4 at reference geometry")
        if self.v_slope <= 0.0:
            raise ValueError("v_slope must be positive")
        if self.lambda_leak <= 0.0:
            raise ValueError("lambda_leak must be positive")
        if self.c_par < 0.0:
            raise ValueError("c_par must be non-negative")

    def with_updates(self, **kwargs: float) -> "SFedParams":
        return replace(self, **kwargs)

    def i_sat_scaled(self, temp: DeviceTemperature) -> float:
        return self.i_sat * (temp.t_kelvin / KELVIN_REF) ** (-self.alpha_t)

    def length_leak_factor(self, length_nm: float) -> float:
        return math.exp((self.l_ref - length_nm) / self.lambda_leak)

    def i_off_scaled(self, length_nm: float) -> float:
        return self.i_off * self.length_leak_factor(length_nm)


DEFAULT_PARAMS = SFedParams()


def threshold_voltage(
    v_gs: float, v_gd: float, length_nm: float, params: SFedParams
) -> float:
    """Gate-tunable threshold: affine in the applied gate biases and length."""
    return (
        params.vth_a0
        + params.vth_ags * v_gs
        + params.vth_agd * v_gd
        + params.k_vth_l * (length_nm - params.l_ref)
    )


def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow; exact linear tail for large x.
    if x > 36.0:
        return x
    if x < -36.0:
        return 0.0
    return math.log1p(math.exp(x))


def _logistic(x: float) -> float:
    if x >= 0.0:
        if x > 500.0:
            return 1.0
        z = math.exp(-x)
        return 1.0 / (1.0 + z)
    if x < -500.0:
        return 0.0
    z = math.exp(x)
    return z / (1.0 + z)


def _dlogistic(x: float) -> float:
    s = _logistic(x)
    return s * (1.0 - s)


def _tanh(x: float) -> float:
    return math.tanh(x)


def _dtanh(x: float) -> float:
    c = math.cosh(x) if abs(x) < 350.0 else float("inf")
    return 1.0 / (c * c) if math.isfinite(c) else 0.0


@dataclass(frozen=True)
class TerminalCurrents:
    """Device current with partials w.r.t. the four terminal voltages.

    Current is positive when conventional current enters the drain terminal
    and leaves the source terminal.
    """

    i: float
    di_dvd: float
    di_dvgd: float
    di_dvgs: float
    di_dvs: float


def sfed_terminal_current(
    v_drain: float,
    v_gate_d: float,
    v_gate_s: float,
    v_source: float,
    role: SFedRole,
    params: SFedParams,
    temp: DeviceTemperature = DeviceTemperature(),
    length_nm: float | None = None,
) -> TerminalCurrents:
    """Evaluate the role law from absolute terminal voltages (bulk at 0 V)."""
    length = params.l_ref if length_nm is None else length_nm
    dv = v_drain - v_source
    i_sat_t = params.i_sat_scaled(temp)
    lfac = params.length_leak_factor(length)
    i_off_l = params.i_off * lfac

    # Smooth OFF-mode (mode D) blend: the sign pattern (+, -, +) suppresses
    # conduction down to the leakage floor regardless of role.  The blend is
    # centered a small margin inside the OFF octant so boundary biases (any
    # coordinate at 0, which classifies as the ON branch) stay on the role law.
    wg = MODE_BLEND_WIDTH
    mg = MODE_BLEND_MARGIN
    s_ds = _logistic((dv - mg) / wg)
    s_gs = _logistic((-v_gate_s - mg) / wg)
    s_gd = _logistic((v_gate_d - mg) / wg)
    w_off = s_ds * s_gs * s_gd
    dwoff_dvd = _dlogistic((dv - mg) / wg) / wg * s_gs * s_gd
    dwoff_dvs = -dwoff_dvd
    dwoff_dvgs = -_dlogistic((-v_gate_s - mg) / wg) / wg * s_ds * s_gd
    dwoff_dvgd = _dlogistic((v_gate_d - mg) / wg) / wg * s_ds * s_gs

    i_leak = i_off_l * _tanh(dv / OFF_SAT_WIDTH)
    dileak_dvd = i_off_l * _dtanh(dv / OFF_SAT_WIDTH) / OFF_SAT_WIDTH
    dileak_dvs = -dileak_dvd

    # Role current and its partials.
    if role is SFedRole.RESISTOR_LIKE:
        i_on = params.g_res * dv
        don_dvd, don_dvs = params.g_res, -params.g_res
        don_dvgd = don_dvgs = 0.0

    elif role is SFedRole.THRESHOLD_DIODE:
        vth = threshold_voltage(v_gate_s, v_gate_d, length, params)
        raw = vth - TD_ANCHOR
        # smooth max(raw, TD_ON_FLOOR)
        z = (raw - TD_ON_FLOOR) / TD_ON_SMOOTH
        v_on = TD_ON_FLOOR + TD_ON_SMOOTH * _softplus(z)
        dvon_draw = _logistic(z)
        dvon_dvgs = dvon_draw * params.vth_ags
        dvon_dvgd = dvon_draw * params.vth_agd

        xp = (dv - v_on) / params.v_slope
        xm = (-dv - v_on) / params.v_slope
        i_on = i_sat_t * (_softplus(xp) - _softplus(xm))
        sp_p, sp_m = _logistic(xp), _logistic(xm)
        don_dvd = i_sat_t * (sp_p + sp_m) / params.v_slope
        don_dvs = -don_dvd
        don_dvon = -i_sat_t * (sp_p - sp_m) / params.v_slope
        don_dvgs = don_dvon * dvon_dvgs
        don_dvgd = don_dvon * dvon_dvgd

    elif role is SFedRole.DIODE_CONNECTED_RESET:
        # The mean gate level relative to the source controls the law; with
        # both gates tied to the drain (diode connection) the turn-on reads in
        # V_DS.  The parking offset lets a reset device settle its drain
        # below the source potential before cutting off, which re-arms the
        # switching chain after a discharge.
        u = 0.5 * (v_gate_d + v_gate_s) - v_source
        xg = (u - RST_VON) / RST_VSLOPE
        xs = (dv + RST_PARK) / RST_SAT_WIDTH
        g_fac, s_fac = _logistic(xg), _tanh(xs)
        scale = RST_GAIN * i_sat_t
        i_on = scale * g_fac * s_fac
        dg = _dlogistic(xg) / RST_VSLOPE
        ds = _dtanh(xs) / RST_SAT_WIDTH
        don_dvd = scale * g_fac * ds
        don_dvgd = scale * 0.5 * dg * s_fac
        don_dvgs = scale * 0.5 * dg * s_fac
        don_dvs = -scale * (dg * s_fac + g_fac * ds)

    elif role in (SFedRole.INVERTER_PULL_UP, SFedRole.INVERTER_PULL_DOWN):
        # Complementary switch pair with a quadratic (softplus-squared)
        # overdrive law: the more-overdriven side wins decisively, which
        # squares the transfer while the symmetric forms keep the crossover
        # pinned at half the rail.  The off-state strength floor scales with
        # channel length like i_off.
        fl = INV_LEAK_FRAC * lfac
        if role is SFedRole.INVERTER_PULL_DOWN:
            u = 0.5 * (v_gate_d + v_gate_s) - v_source
            du_dvd, du_dvs = 0.0, -1.0
        else:
            u = v_drain - 0.5 * (v_gate_d + v_gate_s)
            du_dvd, du_dvs = 1.0, 0.0
        du_dvg = 0.5 if role is SFedRole.INVERTER_PULL_DOWN else -0.5
        xg = (u - INV_VON) / INV_VSLOPE
        xs = dv / INV_SAT_WIDTH
        sp = _softplus(xg)
        g_fac = sp * sp + fl
        s_fac = _tanh(xs)
        scale = INV_GAIN * i_sat_t
        i_on = scale * g_fac * s_fac
        dgdu = 2.0 * sp * _logistic(xg) / INV_VSLOPE
        ds = _dtanh(xs) / INV_SAT_WIDTH
        don_dvd = scale * (dgdu * du_dvd * s_fac + g_fac * ds)
        don_dvs = scale * (dgdu * du_dvs * s_fac - g_fac * ds)
        don_dvgd = scale * dgdu * du_dvg * s_fac
        don_dvgs = scale * dgdu * du_dvg * s_fac

    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown role {role}")

    i = (1.0 - w_off) * i_on + w_off * i_leak
    diff = i_leak - i_on
    return TerminalCurrents(
        i=i,
        di_dvd=(1.0 - w_off) * don_dvd + w_off * dileak_dvd + dwoff_dvd * diff,
        di_dvgd=(1.0 - w_off) * don_dvgd + dwoff_dvgd * diff,
        di_dvgs=(1.0 - w_off) * don_dvgs + dwoff_dvgs * diff,
        di_dvs=(1.0 - w_off) * don_dvs + w_off * dileak_dvs + dwoff_dvs * diff,
    )


def device_current(
    bias: BiasPoint,
    role: SFedRole,
    params: SFedParams,
    temp: DeviceTemperature = DeviceTemperature(),
    length_nm: float | None = None,
) -> float:
    """Current for a source-grounded device at the given bias point."""
    return sfed_terminal_current(
        bias.v_ds, bias.v_gd, bias.v_gs, 0.0, role, params, temp, length_nm
    ).i


def device_conductances(
    bias: BiasPoint,
    role: SFedRole,
    params: SFedParams,
    temp: DeviceTemperature = DeviceTemperature(),
    length_nm: float | None = None,
) -> tuple[float, float, float]:
    """Analytic partials (dI/dV_DS, dI/dV_GS, dI/dV_GD) at the bias point."""
    tc = sfed_terminal_current(
        bias.v_ds, bias.v_gd, bias.v_gs, 0.0, role, params, temp, length_nm
    )
    return tc.di_dvd, tc.di_dvgs, tc.di_dvgd


_PARAM_FIELDS = (
    "i_sat",
    "v_slope",
    "i_off",
    "vth_a0",
    "vth_ags",
    "vth_agd",
    "g_res",
    "l_ref",
    "k_vth_l",
    "lambda_leak",
    "alpha_t",
    "c_par",
)


def params_to_text(params: SFedParams) -> str:
    """Serialize a parameter set as `name = value` lines with SI suffixes."""
    lines = [f"{name} = {format_value(getattr(params, name))}" for name in _PARAM_FIELDS]
    return "\n".join(lines) + "\n"


def params_from_text(text: str) -> SFedParams:
    """Parse a parameter file; unknown names raise, missing names default."""
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected `name = value`")
        name, _, value = line.partition("=")
        name = name.strip()
        if name not in _PARAM_FIELDS:
            raise ValueError(f"line {lineno}: unknown parameter {name!r}")
        values[name] = parse_value(value.strip())
    return SFedParams(**values)


def load_params(path: str) -> SFedParams:
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_text(fh.read())


def save_params(path: str, params: SFedParams) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(params_to_text(params))
