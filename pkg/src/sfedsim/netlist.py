"""Circuit representation and the line-oriented netlist dialect.

One device per line, first letter selects the class:

    X<name> <drain> <gate_d> <gate_s> <source> role=<Role> [model=<set>] [l=<len>]
    C<name> <n+> <n-> <farads>
    R<name> <n+> <n-> <ohms>
    V<name> <n+> <n-> <volts>
    I<name> <n+> <n-> pulse(<amp> <pw> <period> <rise> <fall> <n> <delay>)

Directives: `.op`, `.tran <t_stop> <interval>`, `.global vdd=<v> vbg=<v> temp=<C>`.
`*` starts a comment, `+` continues the previous line, keywords are
case-insensitive, node `0` is ground.  Values use SI suffixes (f p n u m k).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .model import DeviceTemperature, SFedRole
from .units import format_value, parse_value

GROUND = "0"


class NetlistError(Exception):
    """Base for netlist problems; carries the 1-based source line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line else message)


class NetlistSyntaxError(NetlistError):
    pass


class UnknownModel(NetlistError):
    def __init__(self, name: str, line: int | None = None):
        self.name = name
        super().__init__(f"unknown model {name!r}", line)


class DuplicateDevice(NetlistError):
    def __init__(self, name: str, line: int | None = None):
        self.name = name
        super().__init__(f"duplicate device {name!r}", line)


@dataclass(frozen=True)
class SFed:
    name: str
    drain: str
    gate_d: str
    gate_s: str
    source: str
    role: SFedRole
    model: str = "default"
    length_nm: float = 10.0

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.drain, self.gate_d, self.gate_s, self.source)


@dataclass(frozen=True)
class Capacitor:
    name: str
    pos: str
    neg: str
    farads: float

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.pos, self.neg)


@dataclass(frozen=True)
class Resistor:
    name: str
    pos: str
    neg: str
    ohms: float

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.pos, self.neg)


@dataclass(frozen=True)
class VSourceDC:
    name: str
    pos: str
    neg: str
    volts: float

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.pos, self.neg)


@dataclass(frozen=True)
class ISourcePulseTrain:
    """Trapezoidal pulse train from pos into neg terminal-wise; current is
    injected INTO the neg node (conventional source orientation: the device
    pushes current out of its neg terminal into the circuit when positive).
    """

    name: str
    pos: str
    neg: str
    amplitude: float
    pulse_width: float
    period: float
    rise: float
    fall: float
    n_pulses: int
    delay: float = 0.0

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.pos, self.neg)

    def value_at(self, t: float) -> float:
        """Instantaneous current of the trapezoidal train."""
        if self.n_pulses <= 0 or t < self.delay:
            return 0.0
        rel = t - self.delay
        k = int(rel // self.period) if self.period > 0 else 0
        if k >= self.n_pulses:
            return 0.0
        tau = rel - k * self.period
        if tau >= self.pulse_width:
            return 0.0
        if tau < self.rise:
            return self.amplitude * tau / self.rise if self.rise > 0 else self.amplitude
        flat_end = self.pulse_width - self.fall
        if tau <= flat_end:
            return self.amplitude
        if self.fall > 0:
            return self.amplitude * (self.pulse_width - tau) / self.fall
        return self.amplitude

    def corner_times(self, t_stop: float) -> list[float]:
        """Waveform corners inside [0, t_stop]; integration breakpoints."""
        corners: list[float] = []
        for k in range(self.n_pulses):
            base = self.delay + k * self.period
            if base > t_stop:
                break
            for dt in (0.0, self.rise, self.pulse_width - self.fall, self.pulse_width):
                t = base + dt
                if 0.0 <= t <= t_stop:
                    corners.append(t)
        return corners


Device = SFed | Capacitor | Resistor | VSourceDC | ISourcePulseTrain


@dataclass(frozen=True)
class OperatingPoint:
    pass


@dataclass(frozen=True)
class Transient:
    t_stop: float
    output_interval: float


Analysis = OperatingPoint | Transient


@dataclass(frozen=True)
class CircuitGlobals:
    v_dd: float = 1.2
    v_bg: float = 0.6
    temperature: DeviceTemperature = field(default_factory=DeviceTemperature)


@dataclass
class Circuit:
    devices: list[Device] = field(default_factory=list)
    analyses: list[Analysis] = field(default_factory=list)
    globals: CircuitGlobals = field(default_factory=CircuitGlobals)

    def node_names(self) -> list[str]:
        """Non-ground node names in first-appearance order."""
        seen: list[str] = []
        for dev in self.devices:
            for node in dev.terminals:
                if node != GROUND and node not in seen:
                    seen.append(node)
        return seen

    def node_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.node_names())}

    def device(self, name: str) -> Device:
        for dev in self.devices:
            if dev.name == name:
                return dev
        raise KeyError(name)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Circuit):
            return NotImplemented
        return (
            self.devices == other.devices
            and self.analyses == other.analyses
            and self.globals == other.globals
        )


@dataclass(frozen=True)
class Diagnostic:
    kind: str     # FloatingNode | DanglingTerminal | ZeroValuedComponent | InvalidPulse
    subject: str  # node or device name
    message: str

    def __str__(self) -> str:
        return f"{self.kind}({self.subject}): {self.message}"


def _join_continuations(text: str) -> list[tuple[int, str]]:
    """Strip comments, merge `+` continuation lines; keep 1-based line numbers."""
    logical: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("*"):
            continue
        if line.startswith("+"):
            if not logical:
                raise NetlistSyntaxError("continuation with no preceding line", lineno)
            prev_no, prev = logical[-1]
            logical[-1] = (prev_no, prev + " " + line[1:].strip())
        else:
            logical.append((lineno, line))
    return logical


_ROLE_LOOKUP = {role.value.lower(): role for role in SFedRole}


def _parse_kv(tokens: list[str], lineno: int) -> dict[str, str]:
    kv: dict[str, str] = {}
    for tok in tokens:
        if "=" not in tok:
            raise NetlistSyntaxError(f"expected key=value, got {tok!r}", lineno)
        key, _, value = tok.partition("=")
        kv[key.lower()] = value
    return kv


def _value(token: str, lineno: int, what: str) -> float:
    try:
        return parse_value(token)
    except ValueError:
        raise NetlistSyntaxError(f"bad {what} value {token!r}", lineno) from None


def parse_netlist(text: str, models: dict[str, object] | None = None) -> Circuit:
    """Parse netlist text into a Circuit; deterministic, line-diagnosed."""
    known_models = {"default"} | set(models or {})
    circuit = Circuit()
    names: set[str] = set()

    for lineno, line in _join_continuations(text):
        if line.startswith("."):
            tokens = line.split()
            directive = tokens[0].lower()
            if directive == ".op":
                circuit.analyses.append(OperatingPoint())
            elif directive == ".tran":
                if len(tokens) != 3:
                    raise NetlistSyntaxError(".tran expects <t_stop> <interval>", lineno)
                t_stop = _value(tokens[1], lineno, "t_stop")
                interval = _value(tokens[2], lineno, "output interval")
                if t_stop <= 0 or interval <= 0:
                    raise NetlistSyntaxError(".tran times must be positive", lineno)
                circuit.analyses.append(Transient(t_stop, interval))
            elif directive == ".global":
                kv = _parse_kv(tokens[1:], lineno)
                g = circuit.globals
                if "vdd" in kv:
                    g = replace(g, v_dd=_value(kv.pop("vdd"), lineno, "vdd"))
                if "vbg" in kv:
                    g = replace(g, v_bg=_value(kv.pop("vbg"), lineno, "vbg"))
                if "temp" in kv:
                    t_c = _value(kv.pop("temp"), lineno, "temp")
                    try:
                        g = replace(g, temperature=DeviceTemperature.from_celsius(t_c))
                    except ValueError as exc:
                        raise NetlistSyntaxError(str(exc), lineno) from None
                if kv:
                    raise NetlistSyntaxError(
                        f"unknown .global keys {sorted(kv)}", lineno
                    )
                circuit.globals = g
            else:
                raise NetlistSyntaxError(f"unknown directive {directive}", lineno)
            continue

        tokens = line.split()
        name = tokens[0]
        letter = name[0].upper()
        if name.upper() in names:
            raise DuplicateDevice(name, lineno)
        names.add(name.upper())

        if letter == "X":
            if len(tokens) < 6:
                raise NetlistSyntaxError(
                    "X line expects 4 nodes and role=<role>", lineno
                )
            nodes = tokens[1:5]
            kv = _parse_kv(tokens[5:], lineno)
            role_text = kv.pop("role", None)
            if role_text is None:
                raise NetlistSyntaxError("X line missing role=", lineno)
            role = _ROLE_LOOKUP.get(role_text.lower())
            if role is None:
                raise NetlistSyntaxError(f"unknown role {role_text!r}", lineno)
            model = kv.pop("model", "default")
            if model not in known_models:
                raise UnknownModel(model, lineno)
            length_nm = 10.0
            if "l" in kv:
                length_nm = _value(kv.pop("l"), lineno, "length") * 1e9
            if kv:
                raise NetlistSyntaxError(f"unknown X keys {sorted(kv)}", lineno)
            circuit.devices.append(
                SFed(name, nodes[0], nodes[1], nodes[2], nodes[3], role, model, length_nm)
            )
        elif letter in "CRV":
            if len(tokens) != 4:
                raise NetlistSyntaxError(
                    f"{letter} line expects <n+> <n-> <value>", lineno
                )
            value = _value(tokens[3], lineno, "component")
            cls = {"C": Capacitor, "R": Resistor, "V": VSourceDC}[letter]
            circuit.devices.append(cls(name, tokens[1], tokens[2], value))
        elif letter == "I":
            rest = " ".join(tokens[3:]) if len(tokens) >= 4 else ""
            inner = rest.strip()
            if len(tokens) < 4 or not inner.lower().startswith("pulse(") or not inner.endswith(")"):
                raise NetlistSyntaxError(
                    "I line expects <n+> <n-> pulse(<amp> <pw> <period> "
                    "<rise> <fall> <n> <delay>)",
                    lineno,
                )
            args = inner[len("pulse(") : -1].split()
            if len(args) != 7:
                raise NetlistSyntaxError("pulse() expects 7 arguments", lineno)
            amp, pw, period, rise, fall = (
                _value(a, lineno, "pulse") for a in args[:5]
            )
            try:
                n_pulses = int(args[5])
            except ValueError:
                raise NetlistSyntaxError(f"bad pulse count {args[5]!r}", lineno) from None
            delay = _value(args[6], lineno, "pulse delay")
            circuit.devices.append(
                ISourcePulseTrain(
                    name, tokens[1], tokens[2], amp, pw, period, rise, fall, n_pulses, delay
                )
            )
        else:
            raise NetlistSyntaxError(f"unknown device letter {letter!r}", lineno)

    return circuit


def validate(circuit: Circuit) -> list[Diagnostic]:
    """Check circuit invariants; an empty list means the circuit is sound."""
    diags: list[Diagnostic] = []

    for dev in circuit.devices:
        if isinstance(dev, Capacitor) and dev.farads <= 0:
            diags.append(
                Diagnostic("ZeroValuedComponent", dev.name, "capacitance must be > 0")
            )
        if isinstance(dev, Resistor) and dev.ohms == 0:
            diags.append(
                Diagnostic("ZeroValuedComponent", dev.name, "resistance must be nonzero")
            )
        if isinstance(dev, ISourcePulseTrain):
            if dev.pulse_width < dev.rise + dev.fall:
                diags.append(
                    Diagnostic(
                        "InvalidPulse", dev.name, "pulse_width < rise + fall"
                    )
                )

    # DC reachability: walk conducting paths (R, V, I, SFed drain-source)
    # starting from ground and every source terminal.  Gate terminals sense
    # but do not conduct, so a gate-only node needs its own DC path.
    adjacency: dict[str, set[str]] = {}

    def connect(a: str, b: str) -> None:
        adjacency.setdefault(a, set()).add(b)
        adjacency.setdefault(b, set()).add(a)

    frontier: set[str] = {GROUND}
    for dev in circuit.devices:
        if isinstance(dev, (Resistor, VSourceDC, ISourcePulseTrain)):
            connect(dev.pos, dev.neg)
            if isinstance(dev, (VSourceDC, ISourcePulseTrain)):
                frontier.update(dev.terminals)
        elif isinstance(dev, SFed):
            connect(dev.drain, dev.source)

    reached: set[str] = set()
    stack = list(frontier)
    while stack:
        node = stack.pop()
        if node in reached:
            continue
        reached.add(node)
        stack.extend(adjacency.get(node, ()))

    for node in circuit.node_names():
        if node not in reached:
            diags.append(
                Diagnostic("FloatingNode", node, "no DC path to any source or ground")
            )

    all_nodes = set(circuit.node_names()) | {GROUND}
    for dev in circuit.devices:
        for term in dev.terminals:
            if term not in all_nodes:  # pragma: no cover - construction invariant
                diags.append(
                    Diagnostic("DanglingTerminal", dev.name, f"unknown node {term}")
                )

    has_ground = any(GROUND in dev.terminals for dev in circuit.devices)
    if circuit.devices and not has_ground:
        diags.append(Diagnostic("FloatingNode", GROUND, "no ground reference"))

    return diags


def _fmt(value: float) -> str:
    return format_value(value)


def emit_netlist(circuit: Circuit) -> str:
    """Render canonical text; parse(emit(c)) is structurally equal to c."""
    lines: list[str] = []
    g = circuit.globals
    lines.append(
        f".global vdd={_fmt(g.v_dd)} vbg={_fmt(g.v_bg)} temp={_fmt(g.temperature.celsius)}"
    )
    for dev in circuit.devices:
        if isinstance(dev, SFed):
            parts = [
                dev.name,
                dev.drain,
                dev.gate_d,
                dev.gate_s,
                dev.source,
                f"role={dev.role.value}",
            ]
            if dev.model != "default":
                parts.append(f"model={dev.model}")
            parts.append(f"l={_fmt(dev.length_nm * 1e-9)}")
            lines.append(" ".join(parts))
        elif isinstance(dev, Capacitor):
            lines.append(f"{dev.name} {dev.pos} {dev.neg} {_fmt(dev.farads)}")
        elif isinstance(dev, Resistor):
            lines.append(f"{dev.name} {dev.pos} {dev.neg} {_fmt(dev.ohms)}")
        elif isinstance(dev, VSourceDC):
            lines.append(f"{dev.name} {dev.pos} {dev.neg} {_fmt(dev.volts)}")
        elif isinstance(dev, ISourcePulseTrain):
            lines.append(
                f"{dev.name} {dev.pos} {dev.neg} pulse({_fmt(dev.amplitude)} "
                f"{_fmt(dev.pulse_width)} {_fmt(dev.period)} {_fmt(dev.rise)} "
                f"{_fmt(dev.fall)} {dev.n_pulses} {_fmt(dev.delay)})"
            )
    for analysis in circuit.analyses:
        if isinstance(analysis, OperatingPoint):
            lines.append(".op")
        else:
            lines.append(f".tran {_fmt(analysis.t_stop)} {_fmt(analysis.output_interval)}")
    return "\n".join(lines) + "\n"
