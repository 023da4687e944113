"""SI-suffixed number parsing and formatting shared by the netlist and CLI layers.

Recognized suffixes: f, p, n, u, m, k (femto through kilo).  A bare number or
scientific notation is accepted unchanged; suffix matching is case-insensitive
except that no 'M/meg' distinction exists (this grammar has no mega).
"""

from __future__ import annotations

import re

SI_SCALE = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "m": 1e-3,
    "k": 1e3,
}

_NUMBER_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([fpnumk]?)$")


def parse_value(token: str) -> float:
    """Parse a number with an optional SI suffix, e.g. '1f' -> 1e-15."""
    m = _NUMBER_RE.match(token.strip().lower())
    if m is None:
        raise ValueError(f"not a number: {token!r}")
    base = float(m.group(1))
    suffix = m.group(2)
    return base * SI_SCALE[suffix] if suffix else base


def format_value(value: float) -> str:
    """Format a number using the largest SI suffix that keeps it in [1, 1000).

    Exact powers round-trip through parse_value; anything awkward falls back
    to repr() scientific notation, which the parser also accepts.
    """
    if value == 0.0:
        return "0"
    mag = abs(value)
    for suffix, scale in sorted(SI_SCALE.items(), key=lambda kv: kv[1]):
        scaled = value / scale
        if 1.0 <= abs(scaled) < 1000.0:
            text = f"{scaled:.15g}{suffix}"
            if parse_value(text) == value:
                return text
    if 1.0 <= mag < 1e6:
        text = f"{value:.15g}"
        if parse_value(text) == value:
            return text
    return f"{value!r}"
