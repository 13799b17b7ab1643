"""Tiny unit parser: converts "2.0 MW/kg"-style quantities to SI floats.

Dimensions are exponent tuples over (length, mass, time, temperature).
"""

from __future__ import annotations

import re

MMHG = 133.322387415

Dim = tuple

DIMLESS: Dim = (0, 0, 0, 0)
LENGTH: Dim = (1, 0, 0, 0)
MASS: Dim = (0, 1, 0, 0)
TIME: Dim = (0, 0, 1, 0)
TEMPERATURE: Dim = (0, 0, 0, 1)
PRESSURE: Dim = (-1, 1, -2, 0)
RATE: Dim = (0, 0, -1, 0)
AREA: Dim = (2, 0, 0, 0)
DIFFUSIVITY: Dim = (2, 0, -1, 0)
VELOCITY: Dim = (1, 0, -1, 0)
DENSITY: Dim = (-3, 1, 0, 0)
VISCOSITY: Dim = (-1, 1, -1, 0)
SPECIFIC_HEAT: Dim = (2, 0, -2, -1)
CONDUCTIVITY: Dim = (1, 1, -3, -1)
HEAT_TRANSFER: Dim = (0, 1, -3, -1)
POWER_PER_MASS: Dim = (2, 0, -3, 0)
HYDRAULIC_CONDUCTIVITY: Dim = (2, -1, 1, 0)  # m^2 s / kg
INVERSE_LENGTH: Dim = (-1, 0, 0, 0)
LYMPH_FILTRATION: Dim = (1, -1, 1, 0)  # 1/(Pa s)
MOBILITY: Dim = (3, -1, 1, 0)  # m^2/(Pa s)

_UNITS: dict[str, tuple[float, Dim]] = {
    "1": (1.0, DIMLESS),
    "m": (1.0, LENGTH),
    "cm": (1e-2, LENGTH),
    "mm": (1e-3, LENGTH),
    "um": (1e-6, LENGTH),
    "µm": (1e-6, LENGTH),
    "nm": (1e-9, LENGTH),
    "kg": (1.0, MASS),
    "g": (1e-3, MASS),
    "mg": (1e-6, MASS),
    "s": (1.0, TIME),
    "min": (60.0, TIME),
    "h": (3600.0, TIME),
    "K": (1.0, TEMPERATURE),
    "Pa": (1.0, PRESSURE),
    "kPa": (1e3, PRESSURE),
    "mmHg": (MMHG, PRESSURE),
    "N": (1.0, (1, 1, -2, 0)),
    "J": (1.0, (2, 1, -2, 0)),
    "W": (1.0, (2, 1, -3, 0)),
    "mW": (1e-3, (2, 1, -3, 0)),
    "kW": (1e3, (2, 1, -3, 0)),
    "MW": (1e6, (2, 1, -3, 0)),
}

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANTITY = re.compile(rf"^\s*({_NUMBER})\s*(.*?)\s*$")
_FACTOR = re.compile(r"^([^\s^]+?)(?:\^([-+]?\d+))?$")


class UnitError(ValueError):
    pass


def parse_unit(expr: str) -> tuple[float, Dim]:
    """Scale factor to SI and dimension of a unit expression like "W/mm^2/K"."""
    expr = expr.strip().replace("·", "*")
    if not expr:
        return 1.0, DIMLESS
    scale = 1.0
    dim = [0, 0, 0, 0]
    tokens = re.split(r"([*/])", expr)
    sign = 1
    for tok in tokens:
        tok = tok.strip()
        if tok == "*":
            sign = 1
            continue
        if tok == "/":
            sign = -1
            continue
        m = _FACTOR.match(tok)
        if not m or m.group(1) not in _UNITS:
            raise UnitError(f"unknown unit {tok!r} in {expr!r}")
        f, d = _UNITS[m.group(1)]
        p = sign * int(m.group(2) or 1)
        scale *= f**p
        for i in range(4):
            dim[i] += p * d[i]
        sign = 1
    return scale, tuple(dim)


def parse_quantity(text: str, expected: Dim, absolute_temperature: bool = False) -> float:
    """Convert "value [unit]" to SI, checking the dimension.

    A bare number is taken to be in SI already.  Temperatures given in
    degC are shifted to kelvin when ``absolute_temperature`` is set.
    """
    m = _QUANTITY.match(str(text))
    if not m:
        raise UnitError(f"cannot parse quantity {text!r}")
    value = float(m.group(1))
    unit = m.group(2)
    if unit in ("degC", "°C", "C"):
        if expected != TEMPERATURE:
            raise UnitError(f"unit {unit!r} is a temperature, expected dimension {expected}")
        return value + 273.15 if absolute_temperature else value
    scale, dim = parse_unit(unit)
    if unit and dim != tuple(expected):
        raise UnitError(f"unit {unit!r} has dimension {dim}, expected {tuple(expected)}")
    return value * scale
