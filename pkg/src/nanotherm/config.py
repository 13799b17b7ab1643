"""Scenario configuration files.

Sectioned ``key = value`` text; values carry explicit units which are
converted to SI on load::

    [protocol]
    sar = 2.0 MW/kg
    injection_end = 40 min

Unknown sections or keys are rejected.  Every accepted key has a default;
the resolved configuration can be echoed back with :func:`format_config`.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import units as U
from .errors import ConfigurationError

# kinds: ("q", dim) quantity, ("T",) absolute temperature, ("int",), ("bool",),
# ("choice", options), ("str",), ("path",), ("beta",) heat exchange or "insulated",
# ("list", dim) semicolon separated quantities, ("points",) "x, y; x, y" lengths
SCHEMA: dict[str, dict[str, tuple]] = {
    "scenario": {
        "name": (("str",), "scenario"),
    },
    "mesh": {
        "nx": (("int",), "120"),
        "ny": (("int",), "120"),
        "lx": (("q", U.LENGTH), "0.5 mm"),
        "ly": (("q", U.LENGTH), "0.5 mm"),
        "x0": (("q", U.LENGTH), "0 mm"),
        "y0": (("q", U.LENGTH), "0 mm"),
    },
    "fields": {
        "source": (("choice", ("idealised", "ellipse", "uniform", "file")), "idealised"),
        "file": (("path",), ""),
        "radius": (("q", U.LENGTH), "400 um"),
        "width": (("q", U.LENGTH), "40 um"),
        "centre_x": (("q", U.LENGTH), "0 mm"),
        "centre_y": (("q", U.LENGTH), "0 mm"),
        "semi_axis_a": (("q", U.LENGTH), "4 mm"),
        "semi_axis_b": (("q", U.LENGTH), "2 mm"),
        "eps_v": (("q", U.DIMLESS), "0.028"),
        "p_l_max": (("q", U.PRESSURE), "4 mmHg"),
        "pressure_length": (("q", U.LENGTH), "0 mm"),
        "solid_fraction": (("q", U.DIMLESS), "0.2"),
        "host_if_saturation": (("q", U.DIMLESS), "0.3"),
        "core_if_saturation": (("q", U.DIMLESS), "0"),
        "p_v": (("q", U.PRESSURE), "20 mmHg"),
        "cell_pressure": (("q", U.PRESSURE), "400 Pa"),
    },
    "transport": {
        "mode": (("choice", ("solve", "prescribed")), "solve"),
        "vasculature": (("choice", ("homogenised", "discrete")), "homogenised"),
        "diffusivity": (("q", U.DIFFUSIVITY), "1.2955e-5 mm^2/s"),
        "permeability": (("q", U.AREA), "1e-15 m^2"),
        "viscosity": (("q", U.VISCOSITY), "1e-3 Pa*s"),
        "rho_l": (("q", U.DENSITY), "1000 kg/m^3"),
        "rho_v": (("q", U.DENSITY), "1000 kg/m^3"),
        "hydraulic_conductivity": (("q", U.HYDRAULIC_CONDUCTIVITY), "1e-7 mm^2*s/g"),
        "surface_to_volume": (("q", U.INVERSE_LENGTH), "7000 1/m"),
        "wall_permeability": (("q", U.VELOCITY), "2e-6 mm/s"),
        "reflection": (("q", U.DIMLESS), "0.9"),
        "oncotic_v": (("q", U.PRESSURE), "10 mmHg"),
        "oncotic_l": (("q", U.PRESSURE), "10 mmHg"),
        "lymph_filtration": (("q", U.LYMPH_FILTRATION), "1.04e-6 1/Pa/s"),
        "p_lymph": (("q", U.PRESSURE), "0 Pa"),
        "p_collapse": (("q", U.PRESSURE), "133 Pa"),
        "slab_thickness": (("q", U.LENGTH), "1 mm"),
        "stabilise": (("bool",), "false"),
        "distribution": (("choice", ("uniform", "clusters")), "uniform"),
        "omega_l": (("q", U.DIMLESS), "2e-3"),
        "cluster_count": (("int",), "4"),
        "cluster_width": (("q", U.LENGTH), "0.5 mm"),
        "cluster_background": (("q", U.DIMLESS), "0.5"),
        "cluster_spread": (("q", U.DIMLESS), "0.5"),
    },
    "network": {
        "source": (("choice", ("synthetic", "file")), "synthetic"),
        "file": (("path",), ""),
        "levels": (("int",), "6"),
        "capillary_points": (("int",), "3"),
        "jitter": (("q", U.DIMLESS), "0.25"),
        "r_min": (("q", U.LENGTH), "1.6 um"),
        "r_max": (("q", U.LENGTH), "30 um"),
        "r_mean": (("q", U.LENGTH), "6.98 um"),
        "p_in": (("q", U.PRESSURE), "40 mmHg"),
        "p_out": (("q", U.PRESSURE), "10 mmHg"),
        "collapse_x": (("q", U.LENGTH), "0 mm"),
        "collapse_y": (("q", U.LENGTH), "0 mm"),
        "collapse_radius": (("q", U.LENGTH), "0 mm"),
        "seed": (("int",), "0"),
        "blood_viscosity": (("q", U.VISCOSITY), "3e-3 Pa*s"),
        "blood_diffusivity": (("q", U.DIFFUSIVITY), "1.2955e-5 mm^2/s"),
        "refine": (("q", U.LENGTH), "0 mm"),
    },
    "heat": {
        "perfusion": (("choice", ("none", "lumped", "discrete")), "none"),
        "w": (("q", U.RATE), "0 1/s"),
        "beta_vessel": (("q", U.HEAT_TRANSFER), "2e-5 W/mm^2/K"),
        "robin_left": (("beta",), "2e-5 W/mm^2/K"),
        "robin_right": (("beta",), "2e-5 W/mm^2/K"),
        "robin_bottom": (("beta",), "2e-5 W/mm^2/K"),
        "robin_top": (("beta",), "2e-5 W/mm^2/K"),
        "body_temperature": (("T",), "37 degC"),
        "initial_temperature": (("T",), ""),
        "specific_heat": (("q", U.SPECIFIC_HEAT), "3470 J/kg/K"),
        "conductivity": (("q", U.CONDUCTIVITY), "0.51e-3 W/mm/K"),
        "density": (("q", U.DENSITY), "1000 kg/m^3"),
        "convection": (("bool",), "true"),
    },
    "protocol": {
        "injection_start": (("q", U.TIME), "0 min"),
        "injection_end": (("q", U.TIME), "40 min"),
        "heating_start": (("q", U.TIME), "20 min"),
        "heating_end": (("q", U.TIME), "60 min"),
        "omega_d": (("q", U.DIMLESS), "2e-3"),
        "sar": (("q", U.POWER_PER_MASS), "2 MW/kg"),
    },
    "time": {
        "dt": (("q", U.TIME), "60 s"),
        "steps": (("int",), "60"),
    },
    "output": {
        "probes": (("points",), ""),
        "probe_lines_y": (("list", U.LENGTH), ""),
        "snapshot_times": (("list", U.TIME), ""),
        "snapshot_every": (("int",), "0"),
        "network_snapshots": (("bool",), "true"),
    },
}

_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w-]*)\s*\]$")
_ASSIGN = re.compile(r"^([A-Za-z_][\w-]*)\s*=\s*(.*)$")


@dataclass
class ScenarioConfig:
    """A fully resolved scenario (all values SI).

    ``values`` maps "section.key" to its converted value; ``raw`` keeps the
    textual values so that overrides can be re-validated.
    """

    values: dict
    raw: dict
    source: str = "<memory>"
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, path: str):
        try:
            return self.values[path.lower()]
        except KeyError:
            raise ConfigurationError(f"unknown configuration parameter {path!r}") from None

    def section(self, name: str) -> dict:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def with_overrides(self, overrides: dict) -> "ScenarioConfig":
        raw = copy.deepcopy(self.raw)
        for path, value in overrides.items():
            sec, key = _split_path(path)
            raw.setdefault(sec, {})[key] = (str(value), 0)
        return build_config(raw, self.source, self.base_dir)


def _split_path(path: str):
    parts = path.lower().split(".")
    if len(parts) != 2 or parts[0] not in SCHEMA or parts[1] not in SCHEMA[parts[0]]:
        raise ConfigurationError(f"unknown configuration parameter {path!r}")
    return parts[0], parts[1]


def parse_text(text: str, source: str = "<string>") -> dict:
    """Split config text into {section: {key: (value, line)}} with syntax checks."""
    raw: dict[str, dict[str, tuple[str, int]]] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1).lower()
            if section not in SCHEMA:
                raise ConfigurationError(f"{source}:{lineno}: unknown section [{section}]")
            raw.setdefault(section, {})
            continue
        m = _ASSIGN.match(line)
        if not m:
            raise ConfigurationError(f"{source}:{lineno}: syntax error, expected 'key = value' or '[section]'")
        if section is None:
            raise ConfigurationError(f"{source}:{lineno}: key outside of any section")
        key = m.group(1).lower()
        if key not in SCHEMA[section]:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r} in section [{section}]")
        if key in raw[section]:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[section][key] = (m.group(2).strip(), lineno)
    return raw


def _convert(kind, text, where, base_dir):
    tag = kind[0]
    try:
        if tag == "q":
            return U.parse_quantity(text, kind[1])
        if tag == "T":
            if text == "":
                return None
            return U.parse_quantity(text, U.TEMPERATURE, absolute_temperature=True)
        if tag == "int":
            return int(text)
        if tag == "bool":
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(f"expected a boolean, got {text!r}")
            return low in ("true", "yes", "1", "on")
        if tag == "choice":
            if text.lower() not in kind[1]:
                raise ValueError(f"expected one of {', '.join(kind[1])}, got {text!r}")
            return text.lower()
        if tag == "str":
            return text
        if tag == "path":
            if not text:
                return None
            p = Path(text)
            return p if p.is_absolute() else (base_dir / p)
        if tag == "beta":
            if text.lower() in ("insulated", "none", "symmetry"):
                return None
            return U.parse_quantity(text, U.HEAT_TRANSFER)
        if tag == "list":
            return [U.parse_quantity(t, kind[1]) for t in text.split(";") if t.strip()]
        if tag == "points":
            pts = []
            for item in text.split(";"):
                if not item.strip():
                    continue
                toks = re.split(r"\s*,\s*", item.strip())
                if len(toks) != 2:
                    raise ValueError(f"probe point {item.strip()!r} must be 'x, y'")
                pts.append(tuple(U.parse_quantity(t, U.LENGTH) for t in toks))
            return pts
    except (ValueError, U.UnitError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from None
    raise AssertionError(tag)


def build_config(raw: dict, source: str = "<memory>", base_dir=None) -> ScenarioConfig:
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    values = {}
    for sec, keys in SCHEMA.items():
        given = raw.get(sec, {})
        for key, (kind, default) in keys.items():
            text, lineno = given.get(key, (default, None))
            where = f"{source}:{lineno} [{sec}] {key}" if lineno else f"{source} [{sec}] {key}"
            values[f"{sec}.{key}"] = _convert(kind, text, where, base_dir)
    cfg = ScenarioConfig(values, raw, source, base_dir)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig):
    v = cfg.values
    if v["mesh.nx"] < 1 or v["mesh.ny"] < 1:
        raise ConfigurationError("mesh.nx and mesh.ny must be >= 1")
    if v["time.steps"] < 1 or not v["time.dt"] > 0:
        raise ConfigurationError("time.steps must be >= 1 and time.dt > 0")
    total = v["time.steps"] * v["time.dt"]
    for a, b in (("injection_start", "injection_end"), ("heating_start", "heating_end")):
        t0, t1 = v[f"protocol.{a}"], v[f"protocol.{b}"]
        if not 0 <= t0 <= t1:
            raise ConfigurationError(f"protocol window {a}..{b} must satisfy 0 <= start <= end")
        if t1 > total * (1 + 1e-12):
            raise ConfigurationError(f"protocol.{b} = {t1} s exceeds the simulated time {total} s")
    if not 0 <= v["protocol.omega_d"] <= 1:
        raise ConfigurationError("protocol.omega_d must lie in [0, 1]")
    if v["fields.source"] == "file":
        _require_file(v["fields.file"], "fields.file")
    if v["transport.vasculature"] == "discrete" or v["heat.perfusion"] == "discrete":
        if v["network.source"] == "file":
            _require_file(v["network.file"], "network.file")
    if v["heat.perfusion"] == "discrete" and v["transport.vasculature"] != "discrete" and v["transport.mode"] == "solve":
        raise ConfigurationError("a discrete perfusion sink requires transport.vasculature = discrete")


def _require_file(path, key):
    if path is None:
        raise ConfigurationError(f"{key} is required")
    if not Path(path).is_file():
        raise ConfigurationError(f"{key}: file not found: {path}")


def preset_path(name: str) -> Path | None:
    """Locate a shipped preset by "name", "name.cfg" or "presets/name.cfg"."""
    stem = Path(name).name
    if not stem.endswith(".cfg"):
        stem += ".cfg"
    res = resources.files("nanotherm") / "presets" / stem
    if res.is_file():
        return Path(str(res))
    return None


def list_presets() -> list[str]:
    root = resources.files("nanotherm") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def parse_config(path) -> ScenarioConfig:
    """Load a config file (or shipped preset) and convert it to SI."""
    p = Path(path)
    if not p.is_file():
        alt = preset_path(str(path)) if (len(p.parts) <= 2) else None
        if alt is None:
            raise ConfigurationError(f"configuration file not found: {path}")
        p = alt
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    raw = parse_text(text, str(p))
    return build_config(raw, str(p), p.parent)


def format_config(cfg: ScenarioConfig) -> str:
    """Resolved configuration (SI values) as text, for the run log."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for key in keys:
            val = cfg.values[f"{sec}.{key}"]
            given = key in cfg.raw.get(sec, {})
            lines.append(f"{key} = {val!s}{'' if given else '   # default'}")
    return "\n".join(lines) + "\n"


def parse_value_list(text: str) -> list[str]:
    """Split a sweep value list "0, 0.009 1/s, 0.018" into items."""
    items = [t.strip() for t in re.split(r"[,;]", text)]
    return [t for t in items if t]
