"""Tumour-microenvironment phase fields and transport coefficients.

The phase fields (porosity, saturations, vascular volume fraction and
pressures) are simulation inputs: either generated from smooth analytic
profiles or read from a plain-text node table.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from . import fem
from .errors import ConfigurationError, DataError
from .units import MMHG

FIELD_COLUMNS = ("x", "y", "eps", "S_t", "S_h", "S_l", "eps_v", "p_l", "p_v", "p_t")


@dataclass(frozen=True, eq=False)
class PhaseFields:
    """Nodal phase composition and pressures (SI units)."""

    x: np.ndarray
    y: np.ndarray
    eps: np.ndarray
    S_t: np.ndarray
    S_h: np.ndarray
    S_l: np.ndarray
    eps_v: np.ndarray
    p_l: np.ndarray
    p_v: np.ndarray
    p_t: np.ndarray

    def __post_init__(self):
        for f in dc_fields(self):
            arr = np.array(getattr(self, f.name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, f.name, arr)
        n = {getattr(self, c).shape for c in FIELD_COLUMNS}
        if len(n) != 1:
            raise DataError(f"field arrays have inconsistent shapes {n}")
        self.validate()

    @property
    def n_nodes(self) -> int:
        return self.eps.size

    @property
    def eps_s(self) -> np.ndarray:
        return 1.0 - self.eps - self.eps_v

    def phase_fractions(self) -> dict[str, np.ndarray]:
        """Volume fractions of every phase: solid, tumour cells, host cells, IF, blood."""
        return {
            "s": self.eps_s,
            "t": self.eps * self.S_t,
            "h": self.eps * self.S_h,
            "l": self.eps * self.S_l,
            "v": self.eps_v,
        }

    def validate(self, tol: float = 1e-10):
        for name in FIELD_COLUMNS:
            bad = np.flatnonzero(~np.isfinite(getattr(self, name)))
            if bad.size:
                raise DataError(f"non-finite {name} at node {bad[0]}")
        checks = [
            (np.abs(self.S_t + self.S_h + self.S_l - 1.0) > tol, "saturations S_t+S_h+S_l != 1"),
        ]
        for name in ("eps", "S_t", "S_h", "S_l", "eps_v"):
            arr = getattr(self, name)
            checks.append(((arr < -tol) | (arr > 1.0 + tol), f"{name} outside [0, 1]"))
        es = self.eps_s
        checks.append(((es < -tol) | (es > 1.0 + tol), "solid fraction 1-eps-eps_v outside [0, 1]"))
        for mask, what in checks:
            bad = np.flatnonzero(mask)
            if bad.size:
                raise DataError(f"{what} at node {bad[0]}")

    def as_columns(self) -> dict[str, np.ndarray]:
        return {c: getattr(self, c) for c in FIELD_COLUMNS}

    def replace(self, **changes) -> "PhaseFields":
        cols = self.as_columns()
        cols.update(changes)
        return PhaseFields(**cols)


@dataclass
class TransportCoefficients:
    """Nanoparticle transport coefficients in SI units.

    D, P_v, L_p and the lymphatic filtration coefficient are literature
    values; the remaining defaults are engineering choices.
    """

    D: float = 1.2955e-11          # m^2/s
    k_l: float = 1.0e-15           # m^2
    mu_l: float = 1.0e-3           # Pa s
    rho_l: float = 1000.0          # kg/m^3
    rho_v: float = 1000.0          # kg/m^3
    L_p: float = 1.0e-10           # m^2 s/kg
    S_V: float = 7000.0            # 1/m
    P_v: float = 2.0e-9            # m/s
    sigma: float = 0.9
    pi_v: float = 10 * MMHG        # Pa
    pi_l: float = 10 * MMHG        # Pa
    lymph_filtration: float = 1.04e-6  # 1/(Pa s)
    p_ly: float = 0.0              # Pa
    p_coll: float = 133.0          # Pa

    def __post_init__(self):
        for name in ("D", "k_l", "mu_l", "rho_l", "rho_v", "L_p", "S_V", "P_v",
                     "pi_v", "pi_l", "lymph_filtration"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"transport coefficient {name} must be positive")
        if not 0.0 <= self.sigma <= 1.0:
            raise ConfigurationError("reflection coefficient sigma must lie in [0, 1]")
        if self.p_ly < 0:
            raise ConfigurationError("lymphatic pressure p_ly must be >= 0")
        if self.p_coll == 0:
            raise ConfigurationError("collapsing pressure p_coll must be nonzero")

    @property
    def mobility(self) -> float:
        return self.k_l / self.mu_l

    @property
    def oncotic(self) -> float:
        """sigma * (pi_v - pi_l)."""
        return self.sigma * (self.pi_v - self.pi_l)


def tumour_indicator(dist, width):
    """Smooth step: ~1 for dist << 0 (inside), ~0 for dist >> 0."""
    return 0.5 * (1.0 - np.tanh(np.asarray(dist) / width))


def _compose(mesh, phi, eps_v, p_l, *, solid_fraction, host_if_saturation,
             core_if_saturation, p_v, cell_pressure):
    S_t = phi * (1.0 - core_if_saturation)
    S_l = phi * core_if_saturation + (1.0 - phi) * host_if_saturation
    S_h = (1.0 - phi) * (1.0 - host_if_saturation)
    eps = 1.0 - solid_fraction - eps_v
    p_t = phi * (p_l + cell_pressure)
    n = mesh.n_nodes
    return PhaseFields(
        x=mesh.coords[:, 0], y=mesh.coords[:, 1], eps=eps, S_t=S_t, S_h=S_h, S_l=S_l,
        eps_v=eps_v, p_l=p_l, p_v=np.full(n, float(p_v)), p_t=p_t,
    )


def _pressure_profile(rho, rho_far, p_max):
    g = np.exp(-(rho**2))
    g_far = math.exp(-(rho_far**2))
    return p_max * np.clip((g - g_far) / (1.0 - g_far), 0.0, None)


def _check_common(width, solid_fraction, host_if_saturation, core_if_saturation):
    if not width > 0:
        raise ConfigurationError(f"profile width must be positive, got {width}")
    for name, v in (("solid_fraction", solid_fraction), ("host_if_saturation", host_if_saturation),
                    ("core_if_saturation", core_if_saturation)):
        if not 0.0 <= v <= 1.0:
            raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")


def generate_idealised_tumour(mesh, r_t=400e-6, width=40e-6, centre=(0.0, 0.0), *,
                              eps_v_host=0.028, p_l_max=4 * MMHG, pressure_length=None,
                              solid_fraction=0.2, host_if_saturation=0.3,
                              core_if_saturation=0.0, p_v=20 * MMHG, cell_pressure=400.0):
    """Radially symmetric tumour with a non-perfused core.

    S_t follows a tanh step of the given width at radius ``r_t``; the
    vascular fraction is its complement scaled to ``eps_v_host``.  The IF
    pressure is a Gaussian bump with peak ``p_l_max`` at the centre,
    shifted so it vanishes at the farthest mesh node.
    """
    _check_common(width, solid_fraction, host_if_saturation, core_if_saturation)
    if not 0 < r_t < min(mesh.Lx, mesh.Ly):
        raise ConfigurationError(f"tumour radius {r_t} must be positive and below min(Lx, Ly)")
    if eps_v_host + solid_fraction > 1.0:
        raise ConfigurationError("eps_v_host + solid_fraction exceeds 1")
    r = np.hypot(mesh.coords[:, 0] - centre[0], mesh.coords[:, 1] - centre[1])
    phi = tumour_indicator(r - r_t, width)
    ell = pressure_length or r_t
    p_l = _pressure_profile(r / ell, r.max() / ell, p_l_max)
    return _compose(mesh, phi, eps_v_host * (1.0 - phi), p_l, solid_fraction=solid_fraction,
                    host_if_saturation=host_if_saturation, core_if_saturation=core_if_saturation,
                    p_v=p_v, cell_pressure=cell_pressure)


def generate_ellipse_tumour(mesh, a=4e-3, b=2e-3, centre=None, width=100e-6, *,
                            p_l_max=4 * MMHG, solid_fraction=0.2, host_if_saturation=0.3,
                            core_if_saturation=0.0, p_v=20 * MMHG, cell_pressure=400.0):
    """Elliptical tumour (semi-axes a, b); no homogenised vasculature."""
    _check_common(width, solid_fraction, host_if_saturation, core_if_saturation)
    if not (a > 0 and b > 0):
        raise ConfigurationError("ellipse semi-axes must be positive")
    if centre is None:
        centre = (mesh.x0 + 0.5 * mesh.Lx, mesh.y0 + 0.5 * mesh.Ly)
    dx = mesh.coords[:, 0] - centre[0]
    dy = mesh.coords[:, 1] - centre[1]
    rho = np.sqrt((dx / a) ** 2 + (dy / b) ** 2)
    # distance-like level set scaled by the minor semi-axis
    phi = tumour_indicator((rho - 1.0) * min(a, b), width)
    p_l = _pressure_profile(rho, rho.max(), p_l_max)
    return _compose(mesh, phi, np.zeros(mesh.n_nodes), p_l, solid_fraction=solid_fraction,
                    host_if_saturation=host_if_saturation, core_if_saturation=core_if_saturation,
                    p_v=p_v, cell_pressure=cell_pressure)


def uniform_fields(mesh, *, eps=0.8, S_t=0.0, S_l=0.3, eps_v=0.0, p_l=0.0, p_v=0.0, p_t=0.0):
    n = mesh.n_nodes
    full = lambda v: np.full(n, float(v))  # noqa: E731
    return PhaseFields(x=mesh.coords[:, 0], y=mesh.coords[:, 1], eps=full(eps), S_t=full(S_t),
                       S_h=full(1.0 - S_t - S_l), S_l=full(S_l), eps_v=full(eps_v),
                       p_l=full(p_l), p_v=full(p_v), p_t=full(p_t))


def darcy_velocity(mesh, fields: PhaseFields, coeffs: TransportCoefficients) -> np.ndarray:
    """IF Darcy flux -(k/mu) grad p_l at quadrature points, shape (E, 4, 2)."""
    return -coeffs.mobility * fem.qp_gradients(mesh, fields.p_l)


def atomic_write_text(path, text: str):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_fields(fields: PhaseFields, path):
    cols = fields.as_columns()
    lines = [" ".join(FIELD_COLUMNS)]
    table = np.column_stack([cols[c] for c in FIELD_COLUMNS])
    lines.extend(" ".join(repr(float(v)) for v in row) for row in table)
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_fields(path) -> PhaseFields:
    """Read a field table; invariants are checked and reported by node index."""
    with open(path) as fh:
        header = fh.readline().split()
        missing = [c for c in FIELD_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        try:
            data = np.loadtxt(fh, ndmin=2)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
    if data.shape[1] != len(header):
        raise DataError(f"{path}: expected {len(header)} columns, found {data.shape[1]}")
    cols = {c: data[:, header.index(c)] for c in FIELD_COLUMNS}
    for c, arr in cols.items():
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise DataError(f"{path}: non-finite {c} at node {bad[0]}")
    try:
        return PhaseFields(**cols)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc
