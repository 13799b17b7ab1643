"""Multiphase bioheat equation under local thermal equilibrium.

    (c rho)_eff dT/dt + c_l rho_l q.grad(T) - div(kappa_eff grad T) = Q_p - Q_bl

The effective coefficients are volume-fraction-weighted sums over the
phases s (solid), t (tumour cells), h (host cells), l (IF) and v (blood).
The system is solved for the excess temperature T - T_b so that an
unheated state stays at T_b exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem, linsolve
from .errors import ConfigurationError, DataError
from .fields import PhaseFields
from .mesh import SIDES

PHASES = ("s", "t", "h", "l", "v")


def _per_phase(value):
    return {p: float(value) for p in PHASES}


@dataclass
class ThermalParams:
    """Thermal properties in SI units.

    ``robin`` maps each outer side to its heat exchange coefficient
    (W/(m^2 K)); sides mapped to None are insulated.
    """

    cp: dict = field(default_factory=lambda: _per_phase(3470.0))
    rho: dict = field(default_factory=lambda: _per_phase(1000.0))
    kappa: dict = field(default_factory=lambda: _per_phase(0.51))
    sar: float = 2.0e6
    w: float = 0.0
    beta_vessel: float = 20.0
    robin: dict = field(default_factory=lambda: {s: 20.0 for s in SIDES})
    T_b: float = 310.15

    def __post_init__(self):
        for name in ("cp", "rho", "kappa"):
            table = getattr(self, name)
            if isinstance(table, (int, float)):
                table = _per_phase(table)
                setattr(self, name, table)
            missing = set(PHASES) - set(table)
            if missing:
                raise ConfigurationError(f"{name} lacks phase(s) {sorted(missing)}")
            if any(not v > 0 for v in table.values()):
                raise ConfigurationError(f"{name} must be positive for every phase")
        if self.sar < 0:
            raise ConfigurationError("SAR must be >= 0")
        if self.w < 0:
            raise ConfigurationError("perfusion rate w must be >= 0")
        if self.beta_vessel < 0:
            raise ConfigurationError("vessel heat exchange coefficient must be >= 0")
        for side, beta in self.robin.items():
            if side not in SIDES:
                raise ConfigurationError(f"unknown boundary side {side!r}")
            if beta is not None and beta < 0:
                raise ConfigurationError(f"heat exchange coefficient on {side} must be >= 0")
        if not 250.0 <= self.T_b <= 330.0:
            raise ConfigurationError(f"body temperature {self.T_b} K outside 250-330 K")


@dataclass
class ThermalState:
    T: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, n_nodes: int, T0: float):
        return cls(np.full(n_nodes, float(T0)), 0.0)


@dataclass
class EnergyBalance:
    """Terms of the discrete energy balance over one step (W per unit depth)."""

    storage_rate: float = 0.0
    source: float = 0.0
    perfusion: float = 0.0
    boundary: float = 0.0
    convection: float = 0.0

    @property
    def residual(self) -> float:
        return self.storage_rate - (self.source - self.perfusion - self.boundary - self.convection)

    @property
    def relative_residual(self) -> float:
        scale = max(abs(self.storage_rate), abs(self.source), abs(self.perfusion),
                    abs(self.boundary), abs(self.convection))
        return abs(self.residual) / scale if scale > 0 else 0.0


def phase_fractions_at(fields: PhaseFields, mesh=None) -> dict:
    """Phase volume fractions, nodal or (with ``mesh``) at quadrature points."""
    fr = fields.phase_fractions()
    if mesh is None:
        return fr
    return {k: fem.qp_values(mesh, v) for k, v in fr.items()}


def effective_props(fractions: dict, params: ThermalParams, tol: float = 1e-10):
    """((c rho)_eff, kappa_eff) from phase volume fractions.

    Raises DataError when the fractions do not sum to one.
    """
    total = sum(np.asarray(fractions[p], dtype=float) for p in PHASES)
    bad = np.flatnonzero(np.abs(np.atleast_1d(total) - 1.0) > tol)
    if bad.size:
        raise DataError(f"phase volume fractions do not sum to one (index {bad[0]})")
    crho = sum(params.cp[p] * params.rho[p] * np.asarray(fractions[p]) for p in PHASES)
    kappa = sum(params.kappa[p] * np.asarray(fractions[p]) for p in PHASES)
    return crho, kappa


def heat_source(params: ThermalParams, eps_v, eps_Sl, omega_v, omega_l, rho_v=None, rho_l=None,
                heating: bool = True):
    """Volumetric nanoparticle heating, W/m^3; zero outside the heating window."""
    if not heating:
        return np.zeros_like(np.asarray(eps_Sl, dtype=float) * 1.0)
    rv = params.rho["v"] if rho_v is None else rho_v
    rl = params.rho["l"] if rho_l is None else rho_l
    return (rv * np.asarray(eps_v) * np.asarray(omega_v) + rl * np.asarray(eps_Sl) * np.asarray(omega_l)) * params.sar


def heat_source_line(params: ThermalParams, R, omega_vessel, heating: bool = True):
    """Heating per unit vessel length (W/m), scaled with the cross-section."""
    if not heating:
        return np.zeros_like(np.asarray(R, dtype=float))
    return params.rho["v"] * math.pi * np.asarray(R) ** 2 * np.asarray(omega_vessel) * params.sar


def heat_sink_lumped(T, params: ThermalParams):
    return params.rho["v"] * params.cp["v"] * params.w * (np.asarray(T) - params.T_b)


def heat_sink_discrete(T, R, beta, T_b, collapsed=None):
    """Per-length perfusion sink 2 pi R beta (T - T_b), W/m."""
    out = 2.0 * math.pi * np.asarray(R) * beta * (np.asarray(T) - T_b)
    if collapsed is not None:
        out = np.where(collapsed, 0.0, out)
    return out


class HeatOperator:
    """Static matrices of the heat equation.

    ``perfusion`` is "none", "lumped" or "discrete"; the discrete sink needs
    an embedding and per-point radii (zero on collapsed segments).
    ``dirichlet`` maps sides to fixed temperatures and overrides ``robin``.
    """

    def __init__(self, mesh, fields: PhaseFields, params: ThermalParams, *, perfusion: str = "none",
                 velocity=None, embedding=None, line_radius=None, slab_thickness: float = 1e-3,
                 dirichlet: dict | None = None, convection: bool = True):
        if perfusion not in ("none", "lumped", "discrete"):
            raise ConfigurationError(f"unknown perfusion model {perfusion!r}")
        if perfusion == "discrete" and (embedding is None or line_radius is None):
            raise ConfigurationError("discrete perfusion sink needs an embedded network")
        self.mesh = mesh
        self.params = params
        self.perfusion = perfusion
        self.embedding = embedding
        self.H = float(slab_thickness)
        self.dirichlet = dict(dirichlet or {})
        fr = phase_fractions_at(fields, mesh)
        self.crho, self.kappa = effective_props(fr, params)
        self.eps_v = fr["v"]
        self.eps_Sl = fr["l"]
        self.C = fem.mass_matrix(mesh, self.crho)
        self.K = fem.stiffness_matrix(mesh, self.kappa)
        n = mesh.n_nodes
        if convection and velocity is not None:
            self.A = fem.advection_matrix(mesh, params.cp["l"] * params.rho["l"] * np.asarray(velocity))
        else:
            self.A = fem.mass_matrix(mesh, 0.0)
        self.B = fem.mass_matrix(mesh, 0.0)
        for side, beta in params.robin.items():
            if beta and side not in self.dirichlet:
                self.B = self.B + fem.boundary_mass(mesh, side, beta)
        if perfusion == "lumped" and params.w > 0:
            self.P = fem.mass_matrix(mesh, params.rho["v"] * params.cp["v"] * params.w)
        elif perfusion == "discrete":
            coef = 2.0 * math.pi * np.asarray(line_radius) * params.beta_vessel
            self.P = fem.line_matrix(mesh, embedding, coef, 1.0 / self.H)
        else:
            self.P = fem.mass_matrix(mesh, 0.0)
        self.operator = (self.K + self.A + self.B + self.P).tocsr()
        self._fixed = {}
        for side, value in self.dirichlet.items():
            for node in mesh.boundary_nodes(side):
                self._fixed[int(node)] = float(value) - params.T_b
        self._factor_cache: dict[float, linsolve.DirectFactor] = {}
        self._n = n

    def source_vector(self, q_qp=None, line_w_per_m=None, extra=None) -> np.ndarray:
        b = np.zeros(self._n)
        if q_qp is not None:
            b += fem.load_vector(self.mesh, q_qp)
        if line_w_per_m is not None:
            b += fem.line_load(self.mesh, self.embedding, line_w_per_m, 1.0 / self.H)
        if extra is not None:
            b += extra
        return b

    def _system_matrix(self, dt):
        return (self.C / dt + self.operator).tocsr()

    def step(self, state: ThermalState, dt: float, source: np.ndarray, tol: float = 1e-10):
        """Advance by dt with the nodal load vector ``source`` (W per unit depth)."""
        if not dt > 0:
            raise ConfigurationError(f"time step must be positive, got {dt}")
        Tb = self.params.T_b
        th_old = np.asarray(state.T, dtype=float) - Tb
        A = self._system_matrix(dt)
        b = self.C @ th_old / dt + source
        if self._fixed:
            system = linsolve.apply_dirichlet(linsolve.SparseSystem(A, b), self._fixed)
            th, _ = linsolve.solve(system, tol=tol)
        else:
            th = self._solve_cached(A, b, dt, tol)
        balance = None
        if not self._fixed:
            balance = EnergyBalance(
                storage_rate=float(np.sum(self.C @ (th - th_old))) / dt,
                source=float(np.sum(source)),
                perfusion=float(np.sum(self.P @ th)),
                boundary=float(np.sum(self.B @ th)),
                convection=float(np.sum(self.A @ th)),
            )
        return ThermalState(th + Tb, state.t + dt), balance

    def _solve_cached(self, A, b, dt, tol):
        if not np.any(b):
            return np.zeros_like(b)
        if A.shape[0] > linsolve.DIRECT_THRESHOLD:
            x, _ = linsolve.solve((A, b), tol=tol)
            return x
        fac = self._factor_cache.get(dt)
        if fac is None:
            linsolve._check_rows(A)
            fac = linsolve.DirectFactor(A)
            self._factor_cache = {dt: fac}
        x, _ = fac.solve(b, tol)
        return x

    def steady(self, source: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Steady temperature for a constant load (requires some heat loss path)."""
        A = self.operator
        if self._fixed:
            system = linsolve.apply_dirichlet(linsolve.SparseSystem(A, source), self._fixed)
            th, _ = linsolve.solve(system, tol=tol)
        else:
            th, _ = linsolve.solve((A, source), tol=tol)
        return th + self.params.T_b

    def energy(self, T) -> float:
        """Integral of (c rho)_eff (T - T_b), J per unit depth."""
        return float(np.sum(self.C @ (np.asarray(T) - self.params.T_b)))


def advance_heat_step(op: HeatOperator, state: ThermalState, dt: float, source: np.ndarray):
    return op.step(state, dt, source)
