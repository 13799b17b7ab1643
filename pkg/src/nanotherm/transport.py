"""Nanoparticle transport in the interstitial fluid.

Backward-Euler Galerkin discretisation of

    rho eps S_l dw/dt + rho q.grad(w) - div(rho eps S_l D grad w)
        = transfer - drainage - w * (net fluid gain)

with transvascular transfer either from a homogenised vasculature (volume
terms) or from a discrete network (line terms along embedded centrelines,
divided by the slab thickness H).  The net fluid gain combines the
interendothelial fluid flux and lymphatic drainage with the mass-fraction
factors removed, so drainage of particles cancels against the drag term.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import fem, linsolve
from .errors import ConfigurationError
from .fields import PhaseFields, TransportCoefficients, darcy_velocity

log = logging.getLogger(__name__)

PICARD_SWEEPS = 5


def macaulay(x):
    return np.maximum(x, 0.0)


# ------------------------------------------------------------------ kernels


def interendothelial_rate(coeffs: TransportCoefficients, p_v, p_l, eps_v=None, R=None):
    """Fluid transfer rate without the mass-fraction factor.

    Homogenised (``eps_v`` given): kg/(m^3 s).  Discrete (``R`` given): kg/(m s).
    """
    drive = np.asarray(p_v) - np.asarray(p_l) - coeffs.oncotic
    if R is not None:
        return coeffs.rho_v * 2.0 * math.pi * np.asarray(R) * coeffs.L_p * drive
    return coeffs.rho_v * np.asarray(eps_v) * coeffs.L_p * coeffs.S_V * drive


def transendothelial_rate(coeffs: TransportCoefficients, eps_v=None, R=None):
    if R is not None:
        return coeffs.rho_v * 2.0 * math.pi * np.asarray(R) * coeffs.P_v
    return coeffs.rho_v * np.asarray(eps_v) * coeffs.P_v * coeffs.S_V


def lymph_rate(coeffs: TransportCoefficients, p_l, p_t):
    """Lymphatic fluid drainage rate without the mass-fraction factor, kg/(m^3 s)."""
    return (coeffs.rho_l * coeffs.lymph_filtration * macaulay(np.asarray(p_l) - coeffs.p_ly)
            * macaulay(1.0 - np.asarray(p_t) / coeffs.p_coll))


def transfer_interendothelial(mode: str, coeffs: TransportCoefficients, omega_v, omega_l, p_v, p_l,
                              eps_v=None, R=None):
    """Interendothelial nanoparticle transfer (vessel to IF)."""
    _check_mode(mode, eps_v, R)
    rate = interendothelial_rate(coeffs, p_v, p_l, eps_v if mode == "homogenised" else None,
                                 R if mode == "discrete" else None)
    return rate * 0.5 * (np.asarray(omega_v) + np.asarray(omega_l))


def transfer_transendothelial(mode: str, coeffs: TransportCoefficients, omega_v, omega_l,
                              eps_v=None, R=None):
    """Transendothelial (diffusive) transfer; no back-diffusion into the vessels."""
    _check_mode(mode, eps_v, R)
    rate = transendothelial_rate(coeffs, eps_v if mode == "homogenised" else None,
                                 R if mode == "discrete" else None)
    return rate * macaulay(np.asarray(omega_v) - np.asarray(omega_l))


def lymph_drainage(coeffs: TransportCoefficients, p_l, p_t, omega_l):
    return lymph_rate(coeffs, p_l, p_t) * np.asarray(omega_l)


def _check_mode(mode, eps_v, R):
    if mode == "homogenised":
        if eps_v is None:
            raise ConfigurationError("homogenised transfer needs eps_v")
    elif mode == "discrete":
        if R is None:
            raise ConfigurationError("discrete transfer needs the vessel radius R")
    else:
        raise ConfigurationError(f"unknown vasculature mode {mode!r}")


# ------------------------------------------------------------------- state


@dataclass
class TransportState:
    omega_l: np.ndarray
    omega_v: float = 0.0
    t: float = 0.0

    @classmethod
    def initial(cls, n_nodes: int):
        return cls(np.zeros(n_nodes), 0.0, 0.0)


@dataclass
class MassBalance:
    """Terms of the discrete nanoparticle balance over one step (kg/s per unit depth)."""

    storage_rate: float = 0.0
    transfer_in: float = 0.0
    drainage: float = 0.0
    drag: float = 0.0
    advection: float = 0.0
    picard_sweeps: int = 0

    @property
    def residual(self) -> float:
        return self.storage_rate - (self.transfer_in - self.drainage - self.drag - self.advection)

    @property
    def relative_residual(self) -> float:
        scale = max(abs(self.storage_rate), abs(self.transfer_in), abs(self.drainage),
                    abs(self.drag), abs(self.advection))
        return abs(self.residual) / scale if scale > 0 else 0.0


@dataclass
class LineCoupling:
    """Discrete-vessel data evaluated at the embedded line points."""

    R: np.ndarray            # radius, zero on collapsed segments
    p_vessel: np.ndarray     # blood pressure
    omega_vessel: np.ndarray  # nanoparticle mass fraction in blood


class TransportOperator:
    """Static parts of the IF transport system for one field configuration."""

    def __init__(self, mesh, fields: PhaseFields, coeffs: TransportCoefficients, *,
                 mode: str = "homogenised", embedding=None, slab_thickness: float = 1e-3,
                 stabilise: bool = False, warn_peclet: bool = True):
        if mode not in ("homogenised", "discrete"):
            raise ConfigurationError(f"unknown vasculature mode {mode!r}")
        if mode == "discrete" and embedding is None:
            raise ConfigurationError("discrete transport needs a network embedding")
        if not slab_thickness > 0:
            raise ConfigurationError("slab thickness must be positive")
        self.mesh = mesh
        self.fields = fields
        self.coeffs = coeffs
        self.mode = mode
        self.embedding = embedding
        self.H = float(slab_thickness)
        c = coeffs
        self.epsS = fem.qp_values(mesh, fields.eps * fields.S_l)
        self.q = darcy_velocity(mesh, fields, coeffs)
        self.M = fem.mass_matrix(mesh, c.rho_l * self.epsS)
        tensor = None
        if stabilise:
            tensor = self._streamline_tensor()
        self.K = fem.stiffness_matrix(mesh, c.rho_l * self.epsS * c.D, tensor)
        self.A = fem.advection_matrix(mesh, c.rho_l * self.q)
        self.static = (self.K + self.A).tocsr()
        p_l = fem.qp_values(mesh, fields.p_l)
        self.lymph = lymph_rate(c, p_l, fem.qp_values(mesh, fields.p_t))
        if mode == "homogenised":
            eps_v = fem.qp_values(mesh, fields.eps_v)
            self.F = interendothelial_rate(c, fem.qp_values(mesh, fields.p_v), p_l, eps_v=eps_v)
            self.T = transendothelial_rate(c, eps_v=eps_v)
        else:
            self.F = np.zeros_like(p_l)
            self.T = np.zeros_like(p_l)
        self.peclet = self.max_peclet()
        if warn_peclet and self.peclet > 2.0:
            log.warning("element Peclet number %.3g exceeds 2; Galerkin solution may oscillate", self.peclet)

    def max_peclet(self) -> float:
        h = max(self.mesh.hx, self.mesh.hy)
        speed = np.hypot(self.q[..., 0], self.q[..., 1])
        diff = self.epsS * self.coeffs.D
        with np.errstate(divide="ignore", invalid="ignore"):
            pe = np.where(diff > 0, speed * h / (2.0 * diff), np.where(speed > 0, np.inf, 0.0))
        return float(pe.max())

    def _streamline_tensor(self):
        h = max(self.mesh.hx, self.mesh.hy)
        speed = np.hypot(self.q[..., 0], self.q[..., 1])
        safe = np.where(speed > 0, speed, 1.0)
        qhat = self.q / safe[..., None]
        nu = self.coeffs.rho_l * 0.5 * h * speed
        return nu[..., None, None] * np.einsum("eqk,eql->eqkl", qhat, qhat)

    def mass(self, omega_l) -> float:
        """Nanoparticle mass in the IF per unit depth (kg/m)."""
        return float(np.sum(self.M @ omega_l))

    # ------------------------------------------------------------------ step

    def _line_terms(self, line: LineCoupling, omega_l):
        emb = self.embedding
        c = self.coeffs
        p_l = emb.interpolate(self.fields.p_l)
        F = interendothelial_rate(c, line.p_vessel, p_l, R=line.R)
        T = transendothelial_rate(c, R=line.R)
        wl = emb.interpolate(omega_l)
        act = (line.omega_vessel - wl) > 0
        return F, T, act

    def step(self, state: TransportState, dt: float, omega_v: float = 0.0,
             line: LineCoupling | None = None, tol: float = 1e-10, source=None):
        """Advance one step; returns (new state, MassBalance).

        ``source`` is an optional extra nodal load (kg/(m s) per unit depth),
        booked as transfer into the IF.
        """
        if not dt > 0:
            raise ConfigurationError(f"time step must be positive, got {dt}")
        if self.mode == "discrete" and line is None:
            raise ConfigurationError("discrete transport step needs line coupling data")
        mesh = self.mesh
        w_old = np.asarray(state.omega_l, dtype=float)
        base = (self.M / dt + self.static).tocsr()
        rhs0 = self.M @ w_old / dt
        if source is not None:
            rhs0 = rhs0 + source
        w = w_old.copy()
        sweeps = 0
        for sweeps in range(1, PICARD_SWEEPS + 1):
            wq = fem.qp_values(mesh, w)
            act = (omega_v - wq) > 0
            coef = 0.5 * self.F + self.T * act
            src = (0.5 * self.F + self.T * act) * omega_v
            A = base + fem.mass_matrix(mesh, coef)
            b = rhs0 + fem.load_vector(mesh, src)
            if line is not None:
                F_l, T_l, lact = self._line_terms(line, w)
                A = A + fem.line_matrix(mesh, self.embedding, 0.5 * F_l + T_l * lact, 1.0 / self.H)
                b = b + fem.line_load(mesh, self.embedding, (0.5 * F_l + T_l * lact) * line.omega_vessel,
                                      1.0 / self.H)
            else:
                lact = None
            w, _ = linsolve.solve((A.tocsr(), b), tol=tol)
            wq = fem.qp_values(mesh, w)
            new_act = (omega_v - wq) > 0
            new_lact = None if line is None else (line.omega_vessel - self.embedding.interpolate(w)) > 0
            if np.array_equal(new_act, act) and (line is None or np.array_equal(new_lact, lact)):
                break
        else:
            log.debug("transport Picard iteration hit the sweep limit")
        balance = self._balance(w_old, w, dt, omega_v, act, line, lact)
        if source is not None:
            balance.transfer_in += float(np.sum(source))
        balance.picard_sweeps = sweeps
        return TransportState(w, omega_v, state.t + dt), balance

    def _balance(self, w_old, w, dt, omega_v, act, line, lact):
        mesh = self.mesh
        wts = fem.qp_weights(mesh)
        wq = fem.qp_values(mesh, w)
        transfer = self.F * 0.5 * (omega_v + wq) + self.T * act * (omega_v - wq)
        transfer_in = float(np.sum(transfer * wts))
        drag = float(np.sum(self.F * wq * wts))
        drainage = float(np.sum(self.lymph * wq * wts))
        drag -= drainage  # fluid gain = interendothelial inflow - lymphatic outflow
        if line is not None:
            F_l, T_l, _ = self._line_terms(line, w)
            wl = self.embedding.interpolate(w)
            tr = F_l * 0.5 * (line.omega_vessel + wl) + T_l * lact * (line.omega_vessel - wl)
            transfer_in += float(np.sum(tr * self.embedding.weight)) / self.H
            drag += float(np.sum(F_l * wl * self.embedding.weight)) / self.H
        adv = float(np.sum(self.A @ w))
        storage = (self.mass(w) - self.mass(w_old)) / dt
        return MassBalance(storage, transfer_in, drainage, drag, adv)

    def vessel_exchange(self, line: LineCoupling, omega_l):
        """Transfer per unit length from each line point into the tissue, kg/(m s)."""
        F, T, act = self._line_terms(line, omega_l)
        wl = self.embedding.interpolate(omega_l)
        return F * 0.5 * (line.omega_vessel + wl) + T * act * (line.omega_vessel - wl)


def advance_transport_step(op: TransportOperator, state: TransportState, dt: float,
                           omega_v: float = 0.0, line: LineCoupling | None = None):
    return op.step(state, dt, omega_v, line)


def gaussian_second_moment(mesh, omega, weights=None) -> float:
    """sum w |x - xbar|^2 / sum w, using lumped nodal weights."""
    w = mesh.lumped_weights() if weights is None else weights
    m = w * omega
    tot = m.sum()
    xbar = (m[:, None] * mesh.coords).sum(0) / tot
    d2 = ((mesh.coords - xbar) ** 2).sum(1)
    return float((m * d2).sum() / tot)

