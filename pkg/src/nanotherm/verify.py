"""Manufactured-solution and analytic checks of the assembled operators.

Each case returns a list of ``Check`` rows (case, metric, value, threshold,
pass).  ``run_cases`` runs several cases and writes them as one CSV report.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fem
from .bioheat import HeatOperator, ThermalParams, ThermalState
from .errors import ConfigurationError, VerificationError
from .fields import TransportCoefficients, atomic_write_text, uniform_fields
from .mesh import SIDES, build_mesh
from .transport import TransportOperator, TransportState
from .vasculature import VesselNetwork, embed_network

TAU = 300.0
LENGTH = 1e-2
T_B = 310.15


@dataclass
class Check:
    case: str
    metric: str
    value: float
    lo: float
    hi: float

    @property
    def passed(self) -> bool:
        return bool(self.lo <= self.value <= self.hi)

    @property
    def threshold(self) -> str:
        if self.lo == -math.inf:
            return f"<= {self.hi:g}"
        if self.hi == math.inf:
            return f">= {self.lo:g}"
        return f"[{self.lo:g}, {self.hi:g}]"


def observed_order(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if h.size < 3:
        raise ConfigurationError("convergence study needs at least three levels")
    if np.any(err <= 0) or np.any(np.diff(err) >= 0):
        raise VerificationError(f"errors are not monotonically decreasing: {err.tolist()}")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def _l2_error(mesh, nodal, exact_qp=0.0) -> float:
    e = fem.qp_values(mesh, nodal) - exact_qp
    return float(np.sqrt(np.sum(e**2 * fem.qp_weights(mesh))))


def _spatial_order(make, levels):
    # error at t = 10 tau, where the transient (and its time error) has decayed
    errs = [make(n).run(10 * TAU / 60, 60)[0][-1] for n in levels]
    return observed_order([LENGTH / n for n in levels], errs)


def _temporal_order(case, time_levels):
    """Order in time on one mesh from successive step halvings.

    The spatial error is common to every run on the same mesh, so the
    difference between runs with dt and dt/2 isolates the time error.  The
    norm is the max over the coarse time levels of the L2 difference.
    """
    m0 = time_levels[0]
    runs = []
    for m in time_levels:
        hist = case.run(TAU / m, m)[1]
        stride = m // m0
        runs.append(hist[stride - 1::stride])
    diffs = [max(_l2_error(case.mesh, a - b) for a, b in zip(r1, r2)) for r1, r2 in zip(runs, runs[1:])]
    return observed_order([TAU / m for m in time_levels[:-1]], diffs)


# ----------------------------------------------------------------- heat MMS


def _heat_params(w=0.0):
    return ThermalParams(w=w, robin={s: None for s in SIDES}, T_b=T_B)


class _HeatMMS:
    """T* = T_b + A sin(pi x/L) sin(pi y/L) (1 - exp(-t/tau)) with Dirichlet sides.

    A lumped perfusion term is kept in the operator so that the reaction
    matrix is exercised as well.
    """

    amp = 5.0
    w = 2e-3

    def __init__(self, n):
        self.mesh = build_mesh(n, n, LENGTH, LENGTH)
        self.params = _heat_params(self.w)
        fields = uniform_fields(self.mesh, eps=0.8, S_l=0.3)
        self.op = HeatOperator(self.mesh, fields, self.params, perfusion="lumped",
                               dirichlet={s: T_B for s in SIDES})
        xy = fem.qp_coords(self.mesh)
        self.shape_qp = np.sin(math.pi * xy[..., 0] / LENGTH) * np.sin(math.pi * xy[..., 1] / LENGTH)
        p = self.params
        self.crho = p.cp["s"] * p.rho["s"]
        self.kappa = p.kappa["s"]
        self.h = p.rho["v"] * p.cp["v"] * self.w

    def exact_qp(self, t):
        return self.amp * self.shape_qp * (1.0 - math.exp(-t / TAU))

    def forcing_qp(self, t):
        e = math.exp(-t / TAU)
        lap = 2.0 * (math.pi / LENGTH) ** 2
        return self.amp * self.shape_qp * (self.crho * e / TAU + (self.kappa * lap + self.h) * (1.0 - e))

    def run(self, dt, steps):
        """Advance from T = T_b; returns (L2 errors, T - T_b) after each step."""
        state = ThermalState.initial(self.mesh.n_nodes, T_B)
        errs, hist = [], []
        for k in range(1, steps + 1):
            t = k * dt
            state, _ = self.op.step(state, dt, self.op.source_vector(self.forcing_qp(t)))
            errs.append(_l2_error(self.mesh, state.T - T_B, self.exact_qp(t)))
            hist.append(state.T - T_B)
        return np.array(errs), hist


def mms_heat(levels=(8, 16, 32, 64), time_levels=(20, 40, 80, 160, 320), fine=32):
    """Observed spatial and temporal orders of the heat discretisation.

    Space: L2 error against T* at t = 10 tau (60 steps).  Time: step
    halvings over [0, tau] on a fixed mesh.
    """
    checks = [Check("mms-heat", "spatial_order", _spatial_order(_HeatMMS, levels), 1.9, 2.1)]
    case = _HeatMMS(fine)
    checks.append(Check("mms-heat", "temporal_order", _temporal_order(case, time_levels), 0.9, 1.1))
    # unforced: T stays at T_b
    st, _ = case.op.step(ThermalState.initial(case.mesh.n_nodes, T_B), 1.0, np.zeros(case.mesh.n_nodes))
    checks.append(Check("mms-heat", "zero_source_error_K", float(np.abs(st.T - T_B).max()), 0.0, 1e-12))
    return checks


# ------------------------------------------------------------ transport MMS


class _TransportMMS:
    """omega* = A cos(pi x/L) cos(pi y/L) (1 - exp(-t/tau)).

    The IF pressure is linear, giving a uniform Darcy flux.  The vessel
    mass fraction is held above omega* everywhere so both exchange pathways
    stay active.  All normal derivatives of omega* vanish on the boundary,
    matching the natural condition.
    """

    amp = 1e-3
    omega_v = 1e-2

    def __init__(self, n):
        self.mesh = m = build_mesh(n, n, LENGTH, LENGTH)
        self.coeffs = TransportCoefficients(k_l=1e-13, D=1e-7)
        p_l = 500.0 * (1.0 - 0.5 * m.coords[:, 0] / LENGTH)
        fields = uniform_fields(m, eps=0.75, S_l=0.4, eps_v=0.05, p_v=2666.0).replace(p_l=p_l)
        self.op = TransportOperator(m, fields, self.coeffs, warn_peclet=False)
        xy = fem.qp_coords(m)
        k = math.pi / LENGTH
        cx, cy = np.cos(k * xy[..., 0]), np.cos(k * xy[..., 1])
        sx, sy = np.sin(k * xy[..., 0]), np.sin(k * xy[..., 1])
        self.shape = cx * cy
        self.grad = np.stack([-k * sx * cy, -k * cx * sy], axis=-1)
        self.lap = -2.0 * k * k * cx * cy

    def exact_qp(self, t):
        return self.amp * self.shape * (1.0 - math.exp(-t / TAU))

    def forcing_qp(self, t):
        op, c = self.op, self.coeffs
        e = math.exp(-t / TAU)
        g = 1.0 - e
        rho_eS = c.rho_l * op.epsS
        adv = c.rho_l * np.einsum("eqk,eqk->eq", op.q, self.grad)
        exch = 0.5 * op.F + op.T
        w = self.amp * self.shape * g
        return (self.amp * (rho_eS * self.shape * e / TAU - rho_eS * c.D * self.lap * g + adv * g)
                + exch * (w - self.omega_v))

    def run(self, dt, steps):
        state = TransportState.initial(self.mesh.n_nodes)
        errs, hist = [], []
        for k in range(1, steps + 1):
            t = k * dt
            state, _ = self.op.step(state, dt, self.omega_v, source=fem.load_vector(self.mesh, self.forcing_qp(t)))
            errs.append(_l2_error(self.mesh, state.omega_l, self.exact_qp(t)))
            hist.append(state.omega_l)
        return np.array(errs), hist


def mms_transport(levels=(8, 16, 32, 64), time_levels=(20, 40, 80, 160, 320), fine=32):
    """Spatial and temporal orders of the IF transport discretisation."""
    return [
        Check("mms-transport", "spatial_order", _spatial_order(_TransportMMS, levels), 1.9, 2.1),
        Check("mms-transport", "temporal_order", _temporal_order(_TransportMMS(fine), time_levels), 0.9, 1.1),
    ]


# ------------------------------------------------------------------ Pennes

PENNES_CASES = ((1.12e5, 0.018), (1.12e5, 0.036), (2.24e5, 0.018))


def pennes_analytic(q_p: float, w: float, rho_v: float = 1000.0, cp_v: float = 3470.0) -> float:
    if not w > 0:
        raise ConfigurationError("uniform steady state needs w > 0")
    return q_p / (rho_v * cp_v * w)


def pennes_uniform_steady(q_p: float, w: float, n: int = 8, dt: float = 60.0, steps: int = 200):
    """(simulated, analytic) steady excess temperature on an insulated square.

    The simulation marches backward Euler from T_b until the step change is
    negligible, rather than solving the steady system directly.
    """
    exact = pennes_analytic(q_p, w)
    mesh = build_mesh(n, n, LENGTH, LENGTH)
    params = _heat_params(w)
    op = HeatOperator(mesh, uniform_fields(mesh, eps=0.8, S_l=0.3), params, perfusion="lumped")
    load = op.source_vector(np.full((mesh.n_elements, 4), q_p))
    state = ThermalState.initial(mesh.n_nodes, T_B)
    for _ in range(steps):
        new, _ = op.step(state, dt, load)
        done = np.abs(new.T - state.T).max() <= 1e-12 * max(exact, 1.0)
        state = new
        if done:
            break
    return float(np.mean(state.T - T_B)), exact


def pennes_checks():
    checks = []
    for q_p, w in PENNES_CASES:
        sim, exact = pennes_uniform_steady(q_p, w)
        checks.append(Check("pennes", f"rel_error_Q{q_p:g}_w{w:g}", abs(sim - exact) / exact, 0.0, 1e-3))
    return checks


# ------------------------------------------------------------- line source


def line_source_steady(strength: float = 1.0, n: int = 80, half_width: float = 5e-3,
                       slab_thickness: float = 1e-3):
    """Steady temperature around a short centred segment held in a cold box.

    ``strength`` is the heating per unit vessel length (W/m).  Returns
    (r, theta, slope_exact) along the axis normal to the segment, where
    slope_exact = strength * length / (2 pi kappa H) is the coefficient of
    ln(1/r) in the far field.
    """
    mesh = build_mesh(n, n, 2 * half_width, 2 * half_width, -half_width, -half_width)
    h = mesh.hx
    seg = h  # one element long, centred on a grid node
    net = VesselNetwork([[-0.5 * seg, 0.0], [0.5 * seg, 0.0]], [[0, 1]], [5e-6], [False])
    emb = embed_network(net, mesh)
    params = _heat_params()
    op = HeatOperator(mesh, uniform_fields(mesh, eps=0.8, S_l=0.3), params, embedding=emb,
                      slab_thickness=slab_thickness, dirichlet={s: T_B for s in SIDES})
    load = op.source_vector(line_w_per_m=np.full(emb.weight.size, float(strength)))
    T = op.steady(load)
    on_axis = np.flatnonzero(np.isclose(mesh.coords[:, 0], 0.0) & (mesh.coords[:, 1] > 0))
    r = mesh.coords[on_axis, 1]
    order = np.argsort(r)
    slope = strength * seg / (2.0 * math.pi * params.kappa["s"] * slab_thickness)
    return r[order], T[on_axis][order] - T_B, slope


def line_source_checks():
    r, th, slope = line_source_steady()
    h = r[1] - r[0]
    win = (r > 3 * h) & (r < r.max() / 3)
    x = np.log(1.0 / r[win])
    A, _ = np.polyfit(x, th[win], 1)
    # analytic far field with the exact slope; the offset depends on the box
    fit = slope * x + np.mean(th[win] - slope * x)
    dev = float(np.max(np.abs(th[win] - fit) / np.abs(th[win])))
    # local slope between neighbours stays within the band across the window
    local = np.diff(th[win]) / np.diff(x)
    spread = float(np.max(np.abs(local - slope)) / slope)
    _, th2, _ = line_source_steady(2.0)
    lin = float(np.max(np.abs(th2 - 2.0 * th)) / max(np.abs(th).max(), 1e-300))
    _, th0, _ = line_source_steady(0.0)
    return [
        Check("line-source", "slope_rel_error", abs(A - slope) / slope, 0.0, 0.05),
        Check("line-source", "profile_rel_error", dev, 0.0, 0.05),
        Check("line-source", "local_slope_spread", spread, 0.0, 0.05),
        Check("line-source", "linearity_error", lin, 0.0, 1e-12),
        Check("line-source", "zero_strength_K", float(np.abs(th0).max()), 0.0, 0.0),
    ]


# ------------------------------------------------------------------ driver

CASES = {
    "mms-heat": mms_heat,
    "mms-transport": mms_transport,
    "pennes": pennes_checks,
    "line-source": line_source_checks,
}


def run_cases(names=("all",), report=None, threads: int = 1) -> list[Check]:
    """Run the named cases ("all" expands to every case) and write a CSV report."""
    names = list(CASES) if "all" in names else list(names)
    unknown = [n for n in names if n not in CASES]
    if unknown:
        raise ConfigurationError(f"unknown verification case(s) {unknown}; choose from {sorted(CASES)} or 'all'")
    if threads > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda n: CASES[n](), names))
    else:
        results = [CASES[n]() for n in names]
    checks = [c for group in results for c in group]
    if report is not None:
        write_report(report, checks)
    return checks


def write_report(path, checks):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "metric", "value", "threshold", "pass"])
    for c in checks:
        w.writerow([c.case, c.metric, repr(float(c.value)), c.threshold, "pass" if c.passed else "FAIL"])
    atomic_write_text(path, buf.getvalue())
