"""Treatment simulations: protocol scheduling, staggered time stepping, probes.

Each step advances (1) the vessel network, (2) IF nanoparticle transport
and (3) temperature.  Temperature never feeds back into transport, so the
coupled backward-Euler Jacobian is block lower-triangular and this
staggered order gives the monolithic solution.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fem
from .bioheat import HeatOperator, ThermalParams, ThermalState, heat_source, heat_source_line
from .config import ScenarioConfig, format_config
from .errors import ConfigurationError, DataError, NumericalError
from .fields import (PhaseFields, TransportCoefficients, darcy_velocity, generate_ellipse_tumour,
                     generate_idealised_tumour, load_fields, tumour_indicator, uniform_fields)
from .mesh import SIDES, build_mesh
from .output import write_csv, write_network_snapshot, write_snapshot
from .transport import (LineCoupling, TransportOperator, TransportState, interendothelial_rate,
                        transendothelial_rate)
from .vasculature import (SyntheticNetworkSpec, advance_network_transport, embed_network,
                          generate_synthetic_network, line_coupling_load, line_coupling_matrix,
                          load_network, network_mass, network_values_at_points, refine,
                          solve_network_flow)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Protocol:
    """Injection and heating windows (s), injected mass fraction and SAR."""

    injection: tuple[float, float] = (0.0, 2400.0)
    heating: tuple[float, float] = (1200.0, 3600.0)
    omega_D: float = 2.0e-3
    sar: float = 2.0e6

    def __post_init__(self):
        for name in ("injection", "heating"):
            t0, t1 = getattr(self, name)
            if not 0 <= t0 <= t1:
                raise ConfigurationError(f"{name} window must satisfy 0 <= start <= end")
        if not 0 <= self.omega_D <= 1:
            raise ConfigurationError("injected mass fraction must lie in [0, 1]")
        if self.sar < 0:
            raise ConfigurationError("SAR must be >= 0")

    @staticmethod
    def _inside(window, t0, t1) -> bool:
        # a step belongs to a window when its midpoint does
        mid = 0.5 * (t0 + t1)
        return window[0] <= mid <= window[1]

    def injecting(self, t0: float, t1: float) -> bool:
        return self._inside(self.injection, t0, t1)

    def heating_on(self, t0: float, t1: float) -> bool:
        return self._inside(self.heating, t0, t1)


# ------------------------------------------------------------------ scenario


@dataclass(eq=False)
class Scenario:
    """Model objects built from a configuration."""

    cfg: ScenarioConfig
    mesh: object
    fields: PhaseFields
    coeffs: TransportCoefficients
    thermal: ThermalParams
    protocol: Protocol
    transport: TransportOperator | None
    heat: HeatOperator
    prescribed_omega: np.ndarray | None = None
    network: object = None
    flows: np.ndarray | None = None
    embedding: object = None
    line_R: np.ndarray | None = None
    line_p: np.ndarray | None = None
    T0: float = 310.15

    @property
    def H(self) -> float:
        return self.cfg["transport.slab_thickness"]

    @property
    def discrete(self) -> bool:
        return self.network is not None


def make_fields(cfg: ScenarioConfig, mesh) -> PhaseFields:
    f = cfg.section("fields")
    src = f["source"]
    common = dict(solid_fraction=f["solid_fraction"], host_if_saturation=f["host_if_saturation"],
                  core_if_saturation=f["core_if_saturation"], p_v=f["p_v"], cell_pressure=f["cell_pressure"],
                  p_l_max=f["p_l_max"])
    if src == "idealised":
        return generate_idealised_tumour(mesh, f["radius"], f["width"], (f["centre_x"], f["centre_y"]),
                                         eps_v_host=f["eps_v"], pressure_length=f["pressure_length"] or None,
                                         **common)
    if src == "ellipse":
        return generate_ellipse_tumour(mesh, f["semi_axis_a"], f["semi_axis_b"], (f["centre_x"], f["centre_y"]),
                                       f["width"], **common)
    if src == "uniform":
        return uniform_fields(mesh, eps=1.0 - f["solid_fraction"] - f["eps_v"], S_l=f["host_if_saturation"],
                              eps_v=f["eps_v"], p_v=f["p_v"])
    fields = load_fields(f["file"])
    if fields.n_nodes != mesh.n_nodes:
        raise DataError(f"field file has {fields.n_nodes} nodes, mesh has {mesh.n_nodes}")
    if np.abs(np.column_stack([fields.x, fields.y]) - mesh.coords).max() > 1e-9 * max(mesh.Lx, mesh.Ly):
        raise DataError("field file node coordinates do not match the mesh")
    return fields


def make_coefficients(cfg: ScenarioConfig) -> TransportCoefficients:
    t = cfg.section("transport")
    return TransportCoefficients(
        D=t["diffusivity"], k_l=t["permeability"], mu_l=t["viscosity"], rho_l=t["rho_l"], rho_v=t["rho_v"],
        L_p=t["hydraulic_conductivity"], S_V=t["surface_to_volume"], P_v=t["wall_permeability"],
        sigma=t["reflection"], pi_v=t["oncotic_v"], pi_l=t["oncotic_l"], lymph_filtration=t["lymph_filtration"],
        p_ly=t["p_lymph"], p_coll=t["p_collapse"],
    )


def make_thermal(cfg: ScenarioConfig) -> ThermalParams:
    h = cfg.section("heat")
    robin = {s: h[f"robin_{s}"] for s in SIDES}
    rho = dict.fromkeys("sthlv", h["density"])
    rho["l"] = cfg["transport.rho_l"]
    rho["v"] = cfg["transport.rho_v"]
    return ThermalParams(cp=h["specific_heat"], rho=rho, kappa=h["conductivity"], sar=cfg["protocol.sar"],
                         w=h["w"] if h["perfusion"] == "lumped" else 0.0, beta_vessel=h["beta_vessel"],
                         robin=robin, T_b=h["body_temperature"])


def make_protocol(cfg: ScenarioConfig) -> Protocol:
    p = cfg.section("protocol")
    return Protocol((p["injection_start"], p["injection_end"]), (p["heating_start"], p["heating_end"]),
                    p["omega_d"], p["sar"])


def make_network(cfg: ScenarioConfig, mesh):
    n = cfg.section("network")
    if n["source"] == "file":
        net = load_network(n["file"], mu_b=n["blood_viscosity"])
    else:
        centre = (n["collapse_x"], n["collapse_y"]) if n["collapse_radius"] > 0 else None
        spec = SyntheticNetworkSpec(Lx=mesh.Lx, Ly=mesh.Ly, x0=mesh.x0, y0=mesh.y0, levels=n["levels"],
                                    capillary_points=n["capillary_points"], jitter=n["jitter"],
                                    r_min=n["r_min"], r_max=n["r_max"], r_mean=n["r_mean"], p_in=n["p_in"],
                                    p_out=n["p_out"], collapse_centre=centre,
                                    collapse_radius=n["collapse_radius"], seed=n["seed"])
        net = generate_synthetic_network(spec)
        net.mu_b = n["blood_viscosity"]
    h = n["refine"] or min(mesh.hx, mesh.hy)
    net, _ = refine(net, h)
    return net


def prescribed_omega(cfg: ScenarioConfig, mesh, fields: PhaseFields) -> np.ndarray:
    """Fixed IF mass fraction for heat-only runs.

    "uniform" puts omega_l on the tumour (weighted by the smooth tumour
    indicator); "clusters" redistributes the same integrated particle mass
    into Gaussian clusters on top of a reduced background.
    """
    t = cfg.section("transport")
    f = cfg.section("fields")
    w0 = t["omega_l"]
    ind = _tumour_weight(cfg, mesh)
    base = w0 * ind
    if t["distribution"] == "uniform":
        return base
    cx, cy = f["centre_x"], f["centre_y"]
    a, b = f["semi_axis_a"], f["semi_axis_b"]
    if f["source"] != "ellipse":
        a = b = f["radius"]
    k = t["cluster_count"]
    if k < 1:
        raise ConfigurationError("transport.cluster_count must be >= 1")
    spread = t["cluster_spread"]
    if not 0 <= spread <= 1:
        raise ConfigurationError("transport.cluster_spread must lie in [0, 1]")
    # cluster centres sit on a scaled copy of the tumour outline
    ang = 2.0 * math.pi * (np.arange(k) + 0.5) / k
    centres = np.column_stack([cx + spread * a * np.cos(ang), cy + spread * b * np.sin(ang)])
    sig = t["cluster_width"]
    x, y = mesh.coords[:, 0], mesh.coords[:, 1]
    bump = sum(np.exp(-((x - c[0]) ** 2 + (y - c[1]) ** 2) / (2 * sig**2)) for c in centres)
    bg = t["cluster_background"]
    if not 0 <= bg <= 1:
        raise ConfigurationError("transport.cluster_background must lie in [0, 1]")
    weight = fem.qp_values(mesh, cfg["transport.rho_l"] * fields.eps * fields.S_l)
    target = np.sum(fem.qp_values(mesh, base) * weight)
    shape = ind * bump
    raw = np.sum(fem.qp_values(mesh, shape) * weight)
    if raw <= 0:
        raise ConfigurationError("particle clusters do not overlap the tumour")
    # background keeps a fraction bg of the mass, clusters carry the rest
    return bg * base + (1.0 - bg) * target / raw * shape


def _tumour_weight(cfg, mesh):
    f = cfg.section("fields")
    dx = mesh.coords[:, 0] - f["centre_x"]
    dy = mesh.coords[:, 1] - f["centre_y"]
    if f["source"] == "ellipse":
        a, b = f["semi_axis_a"], f["semi_axis_b"]
        rho = np.sqrt((dx / a) ** 2 + (dy / b) ** 2)
        return tumour_indicator((rho - 1.0) * min(a, b), f["width"])
    return tumour_indicator(np.hypot(dx, dy) - f["radius"], f["width"])


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    m = cfg.section("mesh")
    mesh = build_mesh(m["nx"], m["ny"], m["lx"], m["ly"], m["x0"], m["y0"])
    fields = make_fields(cfg, mesh)
    coeffs = make_coefficients(cfg)
    thermal = make_thermal(cfg)
    protocol = make_protocol(cfg)
    H = cfg["transport.slab_thickness"]
    mode = cfg["transport.vasculature"]
    perf = cfg["heat.perfusion"]
    network = flows = emb = line_R = line_p = None
    if mode == "discrete" or perf == "discrete":
        network = make_network(cfg, mesh)
        _, flows = solve_network_flow(network)
        emb = embed_network(network, mesh)
        line_R = np.where(network.collapsed[emb.seg_id], 0.0, network.radius[emb.seg_id])
        line_p = network_values_at_points(network, emb, network.pressure)
    prescribed = None
    transport = None
    if cfg["transport.mode"] == "prescribed":
        prescribed = prescribed_omega(cfg, mesh, fields)
    else:
        transport = TransportOperator(mesh, fields, coeffs, mode=mode, embedding=emb, slab_thickness=H,
                                      stabilise=cfg["transport.stabilise"])
    vel = darcy_velocity(mesh, fields, coeffs) if cfg["heat.convection"] else None
    heat = HeatOperator(mesh, fields, thermal, perfusion=perf, velocity=vel, embedding=emb, line_radius=line_R,
                        slab_thickness=H)
    T0 = cfg["heat.initial_temperature"] or thermal.T_b
    return Scenario(cfg, mesh, fields, coeffs, thermal, protocol, transport, heat, prescribed, network, flows,
                    emb, line_R, line_p, T0)


# --------------------------------------------------------------------- steps


def _step_network(sc: Scenario, dt, injecting, omega_l):
    """Advance the vessel network with the IF mass fraction lagged by one step."""
    net, emb, c = sc.network, sc.embedding, sc.coeffs
    wl = emb.interpolate(omega_l)
    pl = emb.interpolate(sc.fields.p_l)
    F = interendothelial_rate(c, sc.line_p, pl, R=sc.line_R)
    T = transendothelial_rate(c, R=sc.line_R)
    inlet = sc.protocol.omega_D if injecting else 0.0
    w = net.omega
    act = None
    for _ in range(5):
        wv = network_values_at_points(net, emb, w)
        new_act = (wv - wl) > 0
        if act is not None and np.array_equal(new_act, act):
            break
        act = new_act
        # where the vessel holds less than the IF, its export is capped at F w_v
        exact = act | (F < 0)
        S = line_coupling_matrix(net, emb, np.where(exact, 0.5 * F + T * act, F) / c.rho_v)
        r = line_coupling_load(net, emb, np.where(exact, (0.5 * F - T * act) * wl, 0.0) / c.rho_v)
        w = advance_network_transport(net, sc.flows, dt, inlet, S, r, sc.cfg["network.blood_diffusivity"],
                                      omega_old=net.omega)
    return w


def heat_load(sc: Scenario, heating: bool, omega_l, omega_v: float, net_omega=None) -> np.ndarray:
    mesh = sc.mesh
    op = sc.heat
    q = heat_source(sc.thermal, op.eps_v, op.eps_Sl, omega_v, fem.qp_values(mesh, omega_l), heating=heating)
    line = None
    if heating and net_omega is not None and sc.embedding is not None:
        wv = network_values_at_points(sc.network, sc.embedding, net_omega)
        line = heat_source_line(sc.thermal, sc.line_R, wv)
    return op.source_vector(q, line)


# ------------------------------------------------------------------- results


@dataclass
class RunResult:
    columns: list
    rows: list
    snapshots: list = field(default_factory=list)
    final_T: np.ndarray | None = None
    final_omega_l: np.ndarray | None = None
    history: list | None = None
    status: int = 0
    csv_path: Path | None = None
    elapsed_s: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([r[self.columns.index(name)] for r in self.rows], dtype=float)

    def summary(self) -> dict:
        t = self.column("t_s")
        Tm = self.column("T_mean_K")
        Tx = self.column("T_max_K")
        k = int(np.argmax(Tm))
        out = {"peak_T_mean_K": float(Tm[k]), "t_peak_s": float(t[k]), "peak_T_max_K": float(Tx.max()),
               "final_T_mean_K": float(Tm[-1])}
        for c in self.columns:
            if c.startswith("Tmax_line_"):
                out[f"final_{c}"] = float(self.column(c)[-1])
        return out


def _abort(exc, step, module):
    msg = f"step {step} ({module}): {exc}"
    if isinstance(exc, NumericalError):
        return NumericalError(msg, exc.residual_history)
    try:
        return type(exc)(msg)
    except TypeError:
        return RuntimeError(msg)


def run_simulation(cfg: ScenarioConfig, out_dir=None, *, keep_history: bool = False,
                   write: bool = True) -> RunResult:
    """Run a full scenario; writes CSV and snapshots into ``out_dir`` when given."""
    start = time.perf_counter()
    sc = build_scenario(cfg)
    mesh, H = sc.mesh, sc.H
    name = cfg["scenario.name"]
    out = Path(out_dir) if out_dir is not None else None
    if out is not None and write:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.log").write_text(format_config(cfg))
    probes = cfg["output.probes"]
    lines_y = cfg["output.probe_lines_y"]
    for p in probes:
        if mesh.locate_point(p) is None:
            raise ConfigurationError(f"probe point {p} lies outside the mesh")
    line_pts = [np.column_stack([mesh.coords[: mesh.nx + 1, 0], np.full(mesh.nx + 1, y)]) for y in lines_y]
    for y in lines_y:
        if not mesh.y0 <= y <= mesh.y0 + mesh.Ly:
            raise ConfigurationError(f"probe line y = {y} lies outside the mesh")
    columns = ["t_s", "T_mean_K", "T_max_K", "T_min_K"]
    columns += [f"T_probe_{i}_K" for i in range(len(probes))]
    columns += [f"Tmax_line_{i}_K" for i in range(len(lines_y))]
    columns += ["np_mass_if_kg", "np_mass_vessel_kg", "np_balance_rel", "energy_balance_rel"]
    dt = cfg["time.dt"]
    steps = cfg["time.steps"]
    snap_times = cfg["output.snapshot_times"]
    snap_every = cfg["output.snapshot_every"]
    area_w = mesh.lumped_weights() / mesh.area
    eps_v_int = np.sum(fem.qp_values(mesh, sc.fields.eps_v) * fem.qp_weights(mesh))

    ts = TransportState.initial(mesh.n_nodes)
    omega_l = sc.prescribed_omega if sc.prescribed_omega is not None else ts.omega_l
    thermal = ThermalState.initial(mesh.n_nodes, sc.T0)
    rows, snaps, history = [], [], [] if keep_history else None
    for k in range(1, steps + 1):
        t0, t1 = (k - 1) * dt, k * dt
        injecting = sc.protocol.injecting(t0, t1)
        heating = sc.protocol.heating_on(t0, t1)
        omega_v = sc.protocol.omega_D if (injecting and sc.transport is not None) else 0.0
        np_rel = 0.0
        net_omega = None
        try:
            if sc.discrete and sc.transport is not None:
                sc.network.omega = _step_network(sc, dt, injecting, omega_l)
                net_omega = sc.network.omega
        except Exception as exc:  # noqa: BLE001
            raise _abort(exc, k, "vasculature") from exc
        try:
            if sc.transport is not None:
                line = None
                if sc.discrete:
                    line = LineCoupling(sc.line_R, sc.line_p,
                                        network_values_at_points(sc.network, sc.embedding, sc.network.omega))
                    omega_v = 0.0
                ts, bal = sc.transport.step(ts, dt, omega_v, line)
                omega_l = ts.omega_l
                np_rel = bal.relative_residual
        except Exception as exc:  # noqa: BLE001
            raise _abort(exc, k, "transport") from exc
        try:
            load = heat_load(sc, heating, omega_l, omega_v, net_omega)
            thermal, ebal = sc.heat.step(thermal, dt, load)
        except Exception as exc:  # noqa: BLE001
            raise _abort(exc, k, "bioheat") from exc
        T = thermal.T
        if not np.all(np.isfinite(T)):
            raise NumericalError(f"step {k} (bioheat): non-finite temperature")
        if history is not None:
            history.append((omega_l.copy(), omega_v, None if net_omega is None else net_omega.copy()))
        m_if = H * (sc.transport.mass(omega_l) if sc.transport is not None else 0.0)
        if sc.discrete:
            m_v = network_mass(sc.network, sc.coeffs.rho_v)
        else:
            m_v = H * sc.coeffs.rho_v * eps_v_int * omega_v
        Tb = sc.thermal.T_b
        row = [t1, Tb + float(area_w @ (T - Tb)), float(T.max()), float(T.min())]
        row += [float(v) for v in mesh.interpolate(T, np.array(probes))] if probes else []
        row += [float(mesh.interpolate(T, pts).max()) for pts in line_pts]
        row += [m_if, m_v, np_rel, ebal.relative_residual if ebal is not None else 0.0]
        rows.append(row)
        if out is not None and write and _snapshot_due(k, t1, dt, snap_times, snap_every):
            path = out / f"{name}_step{k:04d}.vtk"
            write_snapshot(mesh, {"T_K": T, "omega_l": omega_l, "S_t": sc.fields.S_t, "p_l_Pa": sc.fields.p_l},
                           path, f"{name} t={t1:g} s")
            snaps.append(path)
            if sc.discrete and cfg["output.network_snapshots"]:
                net = sc.network
                seg_w = 0.5 * (net.omega[net.segments[:, 0]] + net.omega[net.segments[:, 1]])
                npath = out / f"{name}_network_step{k:04d}.vtk"
                write_network_snapshot(net, {"R_m": net.radius, "omega_v": seg_w, "Q_m3s": sc.flows}, npath,
                                       {"p_Pa": net.pressure, "omega_v": net.omega})
                snaps.append(npath)
    result = RunResult(columns, rows, snaps, thermal.T.copy(), np.asarray(omega_l).copy(), history)
    if out is not None and write:
        result.csv_path = out / f"{name}.csv"
        write_csv(result.csv_path, columns, rows)
    result.elapsed_s = time.perf_counter() - start
    log.info("%s: %d steps in %.2f s", name, steps, result.elapsed_s)
    return result


def _snapshot_due(k, t, dt, times, every) -> bool:
    if every and k % every == 0:
        return True
    return any(abs(t - s) <= 1e-6 * dt for s in times)


def replay_heat(cfg: ScenarioConfig, history) -> np.ndarray:
    """Re-run only the heat solve from stored per-step mass fractions.

    Returns the temperature trajectory, shape (steps, n_nodes).
    """
    sc = build_scenario(cfg)
    dt = cfg["time.dt"]
    thermal = ThermalState.initial(sc.mesh.n_nodes, sc.T0)
    out = []
    for k, (omega_l, omega_v, net_omega) in enumerate(history, 1):
        heating = sc.protocol.heating_on((k - 1) * dt, k * dt)
        thermal, _ = sc.heat.step(thermal, dt, heat_load(sc, heating, omega_l, omega_v, net_omega))
        out.append(thermal.T.copy())
    return np.array(out)


def run_sweep(cfg: ScenarioConfig, param: str, values, out_dir=None, workers: int = 1) -> list[dict]:
    """Independent runs over one parameter; one summary row per value, in order."""
    cfg.with_overrides({})  # validates the base
    cfg[param]  # unknown parameter -> ConfigurationError
    subs = [cfg.with_overrides({param: v}) for v in values]

    def one(i):
        sub_out = None if out_dir is None else Path(out_dir) / f"{i:03d}"
        res = run_simulation(subs[i], sub_out)
        row = {"index": i, "param": param, "value": str(values[i]), "value_si": subs[i][param]}
        row.update(res.summary())
        return row

    if workers > 1 and len(subs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(len(subs))))
    else:
        rows = [one(i) for i in range(len(subs))]
    if out_dir is not None and rows:
        cols = list(rows[0].keys())
        write_csv(Path(out_dir) / "sweep_summary.csv", [c for c in cols if c not in ("param", "value")],
                  [[r[c] for c in cols if c not in ("param", "value")] for r in rows])
    return rows
