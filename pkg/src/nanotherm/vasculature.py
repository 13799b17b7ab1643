"""Discrete 1D vessel networks.

Blood flow follows Hagen-Poiseuille in each cylindrical segment with
Kirchhoff balance at the junctions.  Nanoparticles are advected with the
blood (fully upwinded linear elements on the graph) and exchanged with the
tissue along segment centrelines, which are embedded into the 2D mesh as
line-quadrature tables.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import linsolve
from .errors import ConfigurationError, DataError
from .fields import atomic_write_text
from .mesh import LINE_GAUSS, shape_eval

log = logging.getLogger(__name__)

MU_BLOOD = 3.0e-3  # Pa s
BC_KINDS = ("inlet_p", "outlet_p", "inlet_conc")


@dataclass(frozen=True)
class BoundaryCondition:
    node: int
    kind: str
    value: float


@dataclass(eq=False)
class VesselNetwork:
    """Graph of cylindrical segments.

    ``pressure`` and ``omega`` are nodal state arrays (blood pressure and
    nanoparticle mass fraction) that the solvers update in place of copies.
    """

    node_xy: np.ndarray
    segments: np.ndarray
    radius: np.ndarray
    collapsed: np.ndarray
    bcs: list = field(default_factory=list)
    mu_b: float = MU_BLOOD
    pressure: np.ndarray | None = None
    omega: np.ndarray | None = None

    def __post_init__(self):
        self.node_xy = np.asarray(self.node_xy, dtype=float).reshape(-1, 2)
        self.segments = np.asarray(self.segments, dtype=np.int64).reshape(-1, 2)
        self.radius = np.asarray(self.radius, dtype=float).ravel()
        self.collapsed = np.asarray(self.collapsed, dtype=bool).ravel()
        self.bcs = [bc if isinstance(bc, BoundaryCondition) else BoundaryCondition(int(bc[0]), str(bc[1]), float(bc[2]))
                    for bc in self.bcs]
        if self.pressure is None:
            self.pressure = np.zeros(self.n_nodes)
        if self.omega is None:
            self.omega = np.zeros(self.n_nodes)
        self.validate()

    @property
    def n_nodes(self) -> int:
        return len(self.node_xy)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def lengths(self) -> np.ndarray:
        d = self.node_xy[self.segments[:, 1]] - self.node_xy[self.segments[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def areas(self) -> np.ndarray:
        return math.pi * self.radius**2

    @property
    def active(self) -> np.ndarray:
        return ~self.collapsed

    def validate(self):
        n = self.n_nodes
        m = self.n_segments
        if self.radius.size != m or self.collapsed.size != m:
            raise DataError("segment arrays have inconsistent lengths")
        if m and (self.segments.min() < 0 or self.segments.max() >= n):
            bad = int(np.flatnonzero((self.segments < 0).any(1) | (self.segments >= n).any(1))[0])
            raise DataError(f"segment {bad} references a missing node")
        bad = np.flatnonzero(~self.collapsed & ~(self.radius > 0))
        if bad.size:
            raise DataError(f"segment {bad[0]} has non-positive radius but is not collapsed")
        bad = np.flatnonzero(self.lengths <= 0)
        if bad.size:
            raise DataError(f"segment {bad[0]} has zero length")
        if not self.mu_b > 0:
            raise DataError("blood viscosity must be positive")
        for bc in self.bcs:
            if bc.kind not in BC_KINDS:
                raise DataError(f"unknown boundary condition kind {bc.kind!r}")
            if not 0 <= bc.node < n:
                raise DataError(f"boundary condition on missing node {bc.node}")
        om = np.asarray(self.omega)
        bad = np.flatnonzero(~np.isfinite(om) | (om < 0) | (om > 1))
        if bad.size:
            raise DataError(f"nanoparticle mass fraction outside [0, 1] at node {bad[0]}")

    def pressure_bcs(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for bc in self.bcs:
            if bc.kind in ("inlet_p", "outlet_p"):
                if bc.node in out and out[bc.node] != bc.value:
                    raise ConfigurationError(f"conflicting pressure conditions at node {bc.node}")
                out[bc.node] = bc.value
        return out

    def concentration_weights(self) -> dict[int, float]:
        """Relative inlet strength per node (multiplies the injected mass fraction)."""
        w = {bc.node: bc.value for bc in self.bcs if bc.kind == "inlet_conc"}
        if not w:
            w = {bc.node: 1.0 for bc in self.bcs if bc.kind == "inlet_p"}
        return w

    def connects_inlet_to_outlet(self) -> bool:
        inl = [bc.node for bc in self.bcs if bc.kind == "inlet_p"]
        out = {bc.node for bc in self.bcs if bc.kind == "outlet_p"}
        if not inl or not out:
            return False
        seg = self.segments[self.active]
        n = self.n_nodes
        g = sp.coo_matrix((np.ones(len(seg)), (seg[:, 0], seg[:, 1])), shape=(n, n))
        _, labels = connected_components(g, directed=False)
        return bool({labels[i] for i in inl} & {labels[o] for o in out})

    def total_length(self) -> float:
        return float(self.lengths.sum())

    def copy(self) -> "VesselNetwork":
        return VesselNetwork(self.node_xy.copy(), self.segments.copy(), self.radius.copy(),
                             self.collapsed.copy(), list(self.bcs), self.mu_b,
                             self.pressure.copy(), self.omega.copy())


def conductances(network: VesselNetwork) -> np.ndarray:
    """pi R^4 / (8 mu L) per segment; zero for collapsed segments."""
    g = math.pi * network.radius**4 / (8.0 * network.mu_b * network.lengths)
    return np.where(network.collapsed, 0.0, g)


def solve_network_flow(network: VesselNetwork):
    """Nodal pressures and segment flows (positive from node_a to node_b).

    Sub-networks without any pressure condition make the system singular
    and are reported by their node ids.  Nodes touched only by collapsed
    segments carry no flow; their pressure is set to their boundary value
    or zero.
    """
    n = network.n_nodes
    seg = network.segments
    g = conductances(network)
    act = g > 0
    bcs = network.pressure_bcs()
    a, b = seg[act, 0], seg[act, 1]
    ga = g[act]
    L = sp.coo_matrix(
        (np.concatenate([ga, ga, -ga, -ga]), (np.concatenate([a, b, a, b]), np.concatenate([a, b, b, a]))),
        shape=(n, n),
    ).tocsr()
    touched = np.zeros(n, dtype=bool)
    touched[a] = True
    touched[b] = True
    adj = sp.coo_matrix((np.ones(a.size), (a, b)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    bc_labels = {labels[i] for i in bcs}
    for c in range(ncomp):
        members = np.flatnonzero((labels == c) & touched)
        if members.size and c not in bc_labels:
            ids = ", ".join(str(i) for i in members[:8])
            more = " ..." if members.size > 8 else ""
            raise ConfigurationError(
                f"vessel sub-network without pressure condition (nodes {ids}{more}); flow is undetermined"
            )
    fixed = dict(bcs)
    for i in np.flatnonzero(~touched):
        fixed.setdefault(int(i), 0.0)
    if not network.connects_inlet_to_outlet():
        log.warning("no open path from an inlet to an outlet; network flow is zero")
    system = linsolve.apply_dirichlet(linsolve.SparseSystem(L, np.zeros(n)), fixed)
    p, _ = linsolve.solve(system, tol=1e-12, method="direct")
    Q = g * (p[seg[:, 0]] - p[seg[:, 1]])
    net = np.bincount(seg[:, 0], weights=Q, minlength=n) - np.bincount(seg[:, 1], weights=Q, minlength=n)
    interior = np.ones(n, dtype=bool)
    interior[list(fixed)] = False
    qmax = np.abs(Q).max() if Q.size else 0.0
    if interior.any() and np.abs(net[interior]).max() > 1e-10 * max(qmax, 1e-300):
        raise linsolve.NumericalError("Kirchhoff balance violated after network flow solve")
    network.pressure = p
    return p, Q


def kirchhoff_residual(network: VesselNetwork, Q) -> np.ndarray:
    """Net outflow at every node (zero at interior nodes after a flow solve)."""
    seg = network.segments
    n = network.n_nodes
    return np.bincount(seg[:, 0], weights=Q, minlength=n) - np.bincount(seg[:, 1], weights=Q, minlength=n)


def refine(network: VesselNetwork, max_length: float) -> tuple[VesselNetwork, np.ndarray]:
    """Split segments so none exceeds ``max_length``.

    Returns the refined network and, per new segment, the id of the
    original segment it came from.
    """
    if not max_length > 0:
        raise ConfigurationError("refinement length must be positive")
    xy = [network.node_xy]
    segs, parent = [], []
    nxt = network.n_nodes
    lengths = network.lengths
    for s, (a, b) in enumerate(network.segments):
        k = max(1, int(math.ceil(lengths[s] / max_length - 1e-12)))
        if k == 1:
            segs.append((a, b))
            parent.append(s)
            continue
        t = np.arange(1, k)[:, None] / k
        pts = network.node_xy[a] + t * (network.node_xy[b] - network.node_xy[a])
        xy.append(pts)
        chain = [a, *range(nxt, nxt + k - 1), b]
        nxt += k - 1
        segs.extend(zip(chain[:-1], chain[1:]))
        parent.extend([s] * k)
    parent = np.array(parent, dtype=np.int64)
    node_xy = np.vstack(xy)
    pressure = np.zeros(len(node_xy))
    omega = np.zeros(len(node_xy))
    pressure[: network.n_nodes] = network.pressure
    omega[: network.n_nodes] = network.omega
    new = VesselNetwork(node_xy, np.array(segs, dtype=np.int64), network.radius[parent],
                        network.collapsed[parent], list(network.bcs), network.mu_b, pressure, omega)
    return new, parent


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Line-quadrature points of the embedded centrelines.

    ``s`` is the arc length of each point from the segment's first node and
    ``weight`` its quadrature weight (m).  ``N`` and ``nodes`` hold the
    host element's shape values and node ids.
    """

    seg_id: np.ndarray
    s: np.ndarray
    weight: np.ndarray
    xy: np.ndarray
    element: np.ndarray
    local: np.ndarray
    N: np.ndarray
    nodes: np.ndarray
    seg_length: np.ndarray

    @property
    def n_points(self) -> int:
        return self.seg_id.size

    def segment_totals(self, values=None) -> np.ndarray:
        """Integral of per-point ``values`` (default 1) over each segment."""
        w = self.weight if values is None else self.weight * values
        return np.bincount(self.seg_id, weights=w, minlength=self.seg_length.size)

    def line_shape(self) -> np.ndarray:
        """Linear 1D shape values (1 - s/L, s/L) at every point, shape (P, 2)."""
        r = self.s / self.seg_length[self.seg_id]
        return np.column_stack([1.0 - r, r])

    def interpolate(self, nodal) -> np.ndarray:
        return np.einsum("pa,pa->p", self.N, np.asarray(nodal)[self.nodes])


def embed_network(network: VesselNetwork, mesh) -> EmbeddingTable:
    """Embed every segment centreline into the mesh.

    Each segment is cut at grid lines, then each piece is split into equal
    sub-intervals no longer than half the smaller element edge, and 2-point
    Gauss points are placed on every sub-interval.
    """
    tol = 1e-12 * max(mesh.Lx, mesh.Ly)
    xy = network.node_xy
    lo = np.array([mesh.x0, mesh.y0])
    hi = lo + np.array([mesh.Lx, mesh.Ly])
    outside = np.flatnonzero(((xy < lo - tol) | (xy > hi + tol)).any(1))
    if outside.size:
        bad = np.flatnonzero(np.isin(network.segments, outside).any(1))
        sid = int(bad[0]) if bad.size else -1
        raise ConfigurationError(f"segment {sid} has an endpoint outside the mesh domain")
    gx = mesh.x0 + mesh.hx * np.arange(mesh.nx + 1)
    gy = mesh.y0 + mesh.hy * np.arange(mesh.ny + 1)
    hmax = 0.5 * min(mesh.hx, mesh.hy)
    gauss = 0.5 * (LINE_GAUSS + 1.0)
    lengths = network.lengths
    out_seg, out_t0, out_t1 = [], [], []
    for sid, (a, b) in enumerate(network.segments):
        A, B = xy[a], xy[b]
        d = B - A
        cuts = [np.array([0.0, 1.0])]
        for k, grid in ((0, gx), (1, gy)):
            if abs(d[k]) > 0:
                t = (grid - A[k]) / d[k]
                cuts.append(t[(t > 0) & (t < 1)])
        t = np.unique(np.concatenate(cuts))
        t = t[np.concatenate([[True], np.diff(t) > 1e-13])]
        t[-1] = 1.0
        t0, t1 = t[:-1], t[1:]
        k = np.maximum(1, np.ceil((t1 - t0) * lengths[sid] / hmax - 1e-9).astype(int))
        rep0 = np.repeat(t0, k)
        rep_len = np.repeat((t1 - t0) / k, k)
        offs = np.concatenate([np.arange(kk) for kk in k])
        s0 = rep0 + offs * rep_len
        out_seg.append(np.full(s0.size, sid))
        out_t0.append(s0)
        out_t1.append(s0 + rep_len)
    if not out_seg:
        z = np.zeros(0)
        zi = np.zeros(0, dtype=np.int64)
        return EmbeddingTable(zi, z, z, np.zeros((0, 2)), zi, np.zeros((0, 2)), np.zeros((0, 4)),
                              np.zeros((0, 4), dtype=np.int64), lengths)
    seg = np.concatenate(out_seg)
    t0 = np.concatenate(out_t0)
    t1 = np.concatenate(out_t1)
    A = xy[network.segments[seg, 0]]
    d = xy[network.segments[seg, 1]] - A
    # host element from the sub-interval midpoint, robust for pieces on grid lines
    mid = A + 0.5 * (t0 + t1)[:, None] * d
    elem, _ = mesh.locate_points(mid)
    if np.any(elem < 0):
        bad = int(seg[np.flatnonzero(elem < 0)[0]])
        raise ConfigurationError(f"segment {bad} leaves the mesh domain")
    tq = t0[:, None] + (t1 - t0)[:, None] * gauss[None, :]  # (K, 2)
    pts = A[:, None, :] + tq[..., None] * d[:, None, :]
    L = lengths[seg]
    w = np.repeat(0.5 * (t1 - t0) * L, 2)
    seg_p = np.repeat(seg, 2)
    elem_p = np.repeat(elem, 2)
    pts = pts.reshape(-1, 2)
    ex = elem_p % mesh.nx
    ey = elem_p // mesh.nx
    xi = 2.0 * ((pts[:, 0] - mesh.x0) / mesh.hx - ex) - 1.0
    eta = 2.0 * ((pts[:, 1] - mesh.y0) / mesh.hy - ey) - 1.0
    local = np.clip(np.column_stack([xi, eta]), -1.0, 1.0)
    N, _ = shape_eval(local[:, 0], local[:, 1])
    s = tq.ravel() * np.repeat(L, 2)
    return EmbeddingTable(seg_p, s, w, pts, elem_p, local, N, mesh.elements[elem_p], lengths)


def line_coupling_matrix(network: VesselNetwork, emb: EmbeddingTable, coef_p) -> sp.csr_matrix:
    """Consistent 1D matrix  sum_p w c_p phi_i phi_j  over embedded points (network nodes)."""
    phi = emb.line_shape()
    ends = network.segments[emb.seg_id]
    c = np.asarray(coef_p, dtype=float) * emb.weight
    rows = np.concatenate([ends[:, 0], ends[:, 0], ends[:, 1], ends[:, 1]])
    cols = np.concatenate([ends[:, 0], ends[:, 1], ends[:, 0], ends[:, 1]])
    vals = np.concatenate([c * phi[:, 0] * phi[:, 0], c * phi[:, 0] * phi[:, 1],
                           c * phi[:, 1] * phi[:, 0], c * phi[:, 1] * phi[:, 1]])
    n = network.n_nodes
    return sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def line_coupling_load(network: VesselNetwork, emb: EmbeddingTable, f_p) -> np.ndarray:
    phi = emb.line_shape()
    ends = network.segments[emb.seg_id]
    c = np.asarray(f_p, dtype=float) * emb.weight
    n = network.n_nodes
    return (np.bincount(ends[:, 0], weights=c * phi[:, 0], minlength=n)
            + np.bincount(ends[:, 1], weights=c * phi[:, 1], minlength=n))


def network_values_at_points(network: VesselNetwork, emb: EmbeddingTable, nodal) -> np.ndarray:
    phi = emb.line_shape()
    ends = network.segments[emb.seg_id]
    nodal = np.asarray(nodal)
    return phi[:, 0] * nodal[ends[:, 0]] + phi[:, 1] * nodal[ends[:, 1]]


def lumped_lengths(network: VesselNetwork) -> np.ndarray:
    """Half the cross-sectional volume of every adjacent open segment, per node."""
    vol = np.where(network.collapsed, 0.0, network.areas * network.lengths)
    seg = network.segments
    n = network.n_nodes
    return 0.5 * (np.bincount(seg[:, 0], weights=vol, minlength=n) + np.bincount(seg[:, 1], weights=vol, minlength=n))


def inflow_nodes(network: VesselNetwork, Q) -> dict[int, float]:
    """Boundary nodes where blood enters, mapped to their inlet strength."""
    net_out = kirchhoff_residual(network, Q)
    return {i: w for i, w in network.concentration_weights().items() if net_out[i] > 0}


def network_transport_matrix(network: VesselNetwork, Q, D: float = 0.0) -> sp.csr_matrix:
    """Upwind advection plus diffusion operator on the network nodes.

    For a segment carrying flow Q from its upstream node u to its downstream
    node d, the downstream row gets |Q| (w_d - w_u).  Diffusion couples the
    ends with A D / L.
    """
    seg = network.segments
    act = ~network.collapsed
    Q = np.where(act, Q, 0.0)
    up = np.where(Q >= 0, seg[:, 0], seg[:, 1])
    dn = np.where(Q >= 0, seg[:, 1], seg[:, 0])
    aq = np.abs(Q)
    kd = np.where(act, network.areas * D / network.lengths, 0.0)
    a, b = seg[:, 0], seg[:, 1]
    rows = np.concatenate([dn, dn, a, b, a, b])
    cols = np.concatenate([dn, up, a, b, b, a])
    vals = np.concatenate([aq, -aq, kd, kd, -kd, -kd])
    n = network.n_nodes
    return sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def advance_network_transport(network: VesselNetwork, Q, dt: float, inlet_omega: float,
                              sink_matrix=None, sink_load=None, D: float = 0.0,
                              omega_old=None) -> np.ndarray:
    """One backward-Euler step of the 1D nanoparticle balance.

    ``sink_matrix`` (S) and ``sink_load`` (r) describe the transfer to the
    tissue already divided by the blood density, so that the discrete
    equation reads  (M/dt + K + S) w = M/dt w_old - r.  Inflow nodes are held
    at ``inlet_omega`` times their inlet strength; outlets are free.
    """
    if not dt > 0:
        raise ConfigurationError(f"time step must be positive, got {dt}")
    w_old = network.omega if omega_old is None else np.asarray(omega_old, dtype=float)
    m = lumped_lengths(network)
    K = network_transport_matrix(network, Q, D)
    A = (sp.diags(m / dt) + K).tocsr()
    rhs = m / dt * w_old
    if sink_matrix is not None:
        A = (A + sink_matrix).tocsr()
    if sink_load is not None:
        rhs = rhs - sink_load
    fixed = {i: inlet_omega * s for i, s in inflow_nodes(network, Q).items()}
    # nodes with no open segment keep their value
    isolated = np.flatnonzero(m == 0)
    for i in isolated:
        fixed.setdefault(int(i), float(w_old[i]))
    system = linsolve.apply_dirichlet(linsolve.SparseSystem(A, rhs), fixed)
    w, _ = linsolve.solve(system, tol=1e-12)
    return w


def network_mass(network: VesselNetwork, rho_v: float, omega=None) -> float:
    w = network.omega if omega is None else omega
    return float(rho_v * np.dot(lumped_lengths(network), w))


# ---------------------------------------------------------------- file format


def save_network(network: VesselNetwork, path):
    lines = ["NODES"]
    for i, (x, y) in enumerate(network.node_xy):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append("SEGMENTS")
    for i, ((a, b), r, c) in enumerate(zip(network.segments, network.radius, network.collapsed)):
        lines.append(f"{i} {a} {b} {float(r)!r} {int(c)}")
    lines.append("BC")
    for bc in network.bcs:
        lines.append(f"{bc.node} {bc.kind} {float(bc.value)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_network(path, mu_b: float = MU_BLOOD) -> VesselNetwork:
    sections: dict[str, list[tuple[int, list[str]]]] = {"NODES": [], "SEGMENTS": [], "BC": []}
    current = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.upper() in sections:
                current = line.upper()
                continue
            if current is None:
                raise DataError(f"{path}:{lineno}: data before any section header")
            sections[current].append((lineno, line.split()))
    try:
        ids = {}
        xy = []
        for lineno, tok in sections["NODES"]:
            if len(tok) != 3:
                raise DataError(f"{path}:{lineno}: node rows need 'id x y'")
            nid = int(tok[0])
            if nid in ids:
                raise DataError(f"{path}:{lineno}: duplicate node id {nid}")
            ids[nid] = len(xy)
            xy.append((float(tok[1]), float(tok[2])))
        segs, radii, coll = [], [], []
        for lineno, tok in sections["SEGMENTS"]:
            if len(tok) != 5:
                raise DataError(f"{path}:{lineno}: segment rows need 'id node_a node_b radius_m collapsed'")
            a, b = int(tok[1]), int(tok[2])
            if a not in ids or b not in ids:
                raise DataError(f"{path}:{lineno}: segment {tok[0]} references a missing node")
            segs.append((ids[a], ids[b]))
            radii.append(float(tok[3]))
            if tok[4] not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: collapsed flag must be 0 or 1")
            coll.append(tok[4] == "1")
            if not coll[-1] and not radii[-1] > 0:
                raise DataError(f"{path}:{lineno}: segment {tok[0]} has non-positive radius but is not collapsed")
        bcs = []
        for lineno, tok in sections["BC"]:
            if len(tok) != 3 or tok[1] not in BC_KINDS:
                raise DataError(f"{path}:{lineno}: BC rows need 'node kind value' with kind in {BC_KINDS}")
            nid = int(tok[0])
            if nid not in ids:
                raise DataError(f"{path}:{lineno}: BC on missing node {nid}")
            bcs.append(BoundaryCondition(ids[nid], tok[1], float(tok[2])))
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: {exc}") from exc
    if not xy or not segs:
        raise DataError(f"{path}: network needs at least one node and one segment")
    return VesselNetwork(np.array(xy), np.array(segs), np.array(radii), np.array(coll), bcs, mu_b)


# ---------------------------------------------------------- synthetic networks


def power_law_exponent(r_min: float, r_max: float, mean: float) -> float:
    """Exponent a of p(R) ~ R^-a on [r_min, r_max] whose mean equals ``mean``."""
    from scipy.optimize import brentq

    def mean_of(a):
        if abs(a - 1.0) < 1e-9:
            return (r_max - r_min) / math.log(r_max / r_min)
        if abs(a - 2.0) < 1e-9:
            return math.log(r_max / r_min) / (1.0 / r_min - 1.0 / r_max)
        num = (r_max ** (2 - a) - r_min ** (2 - a)) / (2 - a)
        den = (r_max ** (1 - a) - r_min ** (1 - a)) / (1 - a)
        return num / den

    if not r_min < mean < r_max:
        raise ConfigurationError("target mean radius must lie strictly inside the radius range")
    return brentq(lambda a: mean_of(a) - mean, -20.0, 20.0, xtol=1e-14)


def power_law_quantiles(n: int, r_min: float, r_max: float, a: float) -> np.ndarray:
    """Deterministic midpoint quantiles of the truncated power law, descending."""
    u = (np.arange(n) + 0.5) / n
    if abs(a - 1.0) < 1e-12:
        r = r_min * (r_max / r_min) ** u
    else:
        e = 1.0 - a
        r = (r_min**e + u * (r_max**e - r_min**e)) ** (1.0 / e)
    return np.sort(r)[::-1]


@dataclass
class SyntheticNetworkSpec:
    """Parameters of the arterio-venous test network generator."""

    Lx: float = 2.7e-3
    Ly: float = 3.5e-3
    x0: float = 0.0
    y0: float = 0.0
    levels: int = 6
    capillary_points: int = 3
    jitter: float = 0.25
    r_min: float = 1.6e-6
    r_max: float = 30e-6
    r_mean: float = 6.98e-6
    p_in: float = 40 * 133.322387415
    p_out: float = 10 * 133.322387415
    collapse_centre: tuple | None = None
    collapse_radius: float = 0.0
    seed: int = 0


def _tree(root, region, levels, horizontal_first=True):
    """Binary tree filling ``region`` by recursive bisection; returns nodes, edges, leaves."""
    nodes = [np.asarray(root, dtype=float)]
    edges = []
    leaves = []
    queue = deque([(0, region, 0, horizontal_first)])
    while queue:
        pid, (xa, xb, ya, yb), depth, split_y = queue.popleft()
        if depth == levels:
            leaves.append((pid, (xa, xb, ya, yb)))
            continue
        if split_y:
            halves = [(xa, xb, ya, 0.5 * (ya + yb)), (xa, xb, 0.5 * (ya + yb), yb)]
        else:
            halves = [(xa, 0.5 * (xa + xb), ya, yb), (0.5 * (xa + xb), xb, ya, yb)]
        for h in halves:
            c = np.array([0.5 * (h[0] + h[1]), 0.5 * (h[2] + h[3])])
            nodes.append(c)
            edges.append((pid, len(nodes) - 1))
            queue.append((len(nodes) - 1, h, depth + 1, not split_y))
    return nodes, edges, leaves


def generate_synthetic_network(spec: SyntheticNetworkSpec = SyntheticNetworkSpec()) -> VesselNetwork:
    """Arteriolar tree entering from the left edge, venular tree leaving at the
    right edge, joined by meandering capillaries.

    Radii follow a truncated power law on [r_min, r_max] fitted to the
    requested mean; they are assigned in descending order along a
    breadth-first traversal from the inlet, so feeding vessels are the
    widest and capillaries the thinnest.  Segments whose midpoint falls
    inside the collapse disc are marked collapsed.
    """
    rng = np.random.default_rng(spec.seed)
    X0, Y0, Lx, Ly = spec.x0, spec.y0, spec.Lx, spec.Ly
    region = (X0, X0 + Lx, Y0, Y0 + Ly)
    a_nodes, a_edges, a_leaves = _tree((X0, Y0 + 0.5 * Ly), region, spec.levels)
    v_nodes, v_edges, v_leaves = _tree((X0 + Lx, Y0 + 0.4 * Ly), region, spec.levels)
    # offset the leaf positions of both trees so they do not coincide
    cell_w = Lx / 2 ** ((spec.levels + 1) // 2)
    cell_h = Ly / 2 ** (spec.levels // 2)
    for pid, _ in a_leaves:
        a_nodes[pid] = a_nodes[pid] + np.array([-0.25 * cell_w, -0.2 * cell_h])
    for pid, _ in v_leaves:
        v_nodes[pid] = v_nodes[pid] + np.array([0.25 * cell_w, 0.2 * cell_h])
    na = len(a_nodes)
    nodes = a_nodes + v_nodes
    edges = list(a_edges) + [(i + na, j + na) for i, j in v_edges]
    # capillaries: each arteriolar leaf drains into the venular leaf of its own
    # cell and of the next cell along x and y
    v_by_cell = {tuple(np.round(r, 12)): pid + na for pid, r in v_leaves}
    cells = sorted(v_by_cell)
    xs = sorted({c[0] for c in cells})
    ys = sorted({c[2] for c in cells})
    lookup = {(xs.index(c[0]), ys.index(c[2])): v_by_cell[c] for c in cells}
    caps = []
    for pid, r in a_leaves:
        key = tuple(np.round(r, 12))
        ix, iy = xs.index(key[0]), ys.index(key[2])
        for dx, dy in ((0, 0), (1, 0), (0, 1)):
            tgt = lookup.get((ix + dx, iy + dy))
            if tgt is not None:
                caps.append((pid, tgt))
    # meandering capillaries: intermediate points with transverse jitter
    cap_edges = []
    for s, t in caps:
        A, B = nodes[s], nodes[t]
        prev = s
        k = spec.capillary_points
        d = B - A
        nrm = np.array([-d[1], d[0]]) / max(np.hypot(*d), 1e-300)
        for j in range(1, k + 1):
            f = j / (k + 1)
            off = spec.jitter * np.hypot(*d) * (rng.random() - 0.5)
            P = A + f * d + off * nrm
            P = np.clip(P, [X0, Y0], [X0 + Lx, Y0 + Ly])
            nodes.append(P)
            cap_edges.append((prev, len(nodes) - 1))
            prev = len(nodes) - 1
        cap_edges.append((prev, t))
    edges = edges + cap_edges
    node_xy = np.array(nodes)
    segs = np.array(edges, dtype=np.int64)
    # radius ranking: breadth-first distance from the inlet over the arteriolar
    # tree, then from the outlet over the venular tree, capillaries last
    order = _bfs_rank(segs, len(a_edges), len(v_edges), na)
    a = power_law_exponent(spec.r_min, spec.r_max, spec.r_mean)
    radii_sorted = power_law_quantiles(len(segs), spec.r_min, spec.r_max, a)
    radius = np.empty(len(segs))
    radius[order] = radii_sorted
    collapsed = np.zeros(len(segs), dtype=bool)
    if spec.collapse_centre is not None and spec.collapse_radius > 0:
        mid = 0.5 * (node_xy[segs[:, 0]] + node_xy[segs[:, 1]])
        collapsed = np.hypot(*(mid - np.asarray(spec.collapse_centre)).T) < spec.collapse_radius
    bcs = [BoundaryCondition(0, "inlet_p", spec.p_in), BoundaryCondition(na, "outlet_p", spec.p_out),
           BoundaryCondition(0, "inlet_conc", 1.0)]
    net = VesselNetwork(node_xy, segs, radius, collapsed, bcs)
    return _prune_unfed(net)


def _bfs_rank(segs, n_art, n_ven, na):
    """Segment ordering: arteriolar and venular trees interleaved by depth, capillaries last."""
    def depth_order(start, stop, root):
        sub = segs[start:stop]
        depth = {root: 0}
        for a, b in sub:  # tree edges are emitted breadth-first
            depth[b] = depth[a] + 1
        return [(depth[a], start + i) for i, (a, b) in enumerate(sub)]

    ranked = sorted(depth_order(0, n_art, 0) + depth_order(n_art, n_art + n_ven, na))
    tree = [i for _, i in ranked]
    caps = list(range(n_art + n_ven, len(segs)))
    return np.array(tree + caps, dtype=np.int64)


def _prune_unfed(net: VesselNetwork) -> VesselNetwork:
    """Collapse open segments cut off from every pressure boundary."""
    seg = net.segments
    act = net.active
    n = net.n_nodes
    adj = sp.coo_matrix((np.ones(act.sum()), (seg[act, 0], seg[act, 1])), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    fed = {labels[b.node] for b in net.bcs if b.kind in ("inlet_p", "outlet_p")}
    cut = act & ~np.isin(labels[seg[:, 0]], list(fed))
    if cut.any():
        net.collapsed = net.collapsed | cut
    return net
