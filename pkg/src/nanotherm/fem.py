"""Vectorised Q1 assembly on a StructuredQuadMesh.

Coefficients are passed at quadrature points with shape (E, 4).  Element
matrices are reduced into CSR through a fixed scatter map, so assembly
order (and hence floating-point summation order) is deterministic.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import GAUSS_POINTS, GAUSS_WEIGHTS, StructuredQuadMesh, shape_eval

N_QP, _DN_REF = shape_eval(GAUSS_POINTS[:, 0], GAUSS_POINTS[:, 1])  # (4 qp, 4 nodes), (4, 4, 2)


def physical_gradients(mesh: StructuredQuadMesh) -> np.ndarray:
    """dN/dx at the quadrature points, shape (Q, 4, 2); identical for every element."""
    scale = np.array([2.0 / mesh.hx, 2.0 / mesh.hy])
    return _DN_REF * scale


def qp_values(mesh: StructuredQuadMesh, nodal) -> np.ndarray:
    return np.asarray(nodal, dtype=float)[mesh.elements] @ N_QP.T


def qp_gradients(mesh: StructuredQuadMesh, nodal) -> np.ndarray:
    """Gradient of the bilinear interpolant at quadrature points, shape (E, Q, 2)."""
    dN = physical_gradients(mesh)
    ue = np.asarray(nodal, dtype=float)[mesh.elements]
    # the derivative weights sum to zero only up to rounding; removing the
    # element offset keeps constant fields exactly gradient-free
    return np.einsum("ea,qak->eqk", ue - ue[:, :1], dN)


def qp_coords(mesh: StructuredQuadMesh) -> np.ndarray:
    return np.einsum("qa,eak->eqk", N_QP, mesh.coords[mesh.elements])


def qp_weights(mesh: StructuredQuadMesh) -> np.ndarray:
    return GAUSS_WEIGHTS * mesh.detJ


def scatter(mesh: StructuredQuadMesh, local: np.ndarray) -> sp.csr_matrix:
    indptr, indices, mapping = mesh.assembly_pattern
    data = np.bincount(mapping, weights=local.ravel(), minlength=indices.size)
    n = mesh.n_nodes
    return sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(n, n))


def _broadcast(mesh, coef):
    coef = np.asarray(coef, dtype=float)
    return np.broadcast_to(coef, (mesh.n_elements, 4))


def mass_matrix(mesh, coef=1.0) -> sp.csr_matrix:
    c = _broadcast(mesh, coef) * qp_weights(mesh)
    local = np.einsum("eq,qa,qb->eab", c, N_QP, N_QP)
    return scatter(mesh, local)


def stiffness_matrix(mesh, coef=1.0, tensor=None) -> sp.csr_matrix:
    """Diffusion matrix for scalar coefficient ``coef``; ``tensor`` (E, Q, 2, 2) adds an anisotropic part."""
    dN = physical_gradients(mesh)
    c = _broadcast(mesh, coef) * qp_weights(mesh)
    local = np.einsum("eq,qak,qbk->eab", c, dN, dN)
    if tensor is not None:
        t = np.asarray(tensor) * qp_weights(mesh)[None, :, None, None]
        local = local + np.einsum("eqkl,qak,qbl->eab", t, dN, dN)
    return scatter(mesh, local)


def advection_matrix(mesh, velocity) -> sp.csr_matrix:
    """Matrix of  int N_a (v . grad N_b),  velocity shape (E, Q, 2)."""
    dN = physical_gradients(mesh)
    v = np.asarray(velocity) * qp_weights(mesh)[None, :, None]
    local = np.einsum("qa,eqk,qbk->eab", N_QP, v, dN)
    return scatter(mesh, local)


def load_vector(mesh, f_qp) -> np.ndarray:
    c = _broadcast(mesh, f_qp) * qp_weights(mesh)
    local = c @ N_QP  # (E, 4)
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def boundary_mass(mesh, side: str, coef: float) -> sp.csr_matrix:
    """Consistent edge mass matrix  int_side coef N_a N_b ds  (exact for linear traces)."""
    edges = mesh.boundary_edges(side)
    h = mesh.edge_length(side)
    m = coef * h / 6.0
    rows = np.concatenate([edges[:, 0], edges[:, 1], edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 0], edges[:, 1], edges[:, 1], edges[:, 0]])
    vals = np.concatenate([np.full(len(edges), 2 * m)] * 2 + [np.full(len(edges), m)] * 2)
    n = mesh.n_nodes
    return sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def boundary_load(mesh, side: str, value: float) -> np.ndarray:
    """int_side value N_a ds for a constant boundary datum."""
    edges = mesh.boundary_edges(side)
    h = mesh.edge_length(side)
    return np.bincount(edges.ravel(), weights=np.full(edges.size, 0.5 * h * value), minlength=mesh.n_nodes)


def line_matrix(mesh, embedding, coef_p, scale: float = 1.0) -> sp.csr_matrix:
    """sum_p scale * w_p * coef_p * N_a(x_p) N_b(x_p) over embedded line points."""
    c = np.asarray(coef_p, dtype=float) * embedding.weight * scale
    nodes = embedding.nodes
    vals = np.einsum("p,pa,pb->pab", c, embedding.N, embedding.N)
    rows = np.repeat(nodes, 4, axis=1).ravel()
    cols = np.tile(nodes, (1, 4)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix(sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)))


def line_load(mesh, embedding, f_p, scale: float = 1.0) -> np.ndarray:
    c = np.asarray(f_p, dtype=float) * embedding.weight * scale
    vals = c[:, None] * embedding.N
    return np.bincount(embedding.nodes.ravel(), weights=vals.ravel(), minlength=mesh.n_nodes)
