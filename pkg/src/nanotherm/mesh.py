"""Structured quadrilateral mesh with bilinear (Q1) elements.

Nodes are numbered lexicographically with x running fastest
(node = j*(nx+1) + i); elements likewise (element = j*nx + i).  Element
connectivity is counter-clockwise starting at the lower-left corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError

# reference corner coordinates, counter-clockwise
CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

_G = 1.0 / math.sqrt(3.0)
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
GAUSS_WEIGHTS = np.ones(4)
LINE_GAUSS = np.array([-_G, _G])
LINE_WEIGHTS = np.ones(2)

SIDES = ("left", "right", "bottom", "top")


def shape_eval(xi, eta):
    """Bilinear shape functions and their reference derivatives.

    Returns ``N`` with shape (4,) and ``dN`` with shape (4, 2) holding
    (dN/dxi, dN/deta).  Vectorised inputs give leading batch dimensions.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    cx = CORNERS[:, 0]
    cy = CORNERS[:, 1]
    a = 1.0 + np.multiply.outer(xi, cx)
    b = 1.0 + np.multiply.outer(eta, cy)
    N = 0.25 * a * b
    dN = np.stack([0.25 * cx * b, 0.25 * cy * a], axis=-1)
    return N, dN


@dataclass(frozen=True, eq=False)
class StructuredQuadMesh:
    nx: int
    ny: int
    Lx: float
    Ly: float
    x0: float = 0.0
    y0: float = 0.0
    coords: np.ndarray = field(init=False, repr=False)
    elements: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise ConfigurationError(f"mesh needs nx, ny >= 1, got ({self.nx}, {self.ny})")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ConfigurationError(f"mesh extents must be positive, got ({self.Lx}, {self.Ly})")
        xs = self.x0 + self.Lx * np.arange(self.nx + 1) / self.nx
        ys = self.y0 + self.Ly * np.arange(self.ny + 1) / self.ny
        X, Y = np.meshgrid(xs, ys)
        coords = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        n0 = (j * (self.nx + 1) + i).ravel()
        elements = np.column_stack([n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1])
        coords.setflags(write=False)
        elements.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "elements", elements)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def element_size(self) -> tuple[float, float]:
        return (self.hx, self.hy)

    @property
    def detJ(self) -> float:
        # affine map on a uniform grid: constant Jacobian
        return 0.25 * self.hx * self.hy

    def jacobian_determinants(self) -> np.ndarray:
        """detJ at every (element, quadrature point), computed from node coordinates."""
        _, dN = shape_eval(GAUSS_POINTS[:, 0], GAUSS_POINTS[:, 1])
        xe = self.coords[self.elements]  # (E, 4, 2)
        Jxi = np.einsum("qa,eak->eqk", dN[:, :, 0], xe)
        Jeta = np.einsum("qa,eak->eqk", dN[:, :, 1], xe)
        return Jxi[..., 0] * Jeta[..., 1] - Jxi[..., 1] * Jeta[..., 0]

    def boundary_nodes(self, side: str) -> np.ndarray:
        nx, ny = self.nx, self.ny
        if side == "left":
            return np.arange(ny + 1) * (nx + 1)
        if side == "right":
            return np.arange(ny + 1) * (nx + 1) + nx
        if side == "bottom":
            return np.arange(nx + 1)
        if side == "top":
            return ny * (nx + 1) + np.arange(nx + 1)
        raise ValueError(f"unknown side {side!r}")

    def boundary_edges(self, side: str) -> np.ndarray:
        """Consecutive node pairs along a side, shape (n_edges, 2)."""
        nodes = self.boundary_nodes(side)
        return np.column_stack([nodes[:-1], nodes[1:]])

    def edge_length(self, side: str) -> float:
        return self.hy if side in ("left", "right") else self.hx

    def isoparametric_map(self, element: int, xi, eta) -> np.ndarray:
        N, _ = shape_eval(xi, eta)
        return N @ self.coords[self.elements[element]]

    def locate_point(self, x) -> tuple[int, np.ndarray] | None:
        """Host element and local coordinates of a physical point.

        Points on shared edges or corners resolve to the lowest element id.
        Returns None when the point lies outside the domain.
        """
        px, py = float(x[0]), float(x[1])
        tol = 1e-12 * max(self.Lx, self.Ly)
        if not (self.x0 - tol <= px <= self.x0 + self.Lx + tol):
            return None
        if not (self.y0 - tol <= py <= self.y0 + self.Ly + tol):
            return None
        sx = min(max((px - self.x0) / self.hx, 0.0), float(self.nx))
        sy = min(max((py - self.y0) / self.hy, 0.0), float(self.ny))
        i = max(math.ceil(sx) - 1, 0)
        j = max(math.ceil(sy) - 1, 0)
        local = np.array([2.0 * (sx - i) - 1.0, 2.0 * (sy - j) - 1.0])
        return j * self.nx + i, local

    def locate_points(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised locate_point; element id is -1 for points outside."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        tol = 1e-12 * max(self.Lx, self.Ly)
        inside = (
            (pts[:, 0] >= self.x0 - tol) & (pts[:, 0] <= self.x0 + self.Lx + tol)
            & (pts[:, 1] >= self.y0 - tol) & (pts[:, 1] <= self.y0 + self.Ly + tol)
        )
        sx = np.clip((pts[:, 0] - self.x0) / self.hx, 0.0, self.nx)
        sy = np.clip((pts[:, 1] - self.y0) / self.hy, 0.0, self.ny)
        i = np.maximum(np.ceil(sx).astype(int) - 1, 0)
        j = np.maximum(np.ceil(sy).astype(int) - 1, 0)
        elem = np.where(inside, j * self.nx + i, -1)
        local = np.column_stack([2.0 * (sx - i) - 1.0, 2.0 * (sy - j) - 1.0])
        return elem, local

    def interpolate(self, nodal, pts) -> np.ndarray:
        """Bilinear interpolation of a nodal field at physical points."""
        elem, local = self.locate_points(pts)
        if np.any(elem < 0):
            raise ValueError("interpolation point outside the mesh")
        N, _ = shape_eval(local[:, 0], local[:, 1])
        return np.einsum("pa,pa->p", N, np.asarray(nodal)[self.elements[elem]])

    def lumped_weights(self) -> np.ndarray:
        """Integral of each shape function over the domain."""
        w = np.zeros(self.n_nodes)
        np.add.at(w, self.elements.ravel(), 0.25 * self.hx * self.hy)
        return w

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @cached_property
    def assembly_pattern(self):
        """CSR pattern plus the scatter map from (element, a, b) into CSR data."""
        E = self.n_elements
        rows = np.repeat(self.elements, 4, axis=1).ravel()
        cols = np.tile(self.elements, (1, 4)).ravel()
        n = self.n_nodes
        key = rows.astype(np.int64) * n + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        urows = uniq // n
        indices = (uniq % n).astype(np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, urows + 1, 1)
        indptr = np.cumsum(indptr)
        assert inverse.size == E * 16
        return indptr, indices, inverse.ravel()


def build_mesh(nx: int, ny: int, Lx: float, Ly: float, x0: float = 0.0, y0: float = 0.0):
    return StructuredQuadMesh(int(nx), int(ny), float(Lx), float(Ly), float(x0), float(y0))
