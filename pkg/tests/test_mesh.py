"""Structured Q1 mesh: construction, shape functions, point location."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nanotherm.errors import ConfigurationError
from nanotherm.mesh import GAUSS_POINTS, SIDES, build_mesh, shape_eval


class TestBuildMesh:
    def test_production_grid_counts(self):
        m = build_mesh(120, 120, 0.5e-3, 0.5e-3)
        assert m.n_nodes == 14641
        assert m.n_elements == 14400

    def test_smallest_mesh(self):
        m = build_mesh(1, 1, 1.0, 1.0)
        assert m.n_nodes == 4
        assert m.n_elements == 1

    def test_rectangular_mesh(self):
        m = build_mesh(2, 3, 2.0, 3.0)
        assert m.n_nodes == 12
        assert m.n_elements == 6
        assert m.element_size == pytest.approx((1.0, 1.0))

    @pytest.mark.parametrize("args", [(0, 1, 1.0, 1.0), (1, -2, 1.0, 1.0), (1, 1, 0.0, 1.0), (1, 1, 1.0, -1.0)])
    def test_bad_dimensions(self, args):
        with pytest.raises(ConfigurationError):
            build_mesh(*args)

    def test_counter_clockwise_connectivity(self):
        m = build_mesh(3, 2, 3.0, 2.0, x0=-1.0, y0=5.0)
        xe = m.coords[m.elements]
        # signed shoelace area of every element is +hx*hy
        x, y = xe[..., 0], xe[..., 1]
        area = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
        assert area == pytest.approx(np.full(m.n_elements, 1.0))

    def test_jacobian_positive(self):
        m = build_mesh(4, 5, 2e-3, 1e-3)
        J = m.jacobian_determinants()
        assert np.all(J > 0)
        assert J == pytest.approx(np.full_like(J, m.detJ))

    def test_boundary_sides(self):
        m = build_mesh(3, 2, 3.0, 2.0)
        assert np.all(m.coords[m.boundary_nodes("left"), 0] == 0.0)
        assert np.all(m.coords[m.boundary_nodes("right"), 0] == 3.0)
        assert np.all(m.coords[m.boundary_nodes("bottom"), 1] == 0.0)
        assert np.all(m.coords[m.boundary_nodes("top"), 1] == 2.0)
        for side in SIDES:
            assert m.boundary_edges(side).shape[1] == 2
        with pytest.raises(ValueError):
            m.boundary_nodes("front")

    def test_lumped_weights_sum_to_area(self):
        m = build_mesh(7, 3, 0.7, 0.3)
        assert m.lumped_weights().sum() == pytest.approx(m.area)


class TestShapeFunctions:
    def test_centre(self):
        N, _ = shape_eval(0.0, 0.0)
        assert N == pytest.approx([0.25] * 4)

    def test_corner_interpolation(self):
        assert shape_eval(-1.0, -1.0)[0] == pytest.approx([1, 0, 0, 0])
        assert shape_eval(1.0, -1.0)[0] == pytest.approx([0, 1, 0, 0])
        assert shape_eval(1.0, 1.0)[0] == pytest.approx([0, 0, 1, 0])

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_partition_of_unity(self, xi, eta):
        N, dN = shape_eval(xi, eta)
        assert N.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(N >= -1e-15)
        assert dN.sum(axis=0) == pytest.approx([0.0, 0.0], abs=1e-14)

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_isoparametric_map_is_affine(self, xi, eta):
        m = build_mesh(2, 2, 2.0, 4.0, x0=1.0)
        x = m.isoparametric_map(3, xi, eta)
        assert x == pytest.approx([2.5 + 0.5 * xi, 3.0 + eta], abs=1e-14)

    def test_vectorised(self):
        N, dN = shape_eval(GAUSS_POINTS[:, 0], GAUSS_POINTS[:, 1])
        assert N.shape == (4, 4)
        assert dN.shape == (4, 4, 2)


class TestLocatePoint:
    def test_element_centre(self):
        m = build_mesh(4, 4, 1.0, 1.0)
        elem, local = m.locate_point((0.125, 0.125))
        assert elem == 0
        assert local == pytest.approx([0.0, 0.0])

    def test_shared_edge_tie_break(self):
        m = build_mesh(4, 4, 1.0, 1.0)
        elem, local = m.locate_point((0.25, 0.1))
        assert elem == 0
        assert local[0] == pytest.approx(1.0)
        assert m.locate_point((0.25, 0.25))[0] == 0

    def test_outside(self):
        m = build_mesh(4, 4, 1.0, 1.0)
        assert m.locate_point((1.5, 0.5)) is None
        assert m.locate_point((0.5, -1e-3)) is None
        elem, _ = m.locate_points([[0.5, 0.5], [2.0, 0.5]])
        assert elem[1] == -1

    @settings(max_examples=50)
    @given(st.floats(0, 1), st.floats(0, 2))
    def test_round_trip(self, x, y):
        m = build_mesh(5, 7, 1.0, 2.0)
        elem, local = m.locate_point((x, y))
        assert np.all(np.abs(local) <= 1.0 + 1e-12)
        assert m.isoparametric_map(elem, *local) == pytest.approx([x, y], abs=1e-12)

    @settings(max_examples=50)
    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    def test_interpolation_reproduces_bilinear(self, a, b, c):
        m = build_mesh(3, 4, 1.5, 2.0)
        f = lambda x, y: a + b * x + c * x * y  # noqa: E731
        nodal = f(m.coords[:, 0], m.coords[:, 1])
        pts = np.array([[0.3, 0.7], [1.5, 2.0], [0.0, 1.1]])
        assert m.interpolate(nodal, pts) == pytest.approx(f(pts[:, 0], pts[:, 1]), abs=1e-12)
