"""Q1 assembly: mass, stiffness, advection, boundary and line terms."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from nanotherm import fem
from nanotherm.mesh import build_mesh
from nanotherm.vasculature import VesselNetwork, embed_network

coef4 = st.lists(st.floats(-2, 2), min_size=4, max_size=4)


def _bilinear(c, mesh):
    x, y = mesh.coords[:, 0], mesh.coords[:, 1]
    return c[0] + c[1] * x + c[2] * y + c[3] * x * y


class TestMassMatrix:
    def test_total_is_area(self):
        m = build_mesh(5, 3, 2.0, 1.5)
        M = fem.mass_matrix(m)
        assert M.sum() == pytest.approx(3.0)
        assert abs(M - M.T).max() == 0.0

    @settings(max_examples=30)
    @given(coef4, coef4)
    def test_exact_product_integral(self, a, b):
        # on [-1,1]^2 a single element represents both bilinear fields exactly
        m = build_mesh(1, 1, 2.0, 2.0, -1.0, -1.0)
        u, v = _bilinear(a, m), _bilinear(b, m)
        assert u @ fem.mass_matrix(m) @ v == pytest.approx(oracles.bilinear_product_integral(a, b), abs=1e-12)

    def test_positive_definite(self):
        m = build_mesh(3, 3, 1.0, 1.0)
        assert np.linalg.eigvalsh(fem.mass_matrix(m).toarray()).min() > 0


class TestStiffnessMatrix:
    def test_constants_in_kernel(self):
        m = build_mesh(4, 6, 1.0, 3.0)
        K = fem.stiffness_matrix(m, 2.5)
        assert np.abs(K @ np.ones(m.n_nodes)).max() < 1e-12

    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_linear_energy(self, gx, gy):
        m = build_mesh(3, 5, 2.0, 1.0)
        u = gx * m.coords[:, 0] + gy * m.coords[:, 1]
        assert u @ fem.stiffness_matrix(m) @ u == pytest.approx((gx**2 + gy**2) * 2.0, abs=1e-10)

    def test_symmetric_psd(self):
        m = build_mesh(3, 3, 1.0, 1.0)
        K = fem.stiffness_matrix(m).toarray()
        assert np.allclose(K, K.T)
        assert np.linalg.eigvalsh(K).min() > -1e-12


class TestAdvectionAndLoads:
    def test_advection_of_constant_vanishes(self):
        m = build_mesh(4, 4, 1.0, 1.0)
        v = np.broadcast_to([0.3, -0.2], (m.n_elements, 4, 2))
        A = fem.advection_matrix(m, v)
        assert np.abs(A @ np.ones(m.n_nodes)).max() < 1e-14

    def test_advection_of_linear_field(self):
        # int N_a (v . grad x) = v_x int N_a
        m = build_mesh(4, 4, 1.0, 1.0)
        v = np.broadcast_to([0.3, -0.2], (m.n_elements, 4, 2))
        A = fem.advection_matrix(m, v)
        assert A @ m.coords[:, 0] == pytest.approx(0.3 * m.lumped_weights())

    def test_load_vector_constant(self):
        m = build_mesh(3, 2, 1.0, 1.0)
        assert fem.load_vector(m, 4.0) == pytest.approx(4.0 * m.lumped_weights())

    def test_boundary_terms(self):
        m = build_mesh(3, 2, 3.0, 2.0)
        B = fem.boundary_mass(m, "left", 5.0)
        one = np.ones(m.n_nodes)
        assert one @ B @ one == pytest.approx(5.0 * 2.0)
        assert fem.boundary_load(m, "top", 2.0).sum() == pytest.approx(6.0)


class TestLineTerms:
    def test_line_load_integrates_density(self):
        m = build_mesh(4, 4, 1.0, 1.0)
        net = VesselNetwork([[0.1, 0.1], [0.9, 0.7]], [[0, 1]], [1e-3], [False])
        emb = embed_network(net, m)
        b = fem.line_load(m, emb, np.full(emb.n_points, 2.0), scale=0.5)
        assert b.sum() == pytest.approx(1.0 * net.total_length())

    def test_line_matrix_on_constants(self):
        m = build_mesh(4, 4, 1.0, 1.0)
        net = VesselNetwork([[0.0, 0.5], [1.0, 0.5]], [[0, 1]], [1e-3], [False])
        emb = embed_network(net, m)
        L = fem.line_matrix(m, emb, np.ones(emb.n_points))
        one = np.ones(m.n_nodes)
        assert one @ L @ one == pytest.approx(1.0)
