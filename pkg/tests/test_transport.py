"""Nanoparticle transfer kernels and the IF transport operator."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from nanotherm.errors import ConfigurationError
from nanotherm.fields import TransportCoefficients, generate_idealised_tumour, uniform_fields
from nanotherm.mesh import build_mesh
from nanotherm.transport import (
    LineCoupling,
    TransportOperator,
    TransportState,
    gaussian_second_moment,
    interendothelial_rate,
    lymph_drainage,
    macaulay,
    transfer_interendothelial,
    transfer_transendothelial,
)
from nanotherm.vasculature import VesselNetwork, embed_network

CO = TransportCoefficients()


class TestMacaulay:
    @given(st.floats(-1e6, 1e6))
    def test_positive_part(self, x):
        y = macaulay(x)
        assert y >= 0
        assert y == (x if x > 0 else 0.0)


class TestInterendothelial:
    def test_zero_driving_pressure(self):
        assert transfer_interendothelial("homogenised", CO, 1e-3, 1e-3, 500.0, 500.0, eps_v=0.028) == 0.0

    def test_homogenised_value(self):
        v = transfer_interendothelial("homogenised", CO, 1e-3, 1e-3, 100.0, 0.0, eps_v=0.028)
        assert v == pytest.approx(oracles.INTERENDO_HOMOG, rel=1e-12)

    def test_discrete_value(self):
        v = transfer_interendothelial("discrete", CO, 1e-3, 1e-3, 100.0, 0.0, R=10e-6)
        assert v == pytest.approx(oracles.INTERENDO_DISCRETE, rel=1e-12)

    def test_oncotic_pressure_reduces_drive(self):
        co = TransportCoefficients(sigma=1.0, pi_v=150.0, pi_l=50.0)
        assert interendothelial_rate(co, 100.0, 0.0, eps_v=0.028) == pytest.approx(0.0, abs=1e-20)

    def test_mode_errors(self):
        with pytest.raises(ConfigurationError):
            transfer_interendothelial("homogenised", CO, 1e-3, 0.0, 100.0, 0.0)
        with pytest.raises(ConfigurationError):
            transfer_interendothelial("discrete", CO, 1e-3, 0.0, 100.0, 0.0, eps_v=0.028)
        with pytest.raises(ConfigurationError):
            transfer_interendothelial("hybrid", CO, 1e-3, 0.0, 100.0, 0.0, eps_v=0.028)


class TestTransendothelial:
    def test_value(self):
        v = transfer_transendothelial("homogenised", CO, 1e-3, 0.0, eps_v=0.028)
        assert v == pytest.approx(oracles.TRANSENDO_HOMOG, rel=1e-12)

    def test_no_back_diffusion(self):
        assert transfer_transendothelial("homogenised", CO, 1e-3, 2e-3, eps_v=0.028) == 0.0

    def test_zero_difference(self):
        assert transfer_transendothelial("discrete", CO, 1e-3, 1e-3, R=10e-6) == 0.0

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_never_negative(self, wv, wl):
        assert transfer_transendothelial("homogenised", CO, wv, wl, eps_v=0.028) >= 0.0


class TestLymphDrainage:
    def test_value(self):
        v = lymph_drainage(CO, 533.3, 0.0, 1e-3)
        assert v == pytest.approx(oracles.LYMPH_DRAINAGE, rel=1e-12)

    def test_collapsed_lymphatics(self):
        assert lymph_drainage(CO, 533.3, 133.0, 1e-3) == 0.0
        assert lymph_drainage(CO, 533.3, 500.0, 1e-3) == 0.0

    def test_below_lymph_pressure(self):
        co = TransportCoefficients(p_ly=600.0)
        assert lymph_drainage(co, 533.3, 0.0, 1e-3) == 0.0


def _operator(mesh, fields=None, **kw):
    fields = fields if fields is not None else uniform_fields(mesh)
    return TransportOperator(mesh, fields, kw.pop("coeffs", CO), **kw)


class TestTransportOperator:
    def test_constant_state_is_steady(self):
        mesh = build_mesh(6, 6, 1e-3, 1e-3)
        op = _operator(mesh)
        s = TransportState(np.full(mesh.n_nodes, 2e-3))
        for _ in range(3):
            s, bal = op.step(s, 60.0)
        assert s.omega_l == pytest.approx(np.full(mesh.n_nodes, 2e-3), rel=1e-12)
        assert bal.residual == pytest.approx(0.0, abs=1e-20)

    def test_nothing_to_do_keeps_field(self):
        mesh = build_mesh(6, 6, 1e-3, 1e-3)
        op = _operator(mesh, coeffs=TransportCoefficients(D=1e-300))
        w0 = np.linspace(0.0, 1e-3, mesh.n_nodes)
        s, _ = op.step(TransportState(w0), 60.0)
        assert s.omega_l == pytest.approx(w0, rel=1e-9, abs=1e-15)

    def test_gaussian_spreading(self):
        # the second moment of a free Gaussian grows by 4 D t in 2D
        D = 1e-10
        mesh = build_mesh(100, 100, 2e-3, 2e-3, -1e-3, -1e-3)
        op = _operator(mesh, coeffs=TransportCoefficients(D=D))
        r2 = (mesh.coords**2).sum(1)
        s = TransportState(1e-3 * np.exp(-r2 / (2 * (60e-6) ** 2)))
        m0 = gaussian_second_moment(mesh, s.omega_l)
        dt, steps = 1.0, 100
        for _ in range(steps):
            s, _ = op.step(s, dt)
        growth = gaussian_second_moment(mesh, s.omega_l) - m0
        assert growth == pytest.approx(4 * D * dt * steps, rel=0.02)

    def test_injection_raises_mass_and_balances(self):
        mesh = build_mesh(20, 20, 1e-3, 1e-3, -0.5e-3, -0.5e-3)
        fields = generate_idealised_tumour(mesh, r_t=200e-6, width=20e-6, host_if_saturation=0.8,
                                           core_if_saturation=0.3)
        op = _operator(mesh, fields)
        s = TransportState.initial(mesh.n_nodes)
        masses = [0.0]
        for _ in range(10):
            s, bal = op.step(s, 60.0, omega_v=2e-3)
            masses.append(op.mass(s.omega_l))
            assert bal.relative_residual < 1e-8
        assert np.all(np.diff(masses) > 0)
        assert s.omega_l.min() >= 0.0
        assert s.omega_l.max() <= 2e-3 * (1 + 1e-9)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(1e-5, 1e-2), st.floats(1.0, 600.0), st.integers(1, 4))
    def test_balance_and_bounds_property(self, omega_v, dt, steps):
        mesh = build_mesh(8, 8, 1e-3, 1e-3)
        fields = uniform_fields(mesh, eps_v=0.028, eps=0.772, p_v=2666.0).replace(
            p_l=533.3 * (1 - mesh.coords[:, 0] / 1e-3))
        op = _operator(mesh, fields)
        s = TransportState.initial(mesh.n_nodes)
        for _ in range(steps):
            s, bal = op.step(s, dt, omega_v=omega_v)
            assert bal.relative_residual < 1e-8
        assert np.all(s.omega_l >= -1e-15)
        assert np.all(s.omega_l <= 1.0)

    def test_washout_after_injection(self):
        mesh = build_mesh(8, 8, 1e-3, 1e-3)
        fields = uniform_fields(mesh, eps_v=0.028, eps=0.772, p_v=2666.0)
        op = _operator(mesh, fields)
        s, _ = op.step(TransportState.initial(mesh.n_nodes), 600.0, omega_v=2e-3)
        m1 = op.mass(s.omega_l)
        s, bal = op.step(s, 600.0, omega_v=0.0)
        # with no vessel concentration only the interendothelial pathway acts
        assert op.mass(s.omega_l) > 0
        assert bal.relative_residual < 1e-8
        assert op.mass(s.omega_l) != m1

    def test_bad_arguments(self):
        mesh = build_mesh(2, 2, 1e-3, 1e-3)
        op = _operator(mesh)
        with pytest.raises(ConfigurationError):
            op.step(TransportState.initial(mesh.n_nodes), 0.0)
        with pytest.raises(ConfigurationError):
            _operator(mesh, mode="discrete")
        with pytest.raises(ConfigurationError):
            _operator(mesh, slab_thickness=0.0)


class TestDiscreteCoupling:
    def _setup(self):
        mesh = build_mesh(10, 10, 1e-3, 1e-3)
        net = VesselNetwork([[0.05e-3, 0.5e-3], [0.95e-3, 0.5e-3]], [[0, 1]], [10e-6], [False])
        emb = embed_network(net, mesh)
        op = _operator(mesh, mode="discrete", embedding=emb, slab_thickness=1e-3)
        P = emb.n_points
        line = LineCoupling(np.full(P, 10e-6), np.full(P, 2666.0), np.full(P, 2e-3))
        return mesh, net, op, line

    def test_line_source_balances(self):
        mesh, net, op, line = self._setup()
        s = TransportState.initial(mesh.n_nodes)
        s, bal = op.step(s, 60.0, line=line)
        assert bal.transfer_in > 0
        assert bal.relative_residual < 1e-8
        # with omega_l <= omega_v the uptake is bounded by (F + T) omega_v per unit length
        assert s.omega_l.max() <= 2e-3
        F = interendothelial_rate(CO, 2666.0, 0.0, R=10e-6)
        upper = (F + CO.rho_v * 2 * math.pi * 10e-6 * CO.P_v) * 2e-3 * net.total_length() / 1e-3
        assert 0 < bal.transfer_in <= upper * (1 + 1e-12)

    def test_requires_line_data(self):
        mesh, _, op, _ = self._setup()
        with pytest.raises(ConfigurationError):
            op.step(TransportState.initial(mesh.n_nodes), 60.0)

    def test_vessel_exchange_shape(self):
        mesh, _, op, line = self._setup()
        ex = op.vessel_exchange(line, np.zeros(mesh.n_nodes))
        assert ex.shape == (op.embedding.n_points,)
        assert np.all(ex > 0)
