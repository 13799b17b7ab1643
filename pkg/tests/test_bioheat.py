"""Bioheat model: effective properties, sources and sinks, heat operator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from nanotherm import fem
from nanotherm.bioheat import (
    PHASES,
    HeatOperator,
    ThermalParams,
    ThermalState,
    effective_props,
    heat_sink_discrete,
    heat_sink_lumped,
    heat_source,
    heat_source_line,
)
from nanotherm.errors import ConfigurationError, DataError
from nanotherm.fields import generate_idealised_tumour, uniform_fields
from nanotherm.mesh import SIDES, build_mesh
from nanotherm.vasculature import VesselNetwork, embed_network

INSULATED = {s: None for s in SIDES}


class TestEffectiveProperties:
    FRACTIONS = {"s": 0.2, "t": 0.3, "h": 0.2, "l": 0.272, "v": 0.028}

    def test_equal_conductivities(self):
        _, kappa = effective_props(self.FRACTIONS, ThermalParams(kappa=0.51))
        assert kappa == 0.51

    def test_heat_capacity(self):
        crho, _ = effective_props(self.FRACTIONS, ThermalParams())
        assert crho == pytest.approx(3.47e6, rel=1e-14)

    def test_doubled_fractions_rejected(self):
        doubled = {k: 2 * v for k, v in self.FRACTIONS.items()}
        with pytest.raises(DataError):
            effective_props(doubled, ThermalParams())

    @given(st.lists(st.floats(0.01, 1.0), min_size=5, max_size=5), st.lists(st.floats(0.1, 5.0), min_size=5, max_size=5))
    def test_mixture_bounds(self, raw, kap):
        fr = dict(zip(PHASES, np.array(raw) / sum(raw)))
        params = ThermalParams(kappa=dict(zip(PHASES, kap)))
        _, kappa = effective_props(fr, params, tol=1e-9)
        assert min(kap) - 1e-12 <= kappa <= max(kap) + 1e-12


class TestSources:
    def test_volumetric_source(self):
        q = heat_source(ThermalParams(sar=2.0e6), 0.028, 0.3, 2.0e-3, 0.0)
        assert q == pytest.approx(oracles.Q_P_VOLUME, rel=1e-14)

    def test_outside_heating_window(self):
        assert heat_source(ThermalParams(), 0.028, 0.3, 2e-3, 1e-3, heating=False) == 0.0

    def test_line_source(self):
        assert heat_source_line(ThermalParams(sar=2e6), 10e-6, 2e-3) == pytest.approx(oracles.Q_P_LINE, rel=1e-14)
        assert heat_source_line(ThermalParams(), 10e-6, 2e-3, heating=False) == 0.0


class TestSinks:
    def test_lumped(self):
        p = ThermalParams(w=0.018)
        assert heat_sink_lumped(p.T_b + 1.0, p) == pytest.approx(oracles.Q_BL_LUMPED, rel=1e-12)
        assert heat_sink_lumped(p.T_b, p) == 0.0
        assert heat_sink_lumped(400.0, ThermalParams(w=0.0)) == 0.0

    def test_discrete(self):
        assert heat_sink_discrete(314.15, 10e-6, 20.0, 310.15) == pytest.approx(oracles.Q_BL_DISCRETE, rel=1e-12)
        assert heat_sink_discrete(310.15, 10e-6, 20.0, 310.15) == 0.0
        out = heat_sink_discrete(np.array([320.0, 320.0]), np.array([1e-5, 1e-5]), 20.0, 310.15,
                                 collapsed=np.array([False, True]))
        assert out[1] == 0.0 and out[0] > 0


class TestThermalParams:
    def test_rejects_bad_values(self):
        with pytest.raises(ConfigurationError):
            ThermalParams(T_b=200.0)
        with pytest.raises(ConfigurationError):
            ThermalParams(w=-1.0)
        with pytest.raises(ConfigurationError):
            ThermalParams(kappa={"s": 1.0})
        with pytest.raises(ConfigurationError):
            ThermalParams(robin={"front": 1.0})


def _uniform_op(mesh, params, **kw):
    fields = uniform_fields(mesh, eps=0.772, S_l=0.3, eps_v=0.028)
    return HeatOperator(mesh, fields, params, **kw)


class TestHeatOperator:
    def test_equilibrium(self):
        mesh = build_mesh(6, 6, 1e-3, 1e-3)
        op = _uniform_op(mesh, ThermalParams(robin=INSULATED))
        s = ThermalState.initial(mesh.n_nodes, 315.0)
        for _ in range(5):
            s, bal = op.step(s, 60.0, np.zeros(mesh.n_nodes))
        assert np.abs(s.T - 315.0).max() < 1e-12

    def test_pennes_relaxation(self):
        mesh = build_mesh(4, 4, 1e-3, 1e-3)
        p = ThermalParams(w=0.018, robin=INSULATED)
        op = _uniform_op(mesh, p, perfusion="lumped")
        b = op.source_vector(np.full((mesh.n_elements, 4), 1.12e5))
        T = op.steady(b)
        assert T - p.T_b == pytest.approx(np.full(mesh.n_nodes, oracles.PENNES_DT), rel=1e-10)
        s = ThermalState.initial(mesh.n_nodes, p.T_b)
        for _ in range(100):
            s, _ = op.step(s, 60.0, b)
        assert s.T - p.T_b == pytest.approx(np.full(mesh.n_nodes, oracles.PENNES_DT), rel=1e-6)

    def test_slab_cooling_matches_fourier_series(self):
        # 1D slab at uniform excess temperature, both ends held at T_b
        L = 1e-2
        mesh = build_mesh(200, 1, L, L / 200)
        p = ThermalParams(robin=INSULATED)
        op = _uniform_op(mesh, p, dirichlet={"left": p.T_b, "right": p.T_b})
        alpha = 0.51 / 3.47e6
        t_end = L**2 / (4 * alpha)
        steps = 8000
        s = ThermalState.initial(mesh.n_nodes, p.T_b + 1.0)
        zero = np.zeros(mesh.n_nodes)
        for _ in range(steps):
            s, _ = op.step(s, t_end / steps, zero)
        exact = oracles.fourier_slab(L / 2, t_end, L, alpha, 1.0)
        assert s.T[100] - p.T_b == pytest.approx(exact, rel=1e-3)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(1e3, 1e7), st.floats(1.0, 600.0), st.floats(0.0, 0.05))
    def test_energy_balance_property(self, q, dt, w):
        mesh = build_mesh(8, 8, 1e-3, 1e-3)
        p = ThermalParams(w=w)
        op = _uniform_op(mesh, p, perfusion="lumped")
        s = ThermalState.initial(mesh.n_nodes, p.T_b)
        x = fem.qp_coords(mesh)
        b = op.source_vector(q * np.exp(-((x[..., 0] - 5e-4) ** 2) / 1e-8))
        for _ in range(3):
            s, bal = op.step(s, dt, b)
            assert bal.relative_residual < 1e-8

    def test_convection_and_discrete_sink_balance(self):
        mesh = build_mesh(20, 20, 1e-3, 1e-3, -0.5e-3, -0.5e-3)
        fields = generate_idealised_tumour(mesh, r_t=200e-6, width=20e-6)
        net = VesselNetwork([[-4.5e-4, -1e-4], [4.5e-4, 2e-4]], [[0, 1]], [10e-6], [False])
        emb = embed_network(net, mesh)
        vel = np.broadcast_to([1e-6, 5e-7], (mesh.n_elements, 4, 2))
        p = ThermalParams(beta_vessel=2e4)
        op = HeatOperator(mesh, fields, p, perfusion="discrete", velocity=vel, embedding=emb,
                          line_radius=np.full(emb.n_points, 10e-6), slab_thickness=1e-3)
        s = ThermalState.initial(mesh.n_nodes, p.T_b)
        b = op.source_vector(np.full((mesh.n_elements, 4), 1e5))
        for _ in range(5):
            s, bal = op.step(s, 60.0, b)
            assert bal.relative_residual < 1e-8
        assert bal.perfusion > 0 and bal.boundary > 0

    def test_discrete_sink_needs_network(self):
        mesh = build_mesh(2, 2, 1e-3, 1e-3)
        with pytest.raises(ConfigurationError):
            _uniform_op(mesh, ThermalParams(), perfusion="discrete")
        with pytest.raises(ConfigurationError):
            _uniform_op(mesh, ThermalParams(), perfusion="partial")

    def test_energy_integral(self):
        mesh = build_mesh(3, 3, 1e-3, 1e-3)
        op = _uniform_op(mesh, ThermalParams())
        assert op.energy(np.full(mesh.n_nodes, op.params.T_b + 2.0)) == pytest.approx(2.0 * 3.47e6 * 1e-6)
