"""Verification harness: order estimation, Pennes oracle, line source, reporting.

The full manufactured-solution studies run in the acceptance suite.
"""

import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from nanotherm.errors import ConfigurationError, VerificationError
from nanotherm.verify import (
    Check,
    line_source_checks,
    observed_order,
    pennes_analytic,
    pennes_checks,
    run_cases,
    write_report,
)


class TestObservedOrder:
    @given(st.floats(0.5, 4.0), st.floats(1e-6, 1e3))
    def test_recovers_power_law(self, p, c):
        h = np.array([0.1, 0.05, 0.025, 0.0125])
        assert observed_order(h, c * h**p) == pytest.approx(p, rel=1e-9)

    def test_needs_three_levels(self):
        with pytest.raises(ConfigurationError):
            observed_order([0.1, 0.05], [1.0, 0.25])

    def test_non_monotone(self):
        with pytest.raises(VerificationError):
            observed_order([0.1, 0.05, 0.025], [1.0, 0.25, 0.5])


class TestPennesOracle:
    def test_value(self):
        assert pennes_analytic(1.12e5, 0.018) == pytest.approx(oracles.PENNES_DT, rel=1e-12)

    def test_zero_source(self):
        assert pennes_analytic(0.0, 0.018) == 0.0

    @given(st.floats(1e3, 1e7), st.floats(1e-3, 0.1))
    def test_doubling_perfusion_halves_rise(self, q, w):
        assert pennes_analytic(q, 2 * w) == pytest.approx(0.5 * pennes_analytic(q, w), rel=1e-14)

    def test_no_perfusion(self):
        with pytest.raises(ConfigurationError):
            pennes_analytic(1e5, 0.0)

    def test_simulated_steady_states(self):
        checks = pennes_checks()
        assert len(checks) == 3
        assert all(c.passed for c in checks)


class TestLineSource:
    def test_checks_pass(self):
        checks = {c.metric: c for c in line_source_checks()}
        assert checks["zero_strength_K"].value == 0.0
        assert checks["linearity_error"].value <= 1e-12
        assert all(c.passed for c in checks.values())


class TestReporting:
    def test_check_thresholds(self):
        assert Check("a", "m", 0.5, 0.0, 1.0).passed
        assert not Check("a", "m", 1.5, 0.0, 1.0).passed
        assert Check("a", "m", 2.0, -math.inf, 3.0).threshold == "<= 3"
        assert Check("a", "m", 2.0, 1.0, math.inf).threshold == ">= 1"

    def test_report_csv(self, tmp_path):
        checks = [Check("x", "err", 0.1, 0.0, 1.0), Check("x", "order", 1.5, 1.9, 2.1)]
        write_report(tmp_path / "r.csv", checks)
        rows = list(csv.reader(open(tmp_path / "r.csv")))
        assert rows[0] == ["case", "metric", "value", "threshold", "pass"]
        assert [r[-1] for r in rows[1:]] == ["pass", "FAIL"]

    def test_unknown_case(self):
        with pytest.raises(ConfigurationError, match="mms-heat"):
            run_cases(["mms-hot"])

    def test_run_named_case(self, tmp_path):
        checks = run_cases(["pennes"], report=tmp_path / "v.csv")
        assert {c.case for c in checks} == {"pennes"}
        assert (tmp_path / "v.csv").exists()
