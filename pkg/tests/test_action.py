import math

import numpy as np
import pytest
from scipy.integrate import quad

from ompath import (
    OMResult,
    Path,
    constant_path,
    discrete_action_gradient,
    double_well_mean_field,
    linear_path,
    om_action,
    ornstein_uhlenbeck,
    path_from_function,
    zero_drift,
)
from ompath.action import _objective_values
from ompath.errors import DimensionMismatch, InvalidPath


def classical_om_linear(kappa, phi, phidot, n=20_000):
    """Independent evaluator for distribution-free linear pull f = -kappa x.

    Uses the analytic path derivative and adaptive quadrature; shares nothing
    with the package's grid machinery.
    """
    kin = -0.5 * quad(lambda t: (phidot(t) + kappa * phi(t)) ** 2, 0.0, 1.0, limit=200)[0]
    div = 0.5 * kappa
    return kin + div


class TestActionValues:
    def test_double_well_rest_path(self):
        res = om_action(double_well_mean_field(), constant_path(0.0, 100))
        assert res.kinetic == 0.0 and res.divergence == 0.0 and res.total == 0.0

    def test_ou_flow_path(self):
        res = om_action(ornstein_uhlenbeck(), path_from_function(lambda t: math.exp(-t), 2000))
        assert res.kinetic == pytest.approx(0.0, abs=1e-9)
        assert res.divergence == pytest.approx(0.5, abs=1e-12)
        assert res.total == pytest.approx(0.5, abs=1e-6)

    def test_ou_constant_path(self):
        res = om_action(ornstein_uhlenbeck(), constant_path(1.0, 2000))
        assert res.kinetic == pytest.approx(-0.5, abs=1e-12)
        assert res.divergence == pytest.approx(0.5, abs=1e-12)
        assert res.total == pytest.approx(0.0, abs=1e-6)

    def test_total_is_exact_sum(self):
        res = om_action(ornstein_uhlenbeck(), path_from_function(lambda t: math.sin(t), 50))
        assert res.total == res.kinetic + res.divergence

    def test_kinetic_nonpositive(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            p = Path(rng.normal(size=(21, 1)))
            assert om_action(double_well_mean_field(), p).kinetic <= 0.0

    def test_dimension_check(self):
        with pytest.raises(DimensionMismatch):
            om_action(ornstein_uhlenbeck(d=2), constant_path(0.0, 10))


class TestClassicalLimit:
    def test_matches_independent_evaluator(self):
        # distribution-free drifts reduce to the classical functional
        for kappa, phi, phidot in [
            (1.0, math.exp, math.exp),
            (1.0, lambda t: math.exp(-t), lambda t: -math.exp(-t)),
            (2.0, lambda t: t * t + 0.3, lambda t: 2 * t),
        ]:
            spec = ornstein_uhlenbeck(rate=kappa)
            p = path_from_function(phi, 2000)
            expect = classical_om_linear(kappa, phi, phidot)
            assert om_action(spec, p).total == pytest.approx(expect, abs=1e-6)

    def test_grid_refinement_order_two(self):
        spec = double_well_mean_field()
        totals = [om_action(spec, path_from_function(lambda t: math.cos(t), n)).total for n in (250, 500, 1000)]
        order = math.log2(abs(totals[0] - totals[1]) / abs(totals[1] - totals[2]))
        assert 1.8 <= order <= 2.2


class TestGradient:
    def test_matches_finite_differences(self):
        from ompath import DistributionFree, LinearMeanField

        rng = np.random.default_rng(17)
        specs = [
            (double_well_mean_field(), 1),
            (LinearMeanField(2, A=np.array([[[0.2, -0.1], [0.4, 0.3]]]), C=np.array([[[0.5, 0.2], [0.0, -0.3]]])), 2),
            (DistributionFree(1, [[(1.0, 0, (1,)), (-1.0, 0, (3,)), (0.5, 1, (0,))]]), 1),
        ]
        for spec, d in specs:
            n = 14
            vals = rng.normal(size=(n + 1, d)) * 0.7
            g = discrete_action_gradient(spec, Path(vals))
            h = 1e-6
            for m in (1, n // 2, n - 1):
                for j in range(d):
                    vp = vals.copy()
                    vp[m, j] += h
                    vm = vals.copy()
                    vm[m, j] -= h
                    fd = (_objective_values(spec, vp, n) - _objective_values(spec, vm, n)) / (2 * h)
                    assert g[m - 1, j] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_zero_drift_line_is_stationary(self):
        g = discrete_action_gradient(zero_drift(), linear_path(0.0, 1.0, 64))
        assert np.max(np.abs(g)) < 1e-12

    def test_needs_interior_nodes(self):
        with pytest.raises(InvalidPath):
            discrete_action_gradient(zero_drift(), constant_path(0.0, 2))


class TestKineticInvariance:
    def test_flow_path_kills_kinetic_term(self):
        # integrate phidot = f(t, phi, delta_phi) with RK4, then check the
        # kinetic term collapses
        spec = double_well_mean_field()
        n = 2000
        h = 1.0 / n
        x = 0.5
        vals = [x]
        for k in range(n):
            t = k * h

            def f(tt, xx):
                return spec.eval_nodes(np.array([tt]), np.array([[xx]]))[0, 0]

            k1 = f(t, x)
            k2 = f(t + h / 2, x + h / 2 * k1)
            k3 = f(t + h / 2, x + h / 2 * k2)
            k4 = f(t + h, x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            vals.append(x)
        res = om_action(spec, Path(np.asarray(vals)[:, None]))
        assert abs(res.kinetic) < 1e-8


class TestSerialization:
    def test_json_round_trip(self):
        res = om_action(ornstein_uhlenbeck(), path_from_function(lambda t: math.exp(-t), 100))
        back = OMResult.from_json(res.to_json())
        assert back == res
        assert set(res.as_dict()) == {"kinetic", "divergence", "total", "n"}
