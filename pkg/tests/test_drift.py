import numpy as np
import pytest

from ompath import (
    DistributionFree,
    LinearMeanField,
    Measure,
    PolySeparable1D,
    double_well_mean_field,
    mean_drift,
    ornstein_uhlenbeck,
    zero_drift,
)
from ompath.errors import DimensionMismatch, InvalidDrift


def random_measure(rng, d, m=4):
    w = rng.uniform(0.2, 1.0, size=m)
    w /= w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return Measure.empirical(rng.normal(size=(m, d)), weights=w)


def sample_specs():
    rng = np.random.default_rng(5)
    poly = PolySeparable1D(
        local=[[0.1, -0.4, 0.0, 0.2], [0.3, 0.5, -0.1, 0.0]],
        pairs=[([0.0, 1.0, 0.0, -1.0], [0.0, 1.0]), ([0.5, -0.2], [0.0, 0.0, 1.0])],
    )
    lin = LinearMeanField(
        2,
        A=np.array([[[0.5, -0.3], [0.2, 0.1]], [[0.0, 1.0], [-1.0, 0.0]]]),
        b=np.array([[0.1, -0.2], [0.3, 0.0]]),
        C=np.array([[[0.4, 0.0], [0.1, -0.5]]]),
    )
    free = DistributionFree(
        2,
        [
            [(1.0, 0, (2, 0)), (-0.5, 1, (0, 1)), (0.3, 2, (1, 1))],
            [(-1.0, 0, (0, 1)), (0.7, 0, (1, 0)), (0.2, 1, (0, 2))],
        ],
    )
    return [(poly, 1), (lin, 2), (free, 2)], rng


class TestDoubleWellExamples:
    """Values for the built-in two-well mean-field model f = (x - x^3) E[mu]."""

    def setup_method(self):
        self.spec = double_well_mean_field()

    def test_rest_points_of_effective_drift(self):
        # f(x, delta_x) = (x - x^3) x vanishes exactly at -1, 0, 1
        for x in (1.0, -1.0, 0.0):
            assert self.spec.eval_f(0.2, x, Measure.dirac(x))[0] == pytest.approx(0.0, abs=1e-14)

    def test_eval_against_dirac(self):
        out = self.spec.eval_f(0.0, 0.5, Measure.dirac(0.5))
        assert out[0] == pytest.approx(0.1875)

    def test_grad_at_dirac(self):
        g = self.spec.grad_x_f(0.0, 1.0, Measure.dirac(1.0))
        assert g[0, 0] == pytest.approx(-2.0)

    def test_second_derivative(self):
        lap = self.spec.laplacian_trace_f(0.0, 0.0, Measure.dirac(0.0))
        assert lap[0] == pytest.approx(0.0)
        lap1 = self.spec.laplacian_trace_f(0.0, 1.0, Measure.dirac(1.0))
        assert lap1[0] == pytest.approx(-6.0)

    def test_l_derivative(self):
        L = self.spec.l_derivative(0.0, 0.5, Measure.dirac(0.5), 0.2)
        assert L[0, 0] == pytest.approx(0.375)

    def test_mean_field_time_term(self):
        out = self.spec.mean_field_time_term(0.0, 0.5, 2.0, Measure.dirac(0.5))
        assert out[0] == pytest.approx(0.75)

    def test_divergence_zero_factor(self):
        assert self.spec.divergence_x(0.0, 0.0, Measure.dirac(0.0)) == pytest.approx(0.0)


class TestSimpleSpecs:
    def test_ou_ignores_measure(self):
        ou = ornstein_uhlenbeck()
        for mu in (Measure.dirac(9.0), Measure.empirical([1.0, 2.0, 3.0])):
            assert ou.eval_f(0.5, 3.0, mu)[0] == pytest.approx(-3.0)
        assert ou.grad_x_f(0.5, 3.0, Measure.dirac(0.0))[0, 0] == pytest.approx(-1.0)
        assert ou.divergence_x(0.1, 3.0, Measure.dirac(0.0)) == pytest.approx(-1.0)

    def test_linear_identity_divergence(self):
        spec = LinearMeanField(2, A=np.eye(2)[None])
        assert spec.divergence_x(0.0, [0.0, 0.0], Measure.dirac([1.0, 1.0])) == pytest.approx(2.0)

    def test_linear_lderiv_is_C(self):
        spec = LinearMeanField(2, C=np.eye(2)[None])
        L = spec.l_derivative(0.0, [0.0, 0.0], Measure.dirac([1.0, 2.0]), [7.0, 8.0])
        assert np.allclose(L, np.eye(2))
        out = spec.mean_field_time_term(0.0, [0.0, 0.0], [3.0, -4.0], Measure.dirac([1.0, 2.0]))
        assert np.allclose(out, [3.0, -4.0])

    def test_mean_drift_evaluates_first_moment(self):
        spec = mean_drift()
        mu = Measure.empirical([0.0, 1.0, 5.0])
        assert spec.eval_f(0.0, 100.0, mu)[0] == pytest.approx(2.0)

    def test_zero_drift_is_zero(self):
        assert zero_drift(2).is_zero
        assert not double_well_mean_field().is_zero


class TestValidation:
    def test_degree_cap(self):
        with pytest.raises(InvalidDrift):
            PolySeparable1D(local=np.zeros((1, 12)) + 1.0)
        PolySeparable1D(local=np.zeros((1, 12)) + 1.0, max_degree=12)

    def test_pair_degree_counts_both_factors(self):
        with pytest.raises(InvalidDrift):
            PolySeparable1D(pairs=[(np.ones(7), np.ones(7))])

    def test_dimension_mismatch(self):
        spec = LinearMeanField(2, A=np.eye(2)[None])
        with pytest.raises(DimensionMismatch):
            spec.eval_f(0.0, [1.0], Measure.dirac([0.0, 0.0]))
        with pytest.raises(DimensionMismatch):
            spec.eval_f(0.0, [1.0, 2.0], Measure.dirac(0.0))

    def test_time_domain(self):
        with pytest.raises(ValueError):
            ornstein_uhlenbeck().eval_f(1.5, 0.0, Measure.dirac(0.0))

    def test_component_count(self):
        with pytest.raises(InvalidDrift):
            DistributionFree(2, [[(1.0, 0, (1, 0))]])


class TestDerivativesAgainstFiniteDifferences:
    """Exact coefficient differentiation vs central differences of eval_f."""

    def test_space_time_derivatives(self):
        specs, rng = sample_specs()
        for spec, d in specs:
            for _ in range(6):
                t = float(rng.uniform(0.05, 0.95))
                x = rng.normal(size=d)
                mu = random_measure(rng, d)
                h = 1e-5
                grad = spec.grad_x_f(t, x, mu)
                lap = spec.laplacian_trace_f(t, x, mu)
                for i in range(d):
                    e = np.zeros(d)
                    e[i] = h
                    fp = spec.eval_f(t, x + e, mu)
                    fm = spec.eval_f(t, x - e, mu)
                    fd = (fp - fm) / (2 * h)
                    assert np.allclose(grad[:, i], fd, rtol=1e-6, atol=1e-6)
                lap_fd = np.zeros(d)
                for i in range(d):
                    e = np.zeros(d)
                    e[i] = h
                    lap_fd += (spec.eval_f(t, x + e, mu) - 2 * spec.eval_f(t, x, mu) + spec.eval_f(t, x - e, mu)) / h**2
                assert np.allclose(lap, lap_fd, rtol=1e-4, atol=1e-4)
                dt_fd = (spec.eval_f(t + h, x, mu) - spec.eval_f(t - h, x, mu)) / (2 * h)
                assert np.allclose(spec.dt_f(t, x, mu), dt_fd, rtol=1e-6, atol=1e-6)

    def test_l_derivative_via_atom_perturbation(self):
        specs, rng = sample_specs()
        for spec, d in specs:
            t = 0.4
            x = rng.normal(size=d)
            mu = random_measure(rng, d, m=3)
            h = 1e-6
            for i in range(mu.natoms):
                for j in range(d):
                    atoms_p = mu.atoms.copy()
                    atoms_p[i, j] += h
                    atoms_m = mu.atoms.copy()
                    atoms_m[i, j] -= h
                    fp = spec.eval_f(t, x, Measure.empirical(atoms_p, mu.weights))
                    fm = spec.eval_f(t, x, Measure.empirical(atoms_m, mu.weights))
                    fd = (fp - fm) / (2 * h)
                    L = spec.l_derivative(t, x, mu, mu.atoms[i])
                    assert np.allclose(mu.weights[i] * L[:, j], fd, rtol=1e-5, atol=1e-6)


class TestMeasureStructure:
    def test_distribution_free_measure_outputs_vanish(self):
        specs, rng = sample_specs()
        free = specs[2][0]
        mu = random_measure(rng, 2)
        assert np.all(free.l_derivative(0.3, [0.1, 0.2], mu, [1.0, 1.0]) == 0.0)
        assert np.all(free.mean_field_time_term(0.3, [0.1, 0.2], [1.0, 2.0], mu) == 0.0)

    def test_affine_in_the_measure(self):
        specs, rng = sample_specs()
        for spec, d in specs[:2]:
            t = 0.3
            x = rng.normal(size=d)
            mu = random_measure(rng, d, m=3)
            nu = random_measure(rng, d, m=2)
            for lam in (0.25, 0.7):
                atoms = np.vstack([mu.atoms, nu.atoms])
                weights = np.concatenate([lam * mu.weights, (1 - lam) * nu.weights])
                mix = Measure.empirical(atoms, weights)
                expect = lam * spec.eval_f(t, x, mu) + (1 - lam) * spec.eval_f(t, x, nu)
                assert np.allclose(spec.eval_f(t, x, mix), expect, rtol=1e-12, atol=1e-12)

    def test_node_evaluation_matches_scalar_api(self):
        specs, rng = sample_specs()
        for spec, d in specs:
            X = rng.normal(size=(5, d))
            t = np.linspace(0.1, 0.9, 5)
            batch = spec.eval_nodes(t, X)
            for k in range(5):
                single = spec.eval_f(t[k], X[k], Measure.dirac(X[k]))
                assert np.allclose(batch[k], single, rtol=1e-13, atol=1e-13)
