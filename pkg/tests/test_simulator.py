import math

import numpy as np
import pytest

from ompath import (
    Measure,
    NormKind,
    SimConfig,
    constant_path,
    double_well_mean_field,
    ensemble_stats,
    estimate_om_ratio,
    estimate_tube_probability,
    frozen_flow,
    girsanov_log_weight,
    girsanov_log_weights,
    linear_path,
    mean_drift,
    ornstein_uhlenbeck,
    path_from_function,
    simulate_ensemble,
    w2_distance,
    zero_drift,
)
from ompath.errors import InvalidPath


def cfg(drift, **kw):
    base = dict(x=0.0, N=2, n=200, M=1, seed=1234)
    base.update(kw)
    return SimConfig(drift=drift, **base)


class TestEnsemble:
    def test_brownian_statistics(self):
        c = cfg(zero_drift(), N=20_000, n=200, seed=7)
        st = ensemble_stats(simulate_ensemble(c))
        se_mean = 1.0 / math.sqrt(c.N)
        assert abs(st["mean"][-1, 0]) < 3 * se_mean
        assert abs(st["var"][-1, 0] - 1.0) < 3 * math.sqrt(2.0 / (c.N - 1))

    def test_mean_field_mean_grows_like_exp(self):
        c = cfg(mean_drift(), x=1.0, N=4000, n=500, seed=21)
        st = ensemble_stats(simulate_ensemble(c))
        # particles are correlated through the mean they chase: the empirical
        # mean fluctuates like sqrt((e^2 - 1) / (2N)), not sqrt(var / N)
        se = math.sqrt((math.e**2 - 1.0) / (2 * c.N))
        assert abs(st["mean"][-1, 0] - math.e) < 3 * se + 0.003  # small Euler bias allowance

    def test_bitwise_determinism(self):
        c = cfg(mean_drift(), x=0.5, N=500, n=100, seed=99)
        a = simulate_ensemble(c)
        b = simulate_ensemble(c)
        assert np.array_equal(a.paths, b.paths)
        assert np.array_equal(a.increments, b.increments)

    def test_increments_are_the_noise(self):
        c = cfg(zero_drift(), N=50, n=64, seed=5)
        res = simulate_ensemble(c)
        rebuilt = np.cumsum(res.increments, axis=1)
        assert np.allclose(res.paths[:, 1:, :], rebuilt, atol=1e-14)

    def test_frozen_flow_matches_ensemble(self):
        c = cfg(mean_drift(), x=1.0, N=300, n=50, seed=11)
        res = simulate_ensemble(c)
        flow = frozen_flow(c)
        assert np.array_equal(res.frozen, flow)
        assert frozen_flow(cfg(zero_drift())) is None

    def test_synchronous_coupling_bound(self):
        # same seed gives the same Brownian increments: a synchronous coupling
        c1 = cfg(double_well_mean_field(), x=1.0, N=400, n=100, seed=31)
        c2 = cfg(double_well_mean_field(), x=0.5, N=400, n=100, seed=31)
        r1, r2 = simulate_ensemble(c1), simulate_ensemble(c2)
        for k in (25, 50, 100):
            lhs = w2_distance(Measure.empirical(r1.paths[:, k, :]), Measure.empirical(r2.paths[:, k, :]))
            rhs = math.sqrt(float(np.mean((r1.paths[:, k, 0] - r2.paths[:, k, 0]) ** 2)))
            assert lhs <= rhs + 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            SimConfig(drift=zero_drift(), x=0.0, N=1, n=10, M=1, seed=0)
        with pytest.raises(ValueError):
            SimConfig(drift=zero_drift(), x=0.0, N=2, n=10, M=1, seed=None)


class TestTubeProbability:
    def test_huge_radius_certain(self):
        est = estimate_tube_probability(cfg(zero_drift(), M=2000, n=100), constant_path(0.0, 100), 100.0, NormKind.sup())
        assert est.probability == 1.0

    def test_norm_domination_orders_probabilities(self):
        c = cfg(zero_drift(), M=20_000, n=400, seed=11, bridge_correction=False)
        ref = constant_path(0.0, 400)
        p_l2 = estimate_tube_probability(c, ref, 1.0, NormKind.l2()).probability
        p_sup = estimate_tube_probability(c, ref, 1.0, NormKind.sup()).probability
        assert p_l2 >= p_sup

    def test_monotone_in_radius_same_seed(self):
        c = cfg(zero_drift(), M=10_000, n=300, seed=13)
        ref = constant_path(0.0, 300)
        probs = [estimate_tube_probability(c, ref, eps, NormKind.sup()).probability for eps in (0.4, 0.7, 1.0, 1.5)]
        assert probs == sorted(probs)

    def test_zero_hits_one_sided_interval(self):
        c = cfg(zero_drift(), M=500, n=100, seed=3)
        est = estimate_tube_probability(c, constant_path(0.0, 100), 0.01, NormKind.sup())
        assert est.probability == 0.0
        assert est.ci_low == 0.0
        assert est.ci_high == pytest.approx(1.0 - 0.01 ** (1.0 / 500))

    def test_binomial_standard_error_in_plain_mode(self):
        c = cfg(zero_drift(), M=5000, n=200, seed=17, bridge_correction=False)
        est = estimate_tube_probability(c, constant_path(0.0, 200), 0.9, NormKind.sup())
        p = est.probability
        assert est.stderr == pytest.approx(math.sqrt(p * (1 - p) / c.M))
        assert 0.0 <= est.ci_low <= p <= est.ci_high <= 1.0

    def test_bridge_correction_removes_monitoring_bias(self):
        # coarse grid exaggerates the skeleton bias; the corrected estimator
        # should stay near the continuum value while the plain one overshoots
        target = 0.3707774297995239  # reflection series, eps = 1
        base = dict(x=0.0, N=2, n=100, M=40_000)
        ref = constant_path(0.0, 100)
        est_c = estimate_tube_probability(SimConfig(drift=zero_drift(), seed=29, **base), ref, 1.0, NormKind.sup())
        est_p = estimate_tube_probability(
            SimConfig(drift=zero_drift(), seed=29, bridge_correction=False, **base), ref, 1.0, NormKind.sup()
        )
        assert abs(est_c.probability - target) < 4 * est_c.stderr
        assert est_p.probability - target > 10 * est_p.stderr

    def test_grid_mismatch_rejected(self):
        with pytest.raises(InvalidPath):
            estimate_tube_probability(cfg(zero_drift(), n=100), constant_path(0.0, 50), 1.0, NormKind.sup())

    def test_holder_and_lp_norms_run(self):
        c = cfg(zero_drift(), M=2000, n=100, seed=41)
        ref = constant_path(0.0, 100)
        for kind in (NormKind.holder(0.1), NormKind.lp(5.0)):
            est = estimate_tube_probability(c, ref, 2.0, kind)
            assert 0.0 <= est.probability <= 1.0


class TestGirsanov:
    def test_zero_drift_zero_shift(self):
        inc = np.random.default_rng(0).normal(size=(50, 1)) * 0.1
        assert girsanov_log_weight(zero_drift(), constant_path(0.0, 50), inc) == 0.0

    def test_zero_drift_linear_shift_formula(self):
        # f = 0, phi(t) = t: log R = -B_1 - 1/2
        rng = np.random.default_rng(1)
        n = 250
        inc = rng.normal(size=(200, n, 1)) * math.sqrt(1.0 / n)
        lw = girsanov_log_weights(zero_drift(), path_from_function(lambda t: t, n), inc)
        B1 = inc.sum(axis=(1, 2))
        assert np.allclose(lw, -B1 - 0.5, atol=1e-12)

    def test_martingale_mean_one(self):
        ou = ornstein_uhlenbeck()
        ref = path_from_function(lambda t: t, 400)
        ens = simulate_ensemble(cfg(zero_drift(), N=20_000, n=400, seed=55))
        R = np.exp(girsanov_log_weights(ou, ref, ens.increments))
        se = R.std(ddof=1) / math.sqrt(R.size)
        assert abs(R.mean() - 1.0) < 3 * se

    def test_mean_field_needs_law_flow(self):
        inc = np.zeros((5, 50, 1))
        with pytest.raises(ValueError):
            girsanov_log_weights(double_well_mean_field(), constant_path(1.0, 50), inc)

    def test_importance_sampling_agrees_with_plain(self):
        # same tube probability with and without the Girsanov shift: the 99%
        # intervals must overlap
        ou = ornstein_uhlenbeck()
        ref = path_from_function(lambda t: 0.5 * t, 300)
        plain = estimate_tube_probability(
            SimConfig(drift=ou, x=0.0, N=2, n=300, M=40_000, seed=61), ref, 0.8, NormKind.sup()
        )
        shifted = estimate_tube_probability(
            SimConfig(drift=ou, x=0.0, N=2, n=300, M=40_000, seed=62, girsanov_shift=ref),
            ref,
            0.8,
            NormKind.sup(),
        )
        assert plain.ci_low <= shifted.ci_high and shifted.ci_low <= plain.ci_high


class TestRatio:
    def test_same_path_gives_zero_log_ratio(self):
        c = cfg(zero_drift(), M=5000, n=200, seed=71)
        ref = constant_path(0.0, 200)
        table = estimate_om_ratio(c, ref, ref, [0.8, 1.2], NormKind.sup())
        for row in table.rows:
            assert row.log_ratio == 0.0
            assert row.p1 == row.p2

    def test_header_and_csv_shape(self):
        c = cfg(zero_drift(), M=2000, n=100, seed=73)
        table = estimate_om_ratio(c, constant_path(0.0, 100), linear_path(0.0, 0.5, 100), [1.0], NormKind.sup())
        text = table.to_csv()
        assert text.splitlines()[0] == "eps,p1,se1,p2,se2,log_ratio,se_log_ratio,predicted_dL"
        assert len(text.splitlines()) == 2

    def test_zero_hit_rows_flagged(self):
        c = cfg(zero_drift(), M=300, n=100, seed=77)
        table = estimate_om_ratio(c, constant_path(0.0, 100), linear_path(0.0, 0.5, 100), [0.01], NormKind.sup())
        assert table.rows[0].flagged
        assert math.isnan(table.rows[0].log_ratio)

    def test_admissibility_enforced(self):
        c = cfg(zero_drift(), M=100, n=100, seed=79)
        with pytest.raises(InvalidPath):
            estimate_om_ratio(c, constant_path(1.0, 100), constant_path(0.0, 100), [1.0], NormKind.sup())

    def test_predicted_action_difference(self):
        c = cfg(zero_drift(), M=1000, n=100, seed=83)
        table = estimate_om_ratio(c, constant_path(0.0, 100), path_from_function(lambda t: t, 100), [1.0], NormKind.sup())
        assert table.predicted_dL == pytest.approx(0.5, abs=1e-9)


class TestPropagationOfChaos:
    def test_mean_error_shrinks_with_ensemble_size(self):
        errs, ses = [], []
        for N, seed in ((100, 1), (1000, 2), (10_000, 3)):
            c = cfg(mean_drift(), x=1.0, N=N, n=300, seed=seed)
            st = ensemble_stats(simulate_ensemble(c))
            errs.append(abs(st["mean"][-1, 0] - math.e))
            ses.append(math.sqrt((math.e**2 - 1.0) / (2 * N)))
        for small, big, se_small, se_big in zip(errs[1:], errs[:-1], ses[1:], ses[:-1]):
            assert small <= big + 2 * (se_small + se_big)
