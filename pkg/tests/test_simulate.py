"""Panel generators, Monte Carlo oracles, and the power runner."""

from __future__ import annotations

import math

import numpy as np
import pytest

from repeatr import (
    ExperimentConfig,
    MeasurementSet,
    ScenarioConfig,
    discr_from_icc,
    fingerprint_from_discr,
    gen_batch,
    gen_gaussian_anova,
    gen_gaussian_manova,
    gen_lognormal,
    generate_panel,
    i2c2_moments,
    icc_anova,
    match_correlation_mc,
    run_power_experiment,
    true_discriminability_mc,
)
from repeatr.errors import ConfigError, DimensionError


def cfg(**kw):
    base = dict(model="gaussian-anova", sigma_sq=5.0, sigma_mu_sq=3.0, n=20, s=2, seed=0)
    base.update(kw)
    return ScenarioConfig(**base)


class TestGaussianAnova:
    def test_shape_and_determinism(self):
        c = cfg(n=7, s=3, seed=11)
        a = gen_gaussian_anova(c)
        b = gen_gaussian_anova(c)
        assert (a.n, a.s, a.l) == (7, 3, 1)
        assert a == b

    def test_seed_override(self):
        c = cfg(seed=11)
        assert gen_gaussian_anova(c, seed=12) != gen_gaussian_anova(c)

    def test_null_variance(self):
        # sigma_mu_sq = 0: all values i.i.d. N(0, sigma_sq)
        c = cfg(sigma_sq=5.0, sigma_mu_sq=0.0, n=2000, s=2, seed=1)
        values = gen_gaussian_anova(c).values
        assert values.var() == pytest.approx(5.0, rel=0.05)

    def test_sample_icc_near_population(self):
        c = cfg(n=2000, s=2, seed=2)
        est = icc_anova(gen_gaussian_anova(c))
        assert est.value == pytest.approx(0.375, abs=0.02)

    def test_total_variance_decomposes(self):
        c = cfg(sigma_sq=2.0, sigma_mu_sq=1.0, n=3000, s=2, seed=3)
        values = gen_gaussian_anova(c).values
        assert values.var() == pytest.approx(3.0, rel=0.05)

    def test_wrong_model_rejected(self):
        with pytest.raises(ConfigError):
            gen_gaussian_anova(cfg(model="lognormal-anova"))


class TestGaussianManova:
    def test_independent_coordinates_at_rho_zero(self):
        c = cfg(model="gaussian-manova", l=5, rho=0.0, n=1000, s=2, sigma_mu_sq=0.0, seed=4)
        x = gen_gaussian_manova(c).values.reshape(-1, 5)
        corr = np.corrcoef(x.T)
        off = corr[~np.eye(5, dtype=bool)]
        assert np.abs(off).max() < 0.08

    def test_compound_symmetry_correlation(self):
        # pooled data correlation = rho since both effects share Q
        c = cfg(model="gaussian-manova", l=10, rho=0.5, n=1000, s=2, seed=5)
        x = gen_gaussian_manova(c).values.reshape(-1, 10)
        corr = np.corrcoef(x.T)
        off = corr[~np.eye(10, dtype=bool)]
        assert off.mean() == pytest.approx(0.5, abs=0.03)

    def test_coordinate_variance(self):
        c = cfg(model="gaussian-manova", l=3, rho=0.3, sigma_sq=2.0, sigma_mu_sq=2.0, n=2000, s=2, seed=6)
        x = gen_gaussian_manova(c).values.reshape(-1, 3)
        assert x.var(axis=0).mean() == pytest.approx(4.0, rel=0.05)

    def test_i2c2_near_trace_fraction(self):
        c = cfg(model="gaussian-manova", l=4, rho=0.4, n=400, s=2, seed=7)
        est = i2c2_moments(gen_gaussian_manova(c))
        assert est.value == pytest.approx(0.375, abs=0.03)


class TestLognormal:
    def test_heavy_tail_variance(self):
        # var(exp(h)) = (e^{sigma^2} - 1) e^{sigma^2} for h ~ N(0, sigma^2):
        # enormous at sigma^2 = 5, so check the log-values instead
        c = cfg(model="lognormal-anova", sigma_sq=5.0, sigma_mu_sq=0.0, n=4000, s=2, seed=8)
        values = gen_lognormal(c).values
        noise = values - 1.0  # exp(0) = 1 subject effect at sigma_mu_sq = 0
        assert np.log(noise).var() == pytest.approx(5.0, rel=0.05)
        assert (math.exp(5.0) - 1.0) * math.exp(5.0) == pytest.approx(21878, rel=0.01)

    def test_population_icc_tiny(self):
        var_mu = (math.exp(3.0) - 1.0) * math.exp(3.0)
        var_e = (math.exp(5.0) - 1.0) * math.exp(5.0)
        assert var_mu / (var_mu + var_e) == pytest.approx(0.017, abs=0.002)

    def test_values_all_positive_shifted(self):
        c = cfg(model="lognormal-anova", n=50, s=2, seed=9)
        assert np.all(gen_lognormal(c).values > 0.0)

    def test_multivariate_lognormal(self):
        c = cfg(model="lognormal-manova", l=3, rho=0.5, n=40, s=2, seed=10)
        ms = gen_lognormal(c)
        assert ms.l == 3
        assert np.all(ms.values > 0.0)


class TestBatch:
    def test_mean_shift_session_means(self):
        c = cfg(batch="mean-shift", sigma_sq=3.0, sigma_mu_sq=5.0, n=4000, s=4, seed=11)
        values = gen_batch(c).values[:, :, 0]
        means = values.mean(axis=0)
        tol = 3 * math.sqrt(2 * (3.0 + 5.0) / 4000)
        # session 1 undisturbed; session t >= 2 shifted by t (1-based)
        assert abs(means[1] - means[0] - 2.0) < tol
        assert abs(means[2] - means[0] - 3.0) < tol
        assert abs(means[3] - means[0] - 4.0) < tol

    def test_scaling_session_variances(self):
        c = cfg(batch="scaling", sigma_sq=3.0, sigma_mu_sq=5.0, n=6000, s=4, seed=12)
        values = gen_batch(c).values[:, :, 0]
        var = values.var(axis=0)
        assert var[0] == pytest.approx(5.0 + 3.0, rel=0.08)
        for t in (1, 2, 3):
            assert var[t] == pytest.approx(5.0 + (t + 1) * 3.0, rel=0.08)

    def test_scaling_preserves_means(self):
        c = cfg(batch="scaling", sigma_sq=3.0, sigma_mu_sq=5.0, n=5000, s=3, seed=13)
        means = gen_batch(c).values[:, :, 0].mean(axis=0)
        assert np.abs(means - means[0]).max() < 0.3

    def test_batch_none_rejected(self):
        with pytest.raises(ConfigError):
            gen_batch(cfg())

    def test_generate_panel_dispatch(self):
        assert generate_panel(cfg(seed=3)) == gen_gaussian_anova(cfg(seed=3))
        lc = cfg(model="lognormal-anova", seed=3)
        assert generate_panel(lc) == gen_lognormal(lc)
        bc = cfg(batch="mean-shift", s=3, seed=3)
        assert generate_panel(bc) == gen_batch(bc)


class TestDiscriminabilityOracle:
    def test_matches_closed_form_gaussian(self):
        c = cfg(sigma_sq=5.0, sigma_mu_sq=3.0)
        mc = true_discriminability_mc(c, reps=200_000, seed=14)
        expect = discr_from_icc(0.375)
        assert abs(mc.value - expect) < 3 * mc.se

    def test_null_is_half(self):
        c = cfg(sigma_mu_sq=0.0)
        mc = true_discriminability_mc(c, reps=100_000, seed=15)
        assert abs(mc.value - 0.5) < 3 * mc.se

    def test_se_formula(self):
        mc = true_discriminability_mc(cfg(), reps=10_000, seed=16)
        assert mc.se == pytest.approx(math.sqrt(mc.value * (1 - mc.value) / 10_000))
        assert mc.reps == 10_000

    def test_batch_rejected(self):
        with pytest.raises(ConfigError):
            true_discriminability_mc(cfg(batch="mean-shift", s=3))

    def test_deterministic(self):
        a = true_discriminability_mc(cfg(), reps=5000, seed=17)
        b = true_discriminability_mc(cfg(), reps=5000, seed=17)
        assert a.value == b.value


class TestMatchMoments:
    def test_d_agrees_with_oracle(self):
        c = cfg(sigma_sq=5.0, sigma_mu_sq=3.0)
        mm = match_correlation_mc(c, reps=200_000, seed=18)
        d = true_discriminability_mc(c, reps=200_000, seed=19)
        assert mm.d == pytest.approx(d.value, abs=4 * d.se)

    def test_rho_in_unit_interval_and_positive(self):
        # the two indicators share the within distance, so they are
        # positively correlated
        mm = match_correlation_mc(cfg(), reps=100_000, seed=20)
        assert 0.0 < mm.rho < 1.0

    def test_rho_against_direct_simulation(self):
        # independent oracle: correlation of the two match indicators,
        # simulated directly with a different stream
        mm = match_correlation_mc(cfg(), reps=500_000, seed=21)
        rng = np.random.default_rng(22)
        reps = 500_000
        mu = math.sqrt(3.0) * rng.standard_normal((4, reps))
        e = math.sqrt(5.0) * rng.standard_normal((4, reps))
        probe = mu[0] + e[0]
        within = np.abs(probe - (mu[0] + e[1]))
        i1 = within < np.abs(probe - (mu[1] + e[2]))
        i2 = within < np.abs(probe - (mu[2] + e[3]))
        direct = np.corrcoef(i1, i2)[0, 1]
        assert mm.rho == pytest.approx(direct, abs=0.01)

    def test_fingerprint_prediction_small_panel(self):
        # the correlated-binomial interpolation is accurate for small
        # panels; its quality degrades as n grows (the acceptance suite
        # documents the large-n behaviour)
        c = cfg(sigma_sq=5.0, sigma_mu_sq=3.0)
        mm = match_correlation_mc(c, reps=300_000, seed=21)
        n = 5
        predicted = fingerprint_from_discr(mm.d, mm.rho, n)
        rng = np.random.default_rng(22)
        panels = 20_000
        mu = math.sqrt(3.0) * rng.standard_normal((panels, n))
        x1 = mu + math.sqrt(5.0) * rng.standard_normal((panels, n))
        x2 = mu + math.sqrt(5.0) * rng.standard_normal((panels, n))
        d_cross = np.abs(x1[:, :, None] - x2[:, None, :])
        diag = d_cross[:, np.arange(n), np.arange(n)].copy()
        d_cross[:, np.arange(n), np.arange(n)] = np.inf
        simulated = (diag < d_cross.min(axis=2)).mean()
        assert predicted == pytest.approx(simulated, abs=0.02)


class TestPowerRunner:
    def test_thread_count_immaterial(self):
        c = cfg(n=8, seed=23)
        kw = dict(n_grid=(8,), statistics=("dtilde", "icc"), iterations=20, B=50, seed=23)
        a = run_power_experiment(c, threads=1, **kw)
        b = run_power_experiment(c, threads=8, **kw)
        assert a.to_json() == b.to_json()
        assert a.to_csv() == b.to_csv()

    def test_power_one_on_separated_scale(self):
        c = cfg(sigma_sq=0.01, sigma_mu_sq=100.0, seed=24)
        res = run_power_experiment(c, (10,), ("dtilde",), iterations=10, B=99, seed=24)
        assert res.power("dtilde", 10) == 1.0

    def test_cells_complete_and_quantiles_ordered(self):
        c = cfg(seed=25)
        res = run_power_experiment(
            c, (5, 8), ("dtilde", "f-test"), iterations=12, B=40, seed=25
        )
        assert len(res.cells) == 4
        cell = res.cell("dtilde", 8)
        assert cell.q05 <= cell.q25 <= cell.q50 <= cell.q75 <= cell.q95
        assert 0.0 <= cell.power <= 1.0
        with pytest.raises(KeyError):
            res.cell("dtilde", 99)

    def test_f_test_needs_univariate(self):
        c = cfg(model="gaussian-manova", l=3, seed=26)
        with pytest.raises(ConfigError):
            run_power_experiment(c, (5,), ("f-test",), iterations=2, B=10, seed=26)

    def test_statistic_shape_mismatch_fails_fast(self):
        c = cfg(seed=27)  # univariate scenario, pca-icc needs l >= 2
        with pytest.raises((DimensionError, ConfigError)):
            run_power_experiment(c, (5,), ("pca-icc",), iterations=2, B=10, seed=27)

    def test_duplicate_statistics(self):
        with pytest.raises(ConfigError):
            run_power_experiment(cfg(), (5,), ("dtilde", "dtilde"), iterations=2, B=10)

    def test_json_dict_schema(self):
        c = cfg(seed=28)
        res = run_power_experiment(c, (5,), ("dtilde",), iterations=5, B=20, seed=28)
        d = res.to_json_dict()
        assert d["scenario"]["model"] == "gaussian-anova"
        assert d["n_grid"] == [5]
        assert d["iterations"] == 5
        assert d["B"] == 20
        assert "cells" in d and len(d["cells"]) == 1
        cell = d["cells"][0]
        for key in ("statistic", "n", "power", "power_se", "estimate_mean", "q50"):
            assert key in cell

    def test_csv_layout(self):
        c = cfg(seed=29)
        res = run_power_experiment(c, (5,), ("dtilde",), iterations=5, B=20, seed=29)
        lines = res.to_csv().strip().split("\n")
        assert lines[0] == "statistic,n,field,value"
        assert all(line.split(",")[0] == "dtilde" for line in lines[1:])


class TestExperimentConfig:
    def test_defaults_batch_free(self):
        ec = ExperimentConfig.from_dict(
            {"model": "gaussian-anova", "sigma_sq": 5.0, "sigma_mu_sq": 3.0, "s": 2}
        )
        assert ec.n_grid == (20,)
        assert ec.statistics == ("dtilde", "drs", "fingerprint", "icc")
        assert ec.iterations == 300 and ec.B == 200 and ec.alpha == 0.05

    def test_defaults_batch(self):
        ec = ExperimentConfig.from_dict(
            {
                "model": "gaussian-anova",
                "sigma_sq": 3.0,
                "sigma_mu_sq": 5.0,
                "s": 15,
                "batch": "mean-shift",
            }
        )
        assert ec.statistics == (
            "dtilde:first-last",
            "dtilde:all-batches",
            "dtilde:first-rest",
            "drs:first-last",
            "drs:all-batches",
            "drs:first-rest",
        )

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            ExperimentConfig.from_dict(
                {"model": "gaussian-anova", "sigma_sq": 1.0, "sigma_mu_sq": 1.0, "s": 2, "foo": 1}
            )

    def test_missing_required(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"model": "gaussian-anova", "sigma_sq": 1.0, "s": 2})

    def test_scalar_n_promoted(self):
        ec = ExperimentConfig.from_dict(
            {"model": "gaussian-anova", "sigma_sq": 1.0, "sigma_mu_sq": 1.0, "s": 2, "n": 7}
        )
        assert ec.n_grid == (7,)

    def test_toml_roundtrip(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(
            'model = "gaussian-anova"\n'
            "sigma_sq = 5.0\n"
            "sigma_mu_sq = 3.0\n"
            "s = 2\n"
            "n = [5, 10]\n"
            'statistics = ["dtilde", "f-test"]\n'
            "iterations = 40\n"
            "B = 60\n"
            "seed = 99\n",
            encoding="utf-8",
        )
        ec = ExperimentConfig.from_toml(path)
        assert ec.n_grid == (5, 10)
        assert ec.scenario.seed == 99
        # the resolved dump parses back to the same config
        path2 = tmp_path / "resolved.toml"
        path2.write_text(ec.to_toml(), encoding="utf-8")
        again = ExperimentConfig.from_toml(path2)
        assert again == ec

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("model = [unterminated\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_toml(path)

    def test_invalid_scenario_value_reported(self, tmp_path):
        path = tmp_path / "rho.toml"
        path.write_text(
            'model = "gaussian-manova"\nsigma_sq = 1.0\nsigma_mu_sq = 1.0\ns = 2\nl = 3\nrho = 1.2\n',
            encoding="utf-8",
        )
        with pytest.raises(ConfigError, match="rho"):
            ExperimentConfig.from_toml(path)

    def test_run_smoke(self):
        ec = ExperimentConfig.from_dict(
            {
                "model": "gaussian-anova",
                "sigma_sq": 5.0,
                "sigma_mu_sq": 3.0,
                "s": 2,
                "n": [5],
                "statistics": ["dtilde"],
                "iterations": 4,
                "B": 20,
                "seed": 30,
            }
        )
        res = ec.run(threads=2)
        assert res.cell("dtilde", 5).iterations == 4
