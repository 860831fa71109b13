"""Discriminability and repeatability statistics for repeated measurements.

A balanced panel of n subjects measured over s sessions is summarized by
how reliably a subject's repeat measurement is closer to itself than to
other subjects.  The package provides the estimators, their population
theory, permutation tests of the no-repeatability null, and simulation
scenarios for power studies.
"""

from .core import (
    MeasurementSet,
    ScenarioConfig,
    load_measurements,
    save_measurements,
    validate,
)
from .estimators import (
    MultiBatchStrategy,
    RepeatabilityEstimate,
    all_strategies,
    fingerprint_index,
    i2c2_moments,
    icc_anova,
    multibatch_estimate,
    pca_first_component,
    pca_icc,
    rank_discriminability,
    ranksum_discriminability,
    sample_discriminability,
)
from .metrics import CombinedDistanceMatrix, pairwise_distances, rank_rows_max_ties
from .permtest import (
    TestResult,
    parametric_f_test,
    permutation_test,
    permutation_tests,
    permute_within_sessions,
    subseed,
)
from .simulate import (
    ExperimentConfig,
    MatchMoments,
    MonteCarloEstimate,
    PowerCell,
    PowerResult,
    gen_batch,
    gen_gaussian_anova,
    gen_gaussian_manova,
    gen_lognormal,
    generate_panel,
    match_correlation_mc,
    run_power_experiment,
    true_discriminability_mc,
)
from .theory import (
    ManovaPopulation,
    SpectrumSummary,
    discr_approx_manova,
    discr_bounds,
    discr_from_icc,
    discr_star_from_icc,
    f_cdf,
    fingerprint_from_discr,
    icc_from_discr,
    manova_spectrum,
    regularized_incomplete_beta,
    wilks_lambda,
)

__version__ = "0.1.0"

__all__ = [
    "MeasurementSet",
    "ScenarioConfig",
    "load_measurements",
    "save_measurements",
    "validate",
    "CombinedDistanceMatrix",
    "pairwise_distances",
    "rank_rows_max_ties",
    "RepeatabilityEstimate",
    "MultiBatchStrategy",
    "all_strategies",
    "sample_discriminability",
    "rank_discriminability",
    "ranksum_discriminability",
    "fingerprint_index",
    "icc_anova",
    "i2c2_moments",
    "pca_first_component",
    "pca_icc",
    "multibatch_estimate",
    "TestResult",
    "permute_within_sessions",
    "permutation_test",
    "permutation_tests",
    "parametric_f_test",
    "subseed",
    "ManovaPopulation",
    "SpectrumSummary",
    "discr_from_icc",
    "discr_star_from_icc",
    "icc_from_discr",
    "fingerprint_from_discr",
    "f_cdf",
    "regularized_incomplete_beta",
    "manova_spectrum",
    "discr_approx_manova",
    "discr_bounds",
    "wilks_lambda",
    "ExperimentConfig",
    "MonteCarloEstimate",
    "MatchMoments",
    "PowerCell",
    "PowerResult",
    "generate_panel",
    "gen_gaussian_anova",
    "gen_gaussian_manova",
    "gen_lognormal",
    "gen_batch",
    "true_discriminability_mc",
    "match_correlation_mc",
    "run_power_experiment",
    "__version__",
]
