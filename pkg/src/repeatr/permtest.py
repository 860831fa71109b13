"""Permutation tests of the no-repeatability null, plus the parametric F test.

The null of exchangeable subjects is simulated by permuting subject
labels independently within each session.  Statistics are re-evaluated
on a reindexed copy of the cached distance matrix rather than from raw
vectors, so a replicate costs O((ns)^2) regardless of feature dimension.

Determinism contract: replicate b of a test with master seed ``seed``
draws its permutations from a generator seeded with ``subseed(seed, b)``,
a pure function of its arguments.  Results are therefore bit-identical
however the surrounding work is scheduled.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import MeasurementSet
from .errors import ConfigError, DimensionError
from .estimators import (
    MultiBatchStrategy,
    _dhat_kernel,
    _drs_kernel,
    _dtilde_from_ranksum,
    _dtilde_kernel,
    _fingerprint_kernel,
    _i2c2_kernel,
    _icc_kernel,
    _multibatch_kernel,
    _check_counts,
    pca_first_component,
)
from .metrics import _euclidean_sq, _session_major, pairwise_distances
from .theory import f_cdf

PLAIN_STATISTICS = ("dhat", "dtilde", "drs", "fingerprint", "icc", "pca-icc", "i2c2")

# pseudo statistic understood by the experiment runner and the CLI only:
# the parametric ANOVA F test rather than a permutation test
F_TEST_NAME = "f-test"


def subseed(*parts: int | str) -> int:
    """64-bit sub-seed derived from the given parts.

    The parts are rendered with repr, joined with ``|``, and hashed with
    blake2b to eight bytes, read little-endian.  Used to give every
    permutation replicate and every experiment cell an independent,
    schedule-free generator.
    """
    text = "|".join(repr(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _session_perms(rng: np.random.Generator, n: int, s: int) -> list[np.ndarray]:
    return [rng.permutation(n) for _ in range(s)]


def permute_within_sessions(ms: MeasurementSet, seed: int) -> MeasurementSet:
    """Reassign measurement vectors to subjects independently per session.

    Session t's n vectors are shuffled by an independent uniform
    permutation; the multiset of vectors within each session is
    preserved, which is exactly the exchangeability null of the
    permutation tests.
    """
    rng = np.random.default_rng(seed)
    perms = _session_perms(rng, ms.n, ms.s)
    permuted = np.stack([ms.values[perms[t], t, :] for t in range(ms.s)], axis=1)
    return MeasurementSet(permuted, ms.subject_ids, ms.session_ids)


@dataclass(frozen=True, eq=False)
class TestResult:
    """Outcome of one permutation test."""

    statistic: str
    observed: float
    p_value: float
    B: int
    seed: int
    metric: str
    null_values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.null_values, dtype=np.float64)
        arr.flags.writeable = False
        object.__setattr__(self, "null_values", arr)

    def reject(self, alpha: float) -> bool:
        return self.p_value <= alpha


class _Context:
    """Permuted views of one panel, built lazily per replicate."""

    __slots__ = ("dm", "sq", "values", "scores")

    def __init__(self, dm, sq, values, scores):
        self.dm = dm
        self.sq = sq
        self.values = values
        self.scores = scores


def parse_statistic(spec: "str | MultiBatchStrategy") -> "str | MultiBatchStrategy":
    """Normalize a statistic spec; strings like dtilde:first-rest parse
    to a :class:`MultiBatchStrategy`."""
    if isinstance(spec, MultiBatchStrategy):
        return spec
    name = str(spec).strip().lower()
    if ":" in name:
        base, pairing = name.split(":", 1)
        return MultiBatchStrategy(pairing, base)
    if name not in PLAIN_STATISTICS:
        raise ConfigError(
            f"unknown statistic {spec!r}; expected one of {PLAIN_STATISTICS} "
            "or base:pairing such as dtilde:first-last"
        )
    return name


def statistic_name(spec: "str | MultiBatchStrategy") -> str:
    spec = parse_statistic(spec)
    return spec if isinstance(spec, str) else spec.name


def _make_evaluator(spec, n: int, s: int, l: int):
    """Returns (name, needs, fn(ctx) -> float) for one statistic spec.

    needs is a subset of {"dm", "sq", "values", "scores"}.
    """
    spec = parse_statistic(spec)
    if isinstance(spec, MultiBatchStrategy):
        strategy = spec
        return strategy.name, {"dm"}, lambda ctx: _multibatch_kernel(ctx.dm, n, s, strategy)
    if spec == "dhat":
        return spec, {"dm"}, lambda ctx: _dhat_kernel(ctx.dm, n, s)[0] / (
            n * s * (s - 1) * (n - 1) * s
        )
    if spec == "dtilde":
        return spec, {"dm"}, lambda ctx: _dtilde_from_ranksum(
            _dtilde_kernel(ctx.dm, n, s)[0], n, s
        )
    if spec == "drs":
        if s != 2:
            raise ConfigError(
                f"plain 'drs' needs exactly two sessions, got s={s}; "
                "use drs:first-last, drs:all-batches or drs:first-rest"
            )
        return spec, {"dm"}, lambda ctx: _drs_kernel(ctx.dm, n, s, 0, 1)[0]
    if spec == "fingerprint":
        if s != 2:
            raise ConfigError(
                f"'fingerprint' needs exactly two sessions, got s={s}; "
                "restrict the panel to a session pair first"
            )
        return spec, {"dm"}, lambda ctx: _fingerprint_kernel(ctx.dm, n, s, 0, 1)[0]
    if spec == "icc":
        if l != 1:
            raise DimensionError(
                f"'icc' needs a univariate panel, got l={l}; use pca-icc instead"
            )
        return spec, {"values"}, lambda ctx: _icc_kernel(ctx.values[:, :, 0])[0]
    if spec == "pca-icc":
        return spec, {"scores"}, lambda ctx: _icc_kernel(ctx.scores)[0]
    if spec == "i2c2":
        return spec, {"sq"}, lambda ctx: _i2c2_kernel(ctx.sq, n, s)[0]
    raise ConfigError(f"unknown statistic {spec!r}")


def permutation_tests(
    ms: MeasurementSet,
    statistics: "list[str | MultiBatchStrategy]",
    B: int = 200,
    seed: int = 0,
    metric: str = "euclidean",
) -> dict[str, TestResult]:
    """Permutation tests for several statistics on one shared stream.

    All statistics are evaluated on the same B permuted panels, so a
    panel's distance matrix is reindexed once per replicate however many
    statistics are requested.  One-sided, upper tail:

        p = (1 + #{b : T_b >= T_observed}) / (B + 1),

    ties counting against rejection.
    """
    _check_counts(ms.n, ms.s)
    if B < 1:
        raise ConfigError(f"B must be at least 1, got {B}")
    if not statistics:
        raise ConfigError("no statistics requested")
    n, s = ms.n, ms.s
    evaluators = [_make_evaluator(spec, n, s, ms.l) for spec in statistics]
    names = [name for name, _, _ in evaluators]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate statistics in {names}")
    needs = set().union(*(need for _, need, _ in evaluators))

    dm0 = pairwise_distances(ms, metric).matrix if "dm" in needs else None
    sq0 = _euclidean_sq(_session_major(ms)) if "sq" in needs else None
    values0 = ms.values if "values" in needs else None
    scores0 = None
    if "scores" in needs:
        # the pooled covariance axis ignores subject labels, so one
        # projection of the observed panel serves every permutation
        scores0 = pca_first_component(ms).values[:, :, 0]

    ctx = _Context(dm0, sq0, values0, scores0)
    observed = np.array([fn(ctx) for _, _, fn in evaluators])

    null = np.empty((len(evaluators), B), dtype=np.float64)
    base = np.arange(s) * n
    for b in range(B):
        rng = np.random.default_rng(subseed(seed, b))
        perms = _session_perms(rng, n, s)
        dm_b = sq_b = values_b = scores_b = None
        if dm0 is not None or sq0 is not None:
            idx = np.concatenate([base[t] + perms[t] for t in range(s)])
            if dm0 is not None:
                dm_b = dm0[np.ix_(idx, idx)]
            if sq0 is not None:
                sq_b = sq0[np.ix_(idx, idx)]
        if values0 is not None:
            values_b = np.stack([values0[perms[t], t, :] for t in range(s)], axis=1)
        if scores0 is not None:
            scores_b = np.stack([scores0[perms[t], t] for t in range(s)], axis=1)
        ctx_b = _Context(dm_b, sq_b, values_b, scores_b)
        for j, (_, _, fn) in enumerate(evaluators):
            null[j, b] = fn(ctx_b)

    out: dict[str, TestResult] = {}
    for j, name in enumerate(names):
        p = (1.0 + float((null[j] >= observed[j]).sum())) / (B + 1.0)
        out[name] = TestResult(
            statistic=name,
            observed=float(observed[j]),
            p_value=p,
            B=B,
            seed=seed,
            metric=metric,
            null_values=null[j].copy(),
        )
    return out


def permutation_test(
    ms: MeasurementSet,
    statistic: "str | MultiBatchStrategy",
    B: int = 200,
    seed: int = 0,
    metric: str = "euclidean",
) -> TestResult:
    """One-sided permutation test of no repeatability for one statistic."""
    name = statistic_name(statistic)
    return permutation_tests(ms, [statistic], B=B, seed=seed, metric=metric)[name]


def parametric_f_test(ms: MeasurementSet) -> float:
    """One-way ANOVA F test p-value for the no-subject-effect null.

    p = 1 - F_cdf(MS_B / MS_W; n - 1, n (s - 1)).  Valid under Gaussian
    noise; the permutation tests are the distribution-free alternative.
    """
    _check_counts(ms.n, ms.s)
    if ms.l != 1:
        raise DimensionError(
            f"the F test needs a univariate panel, got l={ms.l}; project first"
        )
    _, f_stat, _, _ = _icc_kernel(ms.values[:, :, 0])
    if np.isinf(f_stat):
        return 0.0
    return 1.0 - f_cdf(f_stat, ms.n - 1, ms.n * (ms.s - 1))
