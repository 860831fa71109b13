"""Repeatability estimators over balanced multi-session panels.

All discriminability-type estimators consume a combined distance matrix
and therefore work for any metric and any feature dimension; the
ANOVA-type estimators consume the panel itself.  Every public function
returns a :class:`RepeatabilityEstimate` carrying the value plus
estimator-specific detail.

Conventions shared by the rank-based estimators: ranks are taken within
a row, ties all receive the maximum rank of their tie group, and strict
inequalities define "closer", so tied distances never count as evidence
of repeatability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import MeasurementSet
from .errors import (
    ConfigError,
    DegenerateData,
    DimensionError,
    DimensionTooSmall,
    EigenFailure,
    RankDeficient,
    SameSession,
    ShapeError,
    TooFewSessions,
    TooFewSubjects,
)
from .metrics import CombinedDistanceMatrix, _euclidean_sq, _session_major, pairwise_distances

ESTIMATOR_KINDS = ("dhat", "dtilde", "drs", "fingerprint", "icc", "i2c2", "pca-icc")

PAIRINGS = ("first-last", "all-batches", "first-rest")
BASES = ("dtilde", "drs")

_ROW_CHUNK = 512


@dataclass(frozen=True)
class RepeatabilityEstimate:
    """Value of one repeatability statistic on one panel."""

    kind: str
    value: float
    n: int
    s: int
    l: int
    detail: dict = field(default_factory=dict)


def _check_counts(n: int, s: int) -> None:
    if n < 2:
        raise TooFewSubjects(n)
    if s < 2:
        raise TooFewSessions(s)


def _check_pair(s: int, t1: int, t2: int) -> None:
    if not (0 <= t1 < s and 0 <= t2 < s):
        raise ShapeError(f"session indices ({t1}, {t2}) out of range for s={s}")
    if t1 == t2:
        raise SameSession(f"need two distinct sessions, got ({t1}, {t2})")


# --- kernels on raw combined matrices ------------------------------------------
#
# The kernels work on the bare (n*s, n*s) array so permutation tests can
# re-evaluate them on reindexed copies without rebuilding wrapper objects.

_WITHIN_COLS: dict[tuple[int, int], np.ndarray] = {}


def _within_cols(n: int, s: int) -> np.ndarray:
    """Column indices of same-subject other-session entries, per row."""
    key = (n, s)
    cached = _WITHIN_COLS.get(key)
    if cached is None:
        k = np.arange(n * s)
        i = k % n
        t = k // n
        cols = np.arange(s)[None, :] * n + i[:, None]          # (ns, s)
        keep = np.arange(s)[None, :] != t[:, None]
        cached = np.ascontiguousarray(cols[keep].reshape(n * s, s - 1))
        _WITHIN_COLS[key] = cached
    return cached


def _dhat_kernel(m: np.ndarray, n: int, s: int) -> tuple[int, int]:
    """Numerator count and denominator of the direct estimator."""
    d4 = m.reshape(s, n, s, n)
    within = np.moveaxis(np.diagonal(d4, axis1=1, axis2=3), 2, 1)  # (s, n, s2)
    off_subj = ~np.eye(n, dtype=bool)
    count = 0
    for t in range(s):
        w = np.delete(within[t], t, axis=1)                    # (n, s-1)
        less = w[:, :, None, None] < d4[t][:, None, :, :]      # (n, s-1, s2, n2)
        count += int(less.sum(where=off_subj[:, None, None, :]))
    denom = n * s * (s - 1) * (n - 1) * s
    return count, denom


def _dtilde_kernel(m: np.ndarray, n: int, s: int) -> tuple[int, int]:
    """Sum of within-pair ranks and the estimator denominator."""
    ns = n * s
    cols = _within_cols(n, s)
    rank_sum = 0
    for start in range(0, ns, _ROW_CHUNK):
        stop = min(ns, start + _ROW_CHUNK)
        rows = m[start:stop]
        v = rows[np.arange(stop - start)[:, None], cols[start:stop]]   # (rows, s-1)
        rank_sum += int((rows[:, None, :] <= v[:, :, None]).sum())
    denom = n * s * (s - 1) * (n - 1) * s
    return rank_sum, denom


def _dtilde_from_ranksum(rank_sum: int, n: int, s: int) -> float:
    return (n * n * s * s * (s - 1) - rank_sum) / (n * s * (s - 1) * (n - 1) * s)


def _drs_kernel(m: np.ndarray, n: int, s: int, t1: int, t2: int) -> tuple[float, int]:
    """Rank-sum estimator on one ordered session pair, with its rank sum."""
    block = m[t1 * n : (t1 + 1) * n, t2 * n : (t2 + 1) * n]
    self_d = np.diagonal(block)
    ranks = (block <= self_d[:, None]).sum(axis=1)
    rank_sum = int(ranks.sum())
    return (n * n - rank_sum) / (n * (n - 1)), rank_sum


def _drs_all_pairs_kernel(m: np.ndarray, n: int, s: int) -> np.ndarray:
    """Rank-sum estimator for every ordered session pair at once.

    Entry (t, t2) is the estimator that ranks the self distance within
    row i of block (t, t2); the diagonal is meaningless and set to NaN.
    """
    d4 = m.reshape(s, n, s, n)
    self_d = np.moveaxis(np.diagonal(d4, axis1=1, axis2=3), 2, 1)  # (s, n, s2)
    ranks = (d4 <= self_d[:, :, :, None]).sum(axis=3)              # (s, n, s2)
    rank_sums = ranks.sum(axis=1)                                  # (s, s2)
    out = (n * n - rank_sums) / (n * (n - 1))
    np.fill_diagonal(out, np.nan)
    return out


def _fingerprint_kernel(m: np.ndarray, n: int, s: int, t1: int, t2: int) -> tuple[float, int]:
    block = m[t1 * n : (t1 + 1) * n, t2 * n : (t2 + 1) * n].copy()
    self_d = np.diagonal(block).copy()
    np.fill_diagonal(block, np.inf)
    matches = int((self_d < block.min(axis=1)).sum())
    return matches / n, matches


def _icc_kernel(values: np.ndarray) -> tuple[float, float, float, float]:
    """One-way ANOVA decomposition of an (n, s) panel.

    Returns (lambda_hat, f_stat, ms_between, ms_within).
    """
    n, s = values.shape
    subj_means = values.mean(axis=1)
    grand = subj_means.mean()
    ms_b = s * float(((subj_means - grand) ** 2).sum()) / (n - 1)
    ms_w = float(((values - subj_means[:, None]) ** 2).sum()) / (n * (s - 1))
    if ms_b == 0.0 and ms_w == 0.0:
        raise DegenerateData("panel has no variance, intraclass correlation undefined")
    if ms_w == 0.0:
        return 1.0, np.inf, ms_b, ms_w
    f_stat = ms_b / ms_w
    lam = (ms_b - ms_w) / (ms_b + (s - 1) * ms_w)
    return lam, f_stat, ms_b, ms_w


def _i2c2_kernel(sq: np.ndarray, n: int, s: int) -> tuple[float, float, float]:
    """Moment estimator from a squared-distance combined matrix.

    Returns (value, within_mean, between_mean).
    """
    d4 = sq.reshape(s, n, s, n)
    same_subject = float(np.diagonal(d4, axis1=1, axis2=3).sum())
    total = float(sq.sum())
    # same-session diagonal terms are zero, so the same-subject sum counts
    # each unordered session pair twice
    w = same_subject / (n * s * (s - 1))
    b = (total - same_subject) / (n * (n - 1) * s * s)
    if b == 0.0:
        raise DegenerateData("no between-subject variation, ratio undefined")
    value = min(1.0, max(0.0, 1.0 - w / b))
    return value, w, b


# --- public estimators ----------------------------------------------------------


def sample_discriminability(dm: CombinedDistanceMatrix) -> RepeatabilityEstimate:
    """Direct discriminability estimate.

    The fraction, over all admissible index combinations, of strict wins
    of a within-subject distance over a cross-subject distance:

        sum 1{d(i; t, t') < d(i, i'; t, t'')} / (n s (s-1) (n-1) s)

    with i' != i, t' != t and t'' unrestricted.  Unbiased for the
    population discriminability; ties count as zero.
    """
    _check_counts(dm.n, dm.s)
    count, denom = _dhat_kernel(dm.matrix, dm.n, dm.s)
    return RepeatabilityEstimate(
        "dhat", count / denom, dm.n, dm.s, 0,
        {"numerator": count, "denominator": denom, "metric": dm.metric},
    )


def rank_discriminability(dm: CombinedDistanceMatrix) -> RepeatabilityEstimate:
    """Rank-based discriminability estimate.

    For every ordered session pair (t, t') and subject i, the within
    distance d(i; t, t') is ranked within the full combined-matrix row of
    measurement (i, t), all n*s entries including the zero self column,
    ties taking the maximum rank.  With R the total of these ranks,

        value = (n^2 s^2 (s-1) - R) / (n s (s-1) (n-1) s).

    Coincides with the direct estimator when s = 2 and the distances are
    tie-free; for s > 2 it sits above it by (s-2) / (2 (n-1) s) on
    tie-free data.
    """
    _check_counts(dm.n, dm.s)
    rank_sum, _ = _dtilde_kernel(dm.matrix, dm.n, dm.s)
    value = _dtilde_from_ranksum(rank_sum, dm.n, dm.s)
    return RepeatabilityEstimate(
        "dtilde", value, dm.n, dm.s, 0,
        {"rank_sum": rank_sum, "metric": dm.metric},
    )


def ranksum_discriminability(
    dm: CombinedDistanceMatrix, t1: int, t2: int
) -> RepeatabilityEstimate:
    """Rank-sum discriminability estimate on one session pair.

    Within row i of the between-session block (t1, t2), the self distance
    d(i, i; t1, t2) is ranked among all n entries (maximum-tie rule).
    With R_n the sum of these self ranks, value = (n^2 - R_n) / (n (n-1)).
    Reaches 1 exactly when every subject is closest to itself and 0 when
    every subject ranks last.
    """
    _check_counts(dm.n, dm.s)
    _check_pair(dm.s, t1, t2)
    value, rank_sum = _drs_kernel(dm.matrix, dm.n, dm.s, t1, t2)
    return RepeatabilityEstimate(
        "drs", value, dm.n, dm.s, 0,
        {"t1": t1, "t2": t2, "rank_sum": rank_sum, "metric": dm.metric},
    )


def fingerprint_index(dm: CombinedDistanceMatrix, t1: int, t2: int) -> RepeatabilityEstimate:
    """Fraction of subjects matched to themselves across a session pair.

    Subject i matches when its self distance d(i, i; t1, t2) is strictly
    below every cross distance d(i, i'; t1, t2); equivalently, when its
    self rank in the rank-sum construction is 1 and untied.
    """
    _check_counts(dm.n, dm.s)
    _check_pair(dm.s, t1, t2)
    value, matches = _fingerprint_kernel(dm.matrix, dm.n, dm.s, t1, t2)
    return RepeatabilityEstimate(
        "fingerprint", value, dm.n, dm.s, 0,
        {"t1": t1, "t2": t2, "matches": matches, "metric": dm.metric},
    )


def icc_anova(ms: MeasurementSet) -> RepeatabilityEstimate:
    """One-way random-effects intraclass correlation, moment estimator.

    With MS_B = s * sum_i (xbar_i - xbar)^2 / (n-1) and
    MS_W = sum_{i,t} (x_it - xbar_i)^2 / (n (s-1)),

        lambda_hat = (MS_B - MS_W) / (MS_B + (s-1) MS_W),

    a strictly increasing function of the F statistic MS_B / MS_W.  The
    panel must be univariate; project first for l > 1.
    """
    _check_counts(ms.n, ms.s)
    if ms.l != 1:
        raise DimensionError(
            f"intraclass correlation needs a univariate panel, got l={ms.l}; "
            "project first (e.g. first principal component)"
        )
    lam, f_stat, ms_b, ms_w = _icc_kernel(ms.values[:, :, 0])
    return RepeatabilityEstimate(
        "icc", lam, ms.n, ms.s, ms.l,
        {"f_stat": f_stat, "ms_between": ms_b, "ms_within": ms_w},
    )


def i2c2_moments(ms: MeasurementSet) -> RepeatabilityEstimate:
    """Image intraclass correlation, trace-form moment estimator.

    W averages squared euclidean distances between same-subject sessions,
    B between different subjects; the value is 1 - W/B clamped to [0, 1].
    Estimates tr(Sigma_mu) / (tr(Sigma_mu) + tr(Sigma)) under an additive
    subject-plus-noise model.
    """
    _check_counts(ms.n, ms.s)
    sq = _euclidean_sq(_session_major(ms))
    value, w, b = _i2c2_kernel(sq, ms.n, ms.s)
    return RepeatabilityEstimate(
        "i2c2", value, ms.n, ms.s, ms.l, {"within_mean": w, "between_mean": b}
    )


def pca_first_component(ms: MeasurementSet) -> MeasurementSet:
    """Project every measurement onto the leading principal component.

    All n*s vectors are pooled, centered by their grand mean, and the top
    eigenvector of the pooled sample covariance is taken as the axis; its
    sign is fixed by making the largest-magnitude coordinate positive.
    Returns the scores as a univariate panel with the same labels.
    """
    _check_counts(ms.n, ms.s)
    if ms.l < 2:
        raise DimensionTooSmall(f"projection needs l >= 2 features, got l={ms.l}")
    x = ms.values.reshape(ms.n * ms.s, ms.l)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (ms.n * ms.s - 1)
    try:
        eigvals, eigvecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"covariance eigendecomposition failed: {exc}") from exc
    top = eigvals[-1]
    if not top > 1e-12 * max(1.0, float(np.trace(cov))):
        raise RankDeficient("pooled covariance has no usable leading component")
    axis = eigvecs[:, -1]
    if axis[int(np.argmax(np.abs(axis)))] < 0:
        axis = -axis
    scores = centered @ axis
    return MeasurementSet(
        scores.reshape(ms.n, ms.s, 1), ms.subject_ids, ms.session_ids
    )


def pca_icc(ms: MeasurementSet) -> RepeatabilityEstimate:
    """Intraclass correlation of the leading principal component scores."""
    projected = pca_first_component(ms)
    est = icc_anova(projected)
    detail = dict(est.detail)
    return RepeatabilityEstimate("pca-icc", est.value, ms.n, ms.s, ms.l, detail)


# --- multi-session batch strategies ---------------------------------------------


@dataclass(frozen=True)
class MultiBatchStrategy:
    """How to use s > 2 sessions: which pairing, applied to which base.

    pairing:
        ``first-last``   statistic on the sub-panel of first and last session;
        ``all-batches``  rank estimator on all sessions, or the rank-sum
                         estimator averaged over all unordered session pairs;
        ``first-rest``   average over the pairs (first, t) for t = 2..s.
    base:
        ``dtilde`` or ``drs``.
    """

    pairing: str
    base: str

    def __post_init__(self):
        if self.pairing not in PAIRINGS:
            raise ConfigError(f"unknown pairing {self.pairing!r}, expected one of {PAIRINGS}")
        if self.base not in BASES:
            raise ConfigError(f"unknown base {self.base!r}, expected one of {BASES}")

    @property
    def name(self) -> str:
        return f"{self.base}:{self.pairing}"


def all_strategies() -> tuple[MultiBatchStrategy, ...]:
    """All six pairing-by-base combinations."""
    return tuple(
        MultiBatchStrategy(pairing, base) for base in BASES for pairing in PAIRINGS
    )


def _multibatch_kernel(m: np.ndarray, n: int, s: int, strategy: MultiBatchStrategy) -> float:
    if strategy.base == "drs":
        if strategy.pairing == "first-last":
            return _drs_kernel(m, n, s, 0, s - 1)[0]
        pairs = _drs_all_pairs_kernel(m, n, s)
        if strategy.pairing == "all-batches":
            iu = np.triu_indices(s, k=1)
            return float(pairs[iu].mean())
        return float(pairs[0, 1:].mean())                      # first-rest
    # dtilde base
    if strategy.pairing == "all-batches":
        rank_sum, _ = _dtilde_kernel(m, n, s)
        return _dtilde_from_ranksum(rank_sum, n, s)
    full = m.reshape(s, n, s, n)

    def sub_value(ta: int, tb: int) -> float:
        sub = np.block([
            [full[ta, :, ta, :], full[ta, :, tb, :]],
            [full[tb, :, ta, :], full[tb, :, tb, :]],
        ])
        rank_sum, _ = _dtilde_kernel(sub, n, 2)
        return _dtilde_from_ranksum(rank_sum, n, 2)

    if strategy.pairing == "first-last":
        return sub_value(0, s - 1)
    return float(np.mean([sub_value(0, t) for t in range(1, s)]))


def multibatch_estimate(
    ms: MeasurementSet,
    strategy: MultiBatchStrategy,
    metric: str = "euclidean",
) -> RepeatabilityEstimate:
    """Discriminability of a many-session panel under a batch strategy.

    Every strategy degenerates to its base estimator on the (first, last)
    pair when s = 2.
    """
    _check_counts(ms.n, ms.s)
    dm = pairwise_distances(ms, metric)
    value = _multibatch_kernel(dm.matrix, ms.n, ms.s, strategy)
    return RepeatabilityEstimate(
        strategy.name, value, ms.n, ms.s, ms.l,
        {"pairing": strategy.pairing, "base": strategy.base, "metric": metric},
    )
