"""Distance matrices over panels and rank utilities built on them.

The combined distance matrix stacks all n*s measurements session-major:
row ``t*n + i`` is the measurement of subject ``i`` at session ``t``.
Block (t, t') is then the n-by-n matrix of distances from session-t
measurements to session-t' measurements; diagonal blocks compare a
session with itself and have an exactly zero diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MeasurementSet
from .errors import ConstantVector, DimensionTooSmall, ShapeError

METRICS = ("euclidean", "one-minus-pearson")

# row chunk budget for pairwise kernels, in scalar elements
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True, eq=False)
class CombinedDistanceMatrix:
    """All pairwise distances of a panel, session-major layout.

    ``matrix[t*n + i, t2*n + j]`` is the distance between subject i's
    session-t measurement and subject j's session-t2 measurement.
    """

    matrix: np.ndarray
    n: int
    s: int
    metric: str

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != self.n * self.s:
            raise ShapeError(
                f"matrix shape {m.shape} does not match n*s = {self.n * self.s}"
            )
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def block(self, t: int, t2: int) -> np.ndarray:
        """The n-by-n block of distances from session t to session t2."""
        if not (0 <= t < self.s and 0 <= t2 < self.s):
            raise ShapeError(f"session indices ({t}, {t2}) out of range for s={self.s}")
        n = self.n
        return self.matrix[t * n : (t + 1) * n, t2 * n : (t2 + 1) * n]

    def restrict_sessions(self, indices: tuple[int, ...]) -> "CombinedDistanceMatrix":
        """Sub-matrix for a session subset, preserving the given order."""
        indices = tuple(int(t) for t in indices)
        for t in indices:
            if not 0 <= t < self.s:
                raise ShapeError(f"session index {t} out of range for s={self.s}")
        if len(set(indices)) != len(indices):
            raise ShapeError("session indices must be distinct")
        n = self.n
        idx = np.concatenate([np.arange(t * n, (t + 1) * n) for t in indices])
        return CombinedDistanceMatrix(
            self.matrix[np.ix_(idx, idx)], n, len(indices), self.metric
        )


def _session_major(ms: MeasurementSet) -> np.ndarray:
    # (n, s, l) -> (s*n, l) with row t*n + i
    return np.ascontiguousarray(ms.values.transpose(1, 0, 2).reshape(ms.s * ms.n, ms.l))


def _euclidean_sq(x: np.ndarray) -> np.ndarray:
    """Squared euclidean distances, bitwise symmetric, zero diagonal."""
    m = x.shape[0]
    out = np.empty((m, m), dtype=np.float64)
    # difference kernel keeps (i, j) and (j, i) bitwise equal; a Gram-based
    # kernel would not
    step = max(1, _CHUNK_ELEMS // (m * max(1, x.shape[1])))
    for start in range(0, m, step):
        stop = min(m, start + step)
        diff = x[start:stop, None, :] - x[None, :, :]
        out[start:stop] = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(out, 0.0)
    return out


def _pearson_dissimilarity(x: np.ndarray) -> np.ndarray:
    """1 - Pearson correlation across features, for standardized rows."""
    m = x.shape[0]
    out = np.empty((m, m), dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // (m * max(1, x.shape[1])))
    for start in range(0, m, step):
        stop = min(m, start + step)
        prod = x[start:stop, None, :] * x[None, :, :]
        out[start:stop] = 1.0 - np.einsum("ijk->ij", prod)
    np.clip(out, 0.0, None, out=out)
    np.fill_diagonal(out, 0.0)
    return out


def pairwise_distances(ms: MeasurementSet, metric: str = "euclidean") -> CombinedDistanceMatrix:
    """Combined distance matrix of a panel.

    Parameters
    ----------
    ms : MeasurementSet
    metric : {"euclidean", "one-minus-pearson"}
        ``one-minus-pearson`` needs l >= 2 and non-constant vectors; its
        values lie in [0, 2].

    Returns
    -------
    CombinedDistanceMatrix
        Symmetric, non-negative, with an exactly zero diagonal.
    """
    if metric not in METRICS:
        raise ShapeError(f"unknown metric {metric!r}, expected one of {METRICS}")
    x = _session_major(ms)
    if metric == "euclidean":
        d = np.sqrt(_euclidean_sq(x))
    else:
        if ms.l < 2:
            raise DimensionTooSmall(
                f"one-minus-pearson needs l >= 2 features, got l={ms.l}"
            )
        centered = x - x.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(centered, axis=1)
        if not np.all(norms > 0):
            k = int(np.argmin(norms))
            t, i = divmod(k, ms.n)
            raise ConstantVector(ms.subject_ids[i], ms.session_ids[t])
        d = _pearson_dissimilarity(centered / norms[:, None])
    return CombinedDistanceMatrix(d, ms.n, ms.s, metric)


def rank_rows_max_ties(rows: np.ndarray, exclude_self_column: bool = False) -> np.ndarray:
    """Rank every row independently, ties all taking the maximum rank.

    The rank of an entry is the count of entries in its row less than or
    equal to it, so ``[0.3, 0.3, 0.1]`` ranks as ``[3, 3, 1]``.  With
    ``exclude_self_column`` the input must be square; entry (r, r) is
    omitted from row r before ranking and its output position is 0.

    Returns
    -------
    ndarray of int64, same shape as ``rows``.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
        squeeze = True
    else:
        squeeze = False
    if rows.ndim != 2:
        raise ShapeError(f"expected a 2-d array of rows, got shape {rows.shape}")
    nrow, ncol = rows.shape
    if exclude_self_column and nrow != ncol:
        raise ShapeError(
            f"exclude_self_column needs a square matrix, got shape {rows.shape}"
        )
    ranks = np.empty((nrow, ncol), dtype=np.int64)
    if exclude_self_column:
        mask = ~np.eye(nrow, dtype=bool)
        for r in range(nrow):
            others = rows[r, mask[r]]
            order = np.sort(others)
            ranks[r, mask[r]] = np.searchsorted(order, others, side="right")
            ranks[r, r] = 0
    else:
        for r in range(nrow):
            order = np.sort(rows[r])
            ranks[r] = np.searchsorted(order, rows[r], side="right")
    return ranks[0] if squeeze else ranks
