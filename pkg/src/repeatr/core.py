"""Balanced measurement panels and their file format.

A panel holds one feature vector per (subject, session) cell.  The layout
is always balanced: ``n`` subjects times ``s`` sessions, each cell a
length-``l`` float vector.  Panels travel as long CSV with the header
``subject,session,f1,...,fl``; labels are opaque strings and row order
carries no meaning, so two files with the same cells load to identical
panels.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DuplicateCell,
    MissingCell,
    NonFiniteValue,
    RaggedRow,
    ShapeError,
    TooFewSessions,
    TooFewSubjects,
)

MODELS = ("gaussian-anova", "lognormal-anova", "gaussian-manova", "lognormal-manova")
BATCH_KINDS = ("none", "mean-shift", "scaling")


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Immutable balanced panel of repeated measurements.

    Parameters
    ----------
    values : ndarray, shape (n, s, l)
        Feature vectors, axis order subject, session, feature.
    subject_ids : tuple of str
        One label per subject, in the order of axis 0.
    session_ids : tuple of str
        One label per session, in the order of axis 1.
    """

    values: np.ndarray
    subject_ids: tuple[str, ...]
    session_ids: tuple[str, ...]

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError(f"values must have shape (n, s, l), got {arr.shape}")
        subjects = tuple(str(x) for x in self.subject_ids)
        sessions = tuple(str(x) for x in self.session_ids)
        if arr.shape[0] != len(subjects):
            raise ShapeError(
                f"{len(subjects)} subject ids for {arr.shape[0]} subject rows"
            )
        if arr.shape[1] != len(sessions):
            raise ShapeError(
                f"{len(sessions)} session ids for {arr.shape[1]} session columns"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "subject_ids", subjects)
        object.__setattr__(self, "session_ids", sessions)

    # shape accessors
    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def s(self) -> int:
        return self.values.shape[1]

    @property
    def l(self) -> int:
        return self.values.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, MeasurementSet):
            return NotImplemented
        return (
            self.subject_ids == other.subject_ids
            and self.session_ids == other.session_ids
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )

    @classmethod
    def from_values(
        cls,
        values: np.ndarray,
        subject_ids: tuple[str, ...] | None = None,
        session_ids: tuple[str, ...] | None = None,
    ) -> "MeasurementSet":
        """Wrap an (n, s, l) array, inventing zero-padded labels if absent."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3:
            raise ShapeError(f"values must have shape (n, s, l), got {values.shape}")
        n, s, _ = values.shape
        if subject_ids is None:
            width = max(3, len(str(n)))
            subject_ids = tuple(f"s{i + 1:0{width}d}" for i in range(n))
        if session_ids is None:
            width = max(2, len(str(s)))
            session_ids = tuple(f"t{t + 1:0{width}d}" for t in range(s))
        return cls(values, tuple(subject_ids), tuple(session_ids))

    def subset_sessions(self, indices: tuple[int, ...]) -> "MeasurementSet":
        """Panel restricted to the given session positions, order kept."""
        indices = tuple(int(t) for t in indices)
        for t in indices:
            if not 0 <= t < self.s:
                raise ShapeError(f"session index {t} out of range for s={self.s}")
        if len(set(indices)) != len(indices):
            raise ShapeError("session indices must be distinct")
        return MeasurementSet(
            self.values[:, indices, :],
            self.subject_ids,
            tuple(self.session_ids[t] for t in indices),
        )


def validate(ms: MeasurementSet) -> list[Exception]:
    """Collect every invariant violation of a panel without raising.

    Returns an empty list when the panel is valid.  Each violation is an
    unraised instance of the matching error class, so callers can inspect
    structured fields or raise selectively.
    """
    violations: list[Exception] = []
    if ms.n < 2:
        violations.append(TooFewSubjects(ms.n))
    if ms.s < 2:
        violations.append(TooFewSessions(ms.s))
    if len(set(ms.subject_ids)) != len(ms.subject_ids):
        seen: set[str] = set()
        for sid in ms.subject_ids:
            if sid in seen:
                violations.append(DuplicateCell(sid, "*"))
            seen.add(sid)
    if len(set(ms.session_ids)) != len(ms.session_ids):
        seen = set()
        for tid in ms.session_ids:
            if tid in seen:
                violations.append(DuplicateCell("*", tid))
            seen.add(tid)
    bad = ~np.isfinite(ms.values)
    if bad.any():
        for i, t, j in zip(*np.nonzero(bad)):
            violations.append(
                NonFiniteValue(ms.subject_ids[i], ms.session_ids[t], int(j) + 1)
            )
    return violations


def _feature_columns(l: int) -> list[str]:
    return [f"f{j + 1}" for j in range(l)]


def load_measurements(path: str | Path) -> MeasurementSet:
    """Read a long-format CSV panel.

    The header must be ``subject,session,f1,...,fl``.  Cells are keyed by
    their labels, so row order in the file does not matter; subjects and
    sessions are put in lexicographic label order.  The panel must be
    balanced and every feature value a finite number.

    Raises
    ------
    RaggedRow, NonFiniteValue, DuplicateCell, MissingCell,
    TooFewSubjects, TooFewSessions
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RaggedRow(1, "empty file, expected header subject,session,f1,...") from None
        if len(header) < 3 or header[0] != "subject" or header[1] != "session":
            raise RaggedRow(1, f"bad header {header!r}, expected subject,session,f1,...")
        l = len(header) - 2
        if header[2:] != _feature_columns(l):
            raise RaggedRow(1, f"bad feature columns {header[2:]!r}, expected f1..f{l}")

        cells: dict[tuple[str, str], np.ndarray] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != l + 2:
                raise RaggedRow(lineno, f"expected {l + 2} fields, got {len(row)}")
            subject, session = row[0], row[1]
            vec = np.empty(l, dtype=np.float64)
            for j, field in enumerate(row[2:]):
                try:
                    vec[j] = float(field)
                except ValueError:
                    raise NonFiniteValue(subject, session, j + 1, field) from None
                if not math.isfinite(vec[j]):
                    raise NonFiniteValue(subject, session, j + 1, field)
            key = (subject, session)
            if key in cells:
                raise DuplicateCell(subject, session)
            cells[key] = vec

    subjects = sorted({k[0] for k in cells})
    sessions = sorted({k[1] for k in cells})
    if len(subjects) < 2:
        raise TooFewSubjects(len(subjects))
    if len(sessions) < 2:
        raise TooFewSessions(len(sessions))
    values = np.empty((len(subjects), len(sessions), l), dtype=np.float64)
    for i, subj in enumerate(subjects):
        for t, sess in enumerate(sessions):
            try:
                values[i, t] = cells[(subj, sess)]
            except KeyError:
                raise MissingCell(subj, sess) from None
    return MeasurementSet(values, tuple(subjects), tuple(sessions))


def save_measurements(ms: MeasurementSet, path: str | Path) -> None:
    """Write a panel as long CSV; load(save(ms)) reproduces ms bitwise.

    Floats are written with repr, the shortest string that round-trips
    the exact binary value.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "session"] + _feature_columns(ms.l))
        for i, subj in enumerate(ms.subject_ids):
            for t, sess in enumerate(ms.session_ids):
                writer.writerow([subj, sess] + [repr(float(v)) for v in ms.values[i, t]])


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of a synthetic repeated-measurement scenario.

    ``sigma_sq`` is the session-noise variance, ``sigma_mu_sq`` the
    subject-effect variance; for multivariate models both covariances are
    the compound-symmetry matrix (1-rho)*I + rho*J scaled by these
    variances.  ``batch`` adds a per-session disturbance: ``mean-shift``
    offsets session t (1-based) by t, ``scaling`` inflates the noise
    variance of session t to t*sigma_sq.
    """

    model: str
    sigma_sq: float
    sigma_mu_sq: float
    n: int
    s: int
    l: int = 1
    rho: float = 0.0
    batch: str = "none"
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}, expected one of {MODELS}")
        if self.batch not in BATCH_KINDS:
            raise ConfigError(f"unknown batch kind {self.batch!r}, expected one of {BATCH_KINDS}")
        if not (self.sigma_sq > 0 and math.isfinite(self.sigma_sq)):
            raise ConfigError(f"sigma_sq must be positive and finite, got {self.sigma_sq}")
        if not (self.sigma_mu_sq >= 0 and math.isfinite(self.sigma_mu_sq)):
            raise ConfigError(f"sigma_mu_sq must be non-negative, got {self.sigma_mu_sq}")
        if not 0 <= self.rho < 1:
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if self.n < 2:
            raise ConfigError(f"n must be at least 2, got {self.n}")
        if self.s < 2:
            raise ConfigError(f"s must be at least 2, got {self.s}")
        if self.l < 1:
            raise ConfigError(f"l must be at least 1, got {self.l}")
        univariate = self.model.endswith("-anova")
        if univariate and self.l != 1:
            raise ConfigError(f"model {self.model!r} is univariate, got l={self.l}")
        if not univariate and self.l < 2:
            raise ConfigError(f"model {self.model!r} needs l >= 2, got l={self.l}")
        if self.batch != "none" and self.model != "gaussian-anova":
            raise ConfigError(
                f"batch disturbances are defined for gaussian-anova only, got {self.model!r}"
            )

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)
