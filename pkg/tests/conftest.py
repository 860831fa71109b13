"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from repeatr import MeasurementSet


def random_panel(n: int, s: int, l: int = 1, seed: int = 0, spread: float = 1.0) -> MeasurementSet:
    """Continuous random panel; almost surely tie-free distances."""
    rng = np.random.default_rng(seed)
    return MeasurementSet.from_values(spread * rng.standard_normal((n, s, l)))


def separated_panel(n: int = 2, s: int = 2, l: int = 1, gap: float = 10.0) -> MeasurementSet:
    """Subjects spaced far apart; every within-pair distance beats every
    cross-pair distance, so all repeatability statistics hit their maximum."""
    base = gap * np.arange(n, dtype=np.float64)
    jitter = 0.01 * np.arange(s, dtype=np.float64)
    values = base[:, None, None] + jitter[None, :, None] + np.zeros((n, s, l))
    return MeasurementSet.from_values(values)


@pytest.fixture
def tmp_csv(tmp_path):
    return tmp_path / "panel.csv"
