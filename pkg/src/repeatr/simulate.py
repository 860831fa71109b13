"""Synthetic panels, Monte Carlo oracles, and the power experiment runner.

Every random quantity is drawn from a generator whose seed is a pure
function of a master seed and the coordinates of the draw (experiment
cell, permutation replicate), so results are bit-identical whatever the
worker count.  See :func:`repeatr.permtest.subseed`.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import MeasurementSet, ScenarioConfig
from .errors import ConfigError
from .estimators import icc_anova
from .permtest import (
    F_TEST_NAME,
    _make_evaluator,
    parametric_f_test,
    permutation_tests,
    statistic_name,
    subseed,
)

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

_CHUNK_ELEMS = 4_000_000


# --- panel generators -------------------------------------------------------


def _compound_symmetry_factor(rho: float, l: int) -> np.ndarray:
    q = (1.0 - rho) * np.eye(l) + rho * np.ones((l, l))
    return np.linalg.cholesky(q)


def _draw_effects(rng: np.random.Generator, cfg: ScenarioConfig, rows: int, sd: float) -> np.ndarray:
    """rows independent effect vectors with scale sd under cfg's model."""
    z = rng.standard_normal((rows, cfg.l))
    if cfg.l > 1:
        z = z @ _compound_symmetry_factor(cfg.rho, cfg.l).T
    g = sd * z
    if cfg.model.startswith("lognormal"):
        return np.exp(g)
    return g


def _base_panel(cfg: ScenarioConfig, seed: int) -> np.ndarray:
    """x_it = mu_i + e_it draws; mu first, then e, row-major."""
    rng = np.random.default_rng(seed)
    mu = _draw_effects(rng, cfg, cfg.n, np.sqrt(cfg.sigma_mu_sq))
    e = _draw_effects(rng, cfg, cfg.n * cfg.s, np.sqrt(cfg.sigma_sq))
    return mu[:, None, :] + e.reshape(cfg.n, cfg.s, cfg.l)


def gen_gaussian_anova(cfg: ScenarioConfig, seed: int | None = None) -> MeasurementSet:
    """Univariate Gaussian panel x_it = mu_i + e_it.

    mu_i ~ N(0, sigma_mu_sq) i.i.d. across subjects, e_it ~ N(0, sigma_sq)
    i.i.d. across subjects and sessions; the grand mean is fixed at zero.
    """
    if cfg.model != "gaussian-anova" or cfg.batch != "none":
        raise ConfigError(f"expected a batch-free gaussian-anova config, got {cfg.model}/{cfg.batch}")
    return MeasurementSet.from_values(_base_panel(cfg, cfg.seed if seed is None else seed))


def gen_gaussian_manova(cfg: ScenarioConfig, seed: int | None = None) -> MeasurementSet:
    """Multivariate Gaussian panel with compound-symmetry covariances.

    mu_i ~ N(0, sigma_mu_sq Q), e_it ~ N(0, sigma_sq Q) with
    Q = (1 - rho) I + rho J, sampled through the lower triangular factor
    of Q.
    """
    if cfg.model != "gaussian-manova":
        raise ConfigError(f"expected a gaussian-manova config, got {cfg.model!r}")
    return MeasurementSet.from_values(_base_panel(cfg, cfg.seed if seed is None else seed))


def gen_lognormal(cfg: ScenarioConfig, seed: int | None = None) -> MeasurementSet:
    """Heavy-tailed panel: subject effect and noise are exponentiated.

    Univariate: x_it = exp(g_i) + exp(h_it) with g_i ~ N(0, sigma_mu_sq)
    and h_it ~ N(0, sigma_sq); the noise variance is then
    (exp(sigma_sq) - 1) exp(sigma_sq).  Multivariate: both Gaussian draws
    are exponentiated element-wise before summing.
    """
    if not cfg.model.startswith("lognormal"):
        raise ConfigError(f"expected a lognormal config, got {cfg.model!r}")
    return MeasurementSet.from_values(_base_panel(cfg, cfg.seed if seed is None else seed))


def gen_batch(cfg: ScenarioConfig, seed: int | None = None) -> MeasurementSet:
    """Gaussian univariate panel with a per-session batch disturbance.

    ``mean-shift`` adds the offset t to every measurement of session t
    (1-based) for t >= 2; ``scaling`` inflates the session-t noise
    variance to t * sigma_sq for t >= 2.  Session 1 is the undisturbed
    reference batch.
    """
    if cfg.batch == "none":
        raise ConfigError("gen_batch needs batch = mean-shift or scaling")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    mu = np.sqrt(cfg.sigma_mu_sq) * rng.standard_normal(cfg.n)
    e = np.sqrt(cfg.sigma_sq) * rng.standard_normal((cfg.n, cfg.s))
    sessions = np.arange(1, cfg.s + 1, dtype=np.float64)
    if cfg.batch == "mean-shift":
        shift = np.where(sessions >= 2, sessions, 0.0)
        values = mu[:, None] + shift[None, :] + e
    else:
        scale = np.sqrt(np.where(sessions >= 2, sessions, 1.0))
        values = mu[:, None] + scale[None, :] * e
    return MeasurementSet.from_values(values[:, :, None])


def generate_panel(cfg: ScenarioConfig, seed: int | None = None) -> MeasurementSet:
    """Draw one panel from whichever generator the config selects."""
    if cfg.batch != "none":
        return gen_batch(cfg, seed)
    if cfg.model == "gaussian-anova":
        return gen_gaussian_anova(cfg, seed)
    if cfg.model == "gaussian-manova":
        return gen_gaussian_manova(cfg, seed)
    return gen_lognormal(cfg, seed)


# --- Monte Carlo oracles ------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloEstimate:
    """A simulated probability with its binomial standard error."""

    value: float
    se: float
    reps: int


def _draw_chunks(reps: int, l: int, draws: int) -> list[int]:
    chunk = max(1, _CHUNK_ELEMS // (draws * max(1, l)))
    sizes = []
    left = reps
    while left > 0:
        sizes.append(min(chunk, left))
        left -= sizes[-1]
    return sizes


def true_discriminability_mc(
    cfg: ScenarioConfig, reps: int = 100_000, seed: int | None = None
) -> MonteCarloEstimate:
    """Population discriminability of a batch-free model, by simulation.

    Each replicate draws one fresh triple: two measurements of a subject
    and one of another subject, then scores the event that the
    within-subject euclidean distance is strictly smaller.  Returns the
    hit fraction and its binomial standard error.
    """
    if cfg.batch != "none":
        raise ConfigError(
            "the discriminability oracle is defined for batch-free models; "
            "compare against the batch-free version of the scenario"
        )
    if reps < 1:
        raise ConfigError(f"reps must be at least 1, got {reps}")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    sd_mu = np.sqrt(cfg.sigma_mu_sq)
    sd_e = np.sqrt(cfg.sigma_sq)
    hits = 0
    for c in _draw_chunks(reps, cfg.l, 5):
        mu_self = _draw_effects(rng, cfg, c, sd_mu)
        mu_other = _draw_effects(rng, cfg, c, sd_mu)
        e1 = _draw_effects(rng, cfg, c, sd_e)
        e2 = _draw_effects(rng, cfg, c, sd_e)
        e3 = _draw_effects(rng, cfg, c, sd_e)
        probe = mu_self + e1
        within = np.linalg.norm(probe - (mu_self + e2), axis=1)
        cross = np.linalg.norm(probe - (mu_other + e3), axis=1)
        hits += int((within < cross).sum())
    p = hits / reps
    return MonteCarloEstimate(p, float(np.sqrt(p * (1.0 - p) / reps)), reps)


@dataclass(frozen=True)
class MatchMoments:
    """Joint moments of two match indicators sharing a probe subject."""

    d: float
    rho: float
    reps: int


def match_correlation_mc(
    cfg: ScenarioConfig, reps: int = 100_000, seed: int | None = None
) -> MatchMoments:
    """Mean and correlation of match indicators, by simulation.

    A match indicator compares a subject's within-pair distance with its
    distance to one competitor; two indicators for the same subject share
    the within distance and are therefore positively correlated.  The
    expected fingerprint fraction follows from (d, rho) and the subject
    count alone.
    """
    if cfg.batch != "none":
        raise ConfigError("the match-moment oracle is defined for batch-free models")
    if reps < 2:
        raise ConfigError(f"reps must be at least 2, got {reps}")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    sd_mu = np.sqrt(cfg.sigma_mu_sq)
    sd_e = np.sqrt(cfg.sigma_sq)
    n11 = 0
    n1_first = 0
    n1_second = 0
    for c in _draw_chunks(reps, cfg.l, 7):
        mu_self = _draw_effects(rng, cfg, c, sd_mu)
        mu_p = _draw_effects(rng, cfg, c, sd_mu)
        mu_q = _draw_effects(rng, cfg, c, sd_mu)
        e1 = _draw_effects(rng, cfg, c, sd_e)
        e2 = _draw_effects(rng, cfg, c, sd_e)
        ep = _draw_effects(rng, cfg, c, sd_e)
        eq = _draw_effects(rng, cfg, c, sd_e)
        probe = mu_self + e1
        within = np.linalg.norm(probe - (mu_self + e2), axis=1)
        i1 = within < np.linalg.norm(probe - (mu_p + ep), axis=1)
        i2 = within < np.linalg.norm(probe - (mu_q + eq), axis=1)
        n11 += int((i1 & i2).sum())
        n1_first += int(i1.sum())
        n1_second += int(i2.sum())
    d = (n1_first + n1_second) / (2.0 * reps)
    if d in (0.0, 1.0):
        return MatchMoments(d, 0.0, reps)
    rho = (n11 / reps - d * d) / (d * (1.0 - d))
    return MatchMoments(d, float(rho), reps)


# --- power experiment ----------------------------------------------------------


@dataclass(frozen=True)
class PowerCell:
    """Summaries for one statistic at one subject count."""

    statistic: str
    n: int
    iterations: int
    power: float
    power_se: float
    estimate_mean: float
    estimate_sd: float
    q05: float
    q25: float
    q50: float
    q75: float
    q95: float


@dataclass(frozen=True)
class PowerResult:
    """All cells of one power experiment plus the resolved settings."""

    scenario: ScenarioConfig
    n_grid: tuple[int, ...]
    statistics: tuple[str, ...]
    iterations: int
    B: int
    alpha: float
    seed: int
    cells: tuple[PowerCell, ...]

    def cell(self, statistic: str, n: int) -> PowerCell:
        for c in self.cells:
            if c.statistic == statistic and c.n == n:
                return c
        raise KeyError(f"no cell for statistic {statistic!r} at n={n}")

    def power(self, statistic: str, n: int) -> float:
        return self.cell(statistic, n).power

    def to_json_dict(self) -> dict:
        return {
            "scenario": {
                "model": self.scenario.model,
                "sigma_sq": self.scenario.sigma_sq,
                "sigma_mu_sq": self.scenario.sigma_mu_sq,
                "rho": self.scenario.rho,
                "l": self.scenario.l,
                "s": self.scenario.s,
                "batch": self.scenario.batch,
            },
            "n_grid": list(self.n_grid),
            "statistics": list(self.statistics),
            "iterations": self.iterations,
            "B": self.B,
            "alpha": self.alpha,
            "seed": self.seed,
            "cells": [
                {
                    "statistic": c.statistic,
                    "n": c.n,
                    "iterations": c.iterations,
                    "power": c.power,
                    "power_se": c.power_se,
                    "estimate_mean": c.estimate_mean,
                    "estimate_sd": c.estimate_sd,
                    "q05": c.q05,
                    "q25": c.q25,
                    "q50": c.q50,
                    "q75": c.q75,
                    "q95": c.q95,
                }
                for c in self.cells
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=False)

    def csv_rows(self) -> list[tuple[str, int, str, float]]:
        """One (statistic, n, field, value) row per summary field."""
        fields = (
            "power", "power_se", "estimate_mean", "estimate_sd",
            "q05", "q25", "q50", "q75", "q95",
        )
        rows = []
        for c in self.cells:
            for f in fields:
                rows.append((c.statistic, c.n, f, getattr(c, f)))
        return rows

    def to_csv(self) -> str:
        lines = ["statistic,n,field,value"]
        for stat, n, f, v in self.csv_rows():
            lines.append(f"{stat},{n},{f},{v!r}")
        return "\n".join(lines) + "\n"


def _run_cell(
    scenario: ScenarioConfig,
    n: int,
    iteration: int,
    perm_stats: tuple,
    use_f_test: bool,
    B: int,
    seed: int,
) -> dict[str, tuple[float, float]]:
    """(estimate, p-value) for every statistic on one simulated panel."""
    cfg = scenario.replace(n=n)
    panel = generate_panel(cfg, seed=subseed(seed, "panel", n, iteration))
    out: dict[str, tuple[float, float]] = {}
    if perm_stats:
        results = permutation_tests(
            panel, list(perm_stats), B=B, seed=subseed(seed, "test", n, iteration)
        )
        for name, res in results.items():
            out[name] = (res.observed, res.p_value)
    if use_f_test:
        p = parametric_f_test(panel)
        f_stat = icc_anova(panel).detail["f_stat"]
        out[F_TEST_NAME] = (float(f_stat), p)
    return out


def run_power_experiment(
    scenario: ScenarioConfig,
    n_grid: tuple[int, ...],
    statistics: tuple,
    iterations: int = 300,
    B: int = 200,
    alpha: float = 0.05,
    seed: int | None = None,
    threads: int = 1,
) -> PowerResult:
    """Estimate power and estimator distributions over a subject grid.

    For every n in the grid and every iteration, one panel is simulated
    and every requested statistic is evaluated and tested: permutation
    statistics share one permutation stream per panel, the pseudo
    statistic ``f-test`` uses the parametric ANOVA p-value.  Cell (n,
    iteration) derives all its randomness from subseed(seed, ..., n,
    iteration); the thread count changes the schedule only, never the
    numbers.
    """
    if iterations < 1:
        raise ConfigError(f"iterations must be at least 1, got {iterations}")
    if not n_grid:
        raise ConfigError("empty n grid")
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if threads < 1:
        raise ConfigError(f"threads must be at least 1, got {threads}")
    n_grid = tuple(int(n) for n in n_grid)
    seed = scenario.seed if seed is None else int(seed)

    use_f_test = False
    perm_stats: list = []
    names: list[str] = []
    for stat in statistics:
        if isinstance(stat, str) and stat.strip().lower() == F_TEST_NAME:
            use_f_test = True
            names.append(F_TEST_NAME)
        else:
            perm_stats.append(stat)
            names.append(statistic_name(stat))
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate statistics in {names}")
    if use_f_test and scenario.l != 1:
        raise ConfigError("f-test needs a univariate scenario")
    # fail fast on statistic/shape mismatches before simulating anything
    for stat in perm_stats:
        _make_evaluator(stat, max(n_grid), scenario.s, scenario.l)

    tasks = [(n, it) for n in n_grid for it in range(iterations)]

    def work(task: tuple[int, int]):
        n, it = task
        return _run_cell(scenario, n, it, tuple(perm_stats), use_f_test, B, seed)

    if threads == 1:
        results = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tasks))

    cells = []
    by_task = dict(zip(tasks, results))
    for name in names:
        for n in n_grid:
            est = np.array([by_task[(n, it)][name][0] for it in range(iterations)])
            pvals = np.array([by_task[(n, it)][name][1] for it in range(iterations)])
            power = float((pvals <= alpha).mean())
            q = np.quantile(est, [0.05, 0.25, 0.50, 0.75, 0.95])
            cells.append(
                PowerCell(
                    statistic=name,
                    n=n,
                    iterations=iterations,
                    power=power,
                    power_se=float(np.sqrt(power * (1.0 - power) / iterations)),
                    estimate_mean=float(est.mean()),
                    estimate_sd=float(est.std(ddof=1)) if iterations > 1 else 0.0,
                    q05=float(q[0]),
                    q25=float(q[1]),
                    q50=float(q[2]),
                    q75=float(q[3]),
                    q95=float(q[4]),
                )
            )
    return PowerResult(
        scenario=scenario,
        n_grid=n_grid,
        statistics=tuple(names),
        iterations=iterations,
        B=B,
        alpha=alpha,
        seed=seed,
        cells=tuple(cells),
    )


# --- experiment config files -----------------------------------------------------

_SCENARIO_KEYS = {"model", "sigma_sq", "sigma_mu_sq", "rho", "l", "s", "batch", "seed"}
_RUNNER_KEYS = {"n", "statistics", "iterations", "B", "alpha"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Scenario plus runner settings, as read from a TOML file."""

    scenario: ScenarioConfig
    n_grid: tuple[int, ...]
    statistics: tuple[str, ...]
    iterations: int = 300
    B: int = 200
    alpha: float = 0.05

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - _SCENARIO_KEYS - _RUNNER_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "model" not in raw:
            raise ConfigError("config needs a model")
        if "sigma_sq" not in raw or "sigma_mu_sq" not in raw:
            raise ConfigError("config needs sigma_sq and sigma_mu_sq")
        if "s" not in raw:
            raise ConfigError("config needs a session count s")
        n_raw = raw.get("n", [20])
        n_grid = tuple(int(v) for v in (n_raw if isinstance(n_raw, list) else [n_raw]))
        if not n_grid:
            raise ConfigError("n grid must not be empty")
        batch = str(raw.get("batch", "none"))
        scenario = ScenarioConfig(
            model=str(raw["model"]),
            sigma_sq=float(raw["sigma_sq"]),
            sigma_mu_sq=float(raw["sigma_mu_sq"]),
            n=min(n_grid),
            s=int(raw["s"]),
            l=int(raw.get("l", 1)),
            rho=float(raw.get("rho", 0.0)),
            batch=batch,
            seed=int(raw.get("seed", 0)),
        )
        if "statistics" in raw:
            statistics = tuple(str(v) for v in raw["statistics"])
        elif batch != "none":
            statistics = tuple(
                f"{base}:{pairing}"
                for base in ("dtilde", "drs")
                for pairing in ("first-last", "all-batches", "first-rest")
            )
        else:
            statistics = ("dtilde", "drs", "fingerprint", "icc")
        return cls(
            scenario=scenario,
            n_grid=n_grid,
            statistics=statistics,
            iterations=int(raw.get("iterations", 300)),
            B=int(raw.get("B", 200)),
            alpha=float(raw.get("alpha", 0.05)),
        )

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            try:
                raw = _toml.load(fh)
            except _toml.TOMLDecodeError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
        return cls.from_dict(raw)

    def to_toml(self) -> str:
        """Resolved config, defaults filled in, same format as the input."""
        sc = self.scenario
        stats = ", ".join(f'"{s}"' for s in self.statistics)
        n_list = ", ".join(str(n) for n in self.n_grid)
        return (
            f'model = "{sc.model}"\n'
            f"sigma_sq = {sc.sigma_sq!r}\n"
            f"sigma_mu_sq = {sc.sigma_mu_sq!r}\n"
            f"rho = {sc.rho!r}\n"
            f"l = {sc.l}\n"
            f"s = {sc.s}\n"
            f'batch = "{sc.batch}"\n'
            f"seed = {sc.seed}\n"
            f"n = [{n_list}]\n"
            f"statistics = [{stats}]\n"
            f"iterations = {self.iterations}\n"
            f"B = {self.B}\n"
            f"alpha = {self.alpha!r}\n"
        )

    def run(self, threads: int = 1) -> PowerResult:
        return run_power_experiment(
            self.scenario,
            self.n_grid,
            self.statistics,
            iterations=self.iterations,
            B=self.B,
            alpha=self.alpha,
            seed=self.scenario.seed,
            threads=threads,
        )
