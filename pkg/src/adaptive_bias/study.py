"""Replicated fits, scenario summaries and the full simulation grid.

Replication ``r`` of a scenario simulates from streams keyed by
``(seed, r, subject)`` and estimators needing their own randomness draw from
``(seed, r, EM_STREAM)``. Results are ordered by replication index, so tables do
not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bias import summarize
from .estimators import FitError, default_estimators, run_estimator, truths
from .rng import stream
from .sim import SCHEMES, ScenarioConfig, simulate_dataset

__all__ = [
    "EstimateRow",
    "EstimateTable",
    "PLOT_FIELDS",
    "SUMMARY_FIELDS",
    "SummaryRow",
    "StudyGrid",
    "TABLE2_SETUPS",
    "plot_rows",
    "run_replications",
    "run_study",
    "summarize_table",
    "write_plot_csv",
    "write_summary_csv",
]

EM_STREAM = 2**32  # subject indices never reach this key
SUMMARY_FIELDS = ("scenario_id", "scheme", "estimator", "param", "truth", "absBias", "relBias",
                  "SE", "RMSE", "R_effective")
PLOT_FIELDS = ("scheme", "N", "T", "param", "measure", "value")

# (N, T) for setups 1..12; the remaining parameters are ScenarioConfig defaults
TABLE2_SETUPS: tuple[tuple[int, int], ...] = tuple(
    (n, t) for n in (25, 50, 100) for t in (25, 50, 75, 100)
)


@dataclass(frozen=True)
class EstimateRow:
    replication: int
    estimator: str
    param: str
    estimate: float
    se: float
    converged: bool
    error: str = ""


@dataclass
class EstimateTable:
    config: ScenarioConfig
    rows: list[EstimateRow] = field(default_factory=list)

    def estimators(self) -> list[str]:
        return list(dict.fromkeys(r.estimator for r in self.rows))

    def params(self, estimator: str) -> list[str]:
        return list(dict.fromkeys(r.param for r in self.rows if r.estimator == estimator))

    def column(self, estimator: str, param: str) -> tuple[np.ndarray, np.ndarray]:
        """Estimates and convergence flags ordered by replication."""
        sel = [r for r in self.rows if r.estimator == estimator and r.param == param]
        return (np.array([r.estimate for r in sel], float),
                np.array([r.converged for r in sel], bool))


def _fit_rows(config: ScenarioConfig, r: int, estimators: Sequence[str], options: dict) -> list[EstimateRow]:
    data = simulate_dataset(config, r)
    rows = []
    for name in estimators:
        opts = dict(options.get(name, {}))
        if name == "latent_em":
            opts.setdefault("A", config.A)
            opts.setdefault("rng", stream(config.seed, r, EM_STREAM))
        params = list(truths(config, name))
        try:
            with np.errstate(all="ignore"):
                fit = run_estimator(name, data, **opts)
        except (FitError, np.linalg.LinAlgError, FloatingPointError) as exc:
            msg = f"{type(exc).__name__}: {exc}"
            rows += [EstimateRow(r, name, p, math.nan, math.nan, False, msg) for p in params or ["a"]]
            continue
        for p in params or list(fit.estimates):
            rows.append(EstimateRow(r, name, p, float(fit.estimates.get(p, math.nan)),
                                    float(fit.standard_errors.get(p, math.nan)), bool(fit.converged)))
    return rows


def _fit_chunk(args) -> list[EstimateRow]:
    config, reps, estimators, options = args
    out = []
    for r in reps:
        out += _fit_rows(config, r, estimators, options)
    return out


def run_replications(config: ScenarioConfig, estimators: Sequence[str] | None = None, *,
                     threads: int = 1, options: dict | None = None,
                     executor: Executor | None = None, chunk: int = 25) -> EstimateTable:
    """Simulate and fit ``config.R`` replications.

    ``options`` maps estimator name to keyword options. Fits that fail are
    recorded as non-converged NaN rows with the error message. ``threads``
    worker processes are used unless an ``executor`` is supplied.
    """
    estimators = list(estimators or default_estimators(config.scheme))
    options = options or {}
    chunks = [(config, range(i, min(i + chunk, config.R)), estimators, options)
              for i in range(0, config.R, chunk)]
    table = EstimateTable(config)
    if executor is None and threads <= 1:
        for c in chunks:
            table.rows += _fit_chunk(c)
        return table
    own = executor is None
    ex = executor or ProcessPoolExecutor(max_workers=threads)
    try:
        for rows in ex.map(_fit_chunk, chunks):
            table.rows += rows
    finally:
        if own:
            ex.shutdown()
    return table


@dataclass(frozen=True)
class SummaryRow:
    scenario_id: str
    scheme: str
    estimator: str
    param: str
    truth: float
    absBias: float
    relBias: float
    SE: float
    RMSE: float
    R_effective: int
    N: int = 0
    T: int = 0

    def csv_values(self) -> list[str]:
        return [self.scenario_id, self.scheme, self.estimator, self.param, _fmt(self.truth),
                _fmt(self.absBias), _fmt(self.relBias), _fmt(self.SE), _fmt(self.RMSE),
                str(self.R_effective)]


def _fmt(x: float) -> str:
    return "NA" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def summarize_table(table: EstimateTable, scenario_id: str = "") -> list[SummaryRow]:
    """One summary per (estimator, parameter) with a finite truth."""
    cfg = table.config
    out = []
    for est in table.estimators():
        truth = truths(cfg, est)
        for p in table.params(est):
            t = truth.get(p, math.nan)
            if not math.isfinite(t):
                continue
            x, ok = table.column(est, p)
            if np.sum(ok & np.isfinite(x)) < 2:
                out.append(SummaryRow(scenario_id, cfg.scheme, est, p, t, math.nan, math.nan,
                                      math.nan, math.nan, int(np.sum(ok)), cfg.N, cfg.T))
                continue
            s = summarize(x, t, ok)
            out.append(SummaryRow(scenario_id, cfg.scheme, est, p, t, s.absBias, s.relBias,
                                  s.SE, s.RMSE, s.R_effective, cfg.N, cfg.T))
    return out


@dataclass(frozen=True)
class StudyGrid:
    """Scenarios keyed by unique ids, sharing one global seed."""

    scenarios: tuple[tuple[str, ScenarioConfig], ...]
    seed: int = 0

    def __post_init__(self):
        ids = [i for i, _ in self.scenarios]
        if len(set(ids)) != len(ids):
            raise ValueError("scenario ids must be unique")

    def __len__(self) -> int:
        return len(self.scenarios)

    @classmethod
    def table2(cls, seed: int = 0, R: int = 1000, setups: Iterable[int] = range(1, 13),
               schemes: Sequence[str] = SCHEMES, **overrides) -> "StudyGrid":
        """Setups ``1..12`` (N, T pairs of the standard grid) crossed with ``schemes``.

        Every scenario uses the same ``seed``; ``overrides`` replace shared
        parameters such as ``a`` or ``tau``.
        """
        out = []
        for k in setups:
            if not 1 <= k <= len(TABLE2_SETUPS):
                raise ValueError(f"setup must be in 1..{len(TABLE2_SETUPS)}, got {k}")
            n, t = TABLE2_SETUPS[k - 1]
            for sch in schemes:
                cfg = ScenarioConfig(scheme=sch, N=n, T=t, R=R, seed=seed, **overrides)
                out.append((f"{k:02d}-{sch}", cfg))
        return cls(tuple(out), seed)


def run_study(grid: StudyGrid, *, threads: int = 1, estimators: dict | None = None,
              options: dict | None = None, out_dir=None, progress=None) -> list[SummaryRow]:
    """Run every scenario of ``grid`` and return the concatenated summaries.

    ``estimators`` optionally maps scheme to estimator names. With ``out_dir``
    each scenario's summary is also written atomically to
    ``<out_dir>/<scenario_id>.csv`` as soon as it finishes.
    """
    rows: list[SummaryRow] = []
    ex = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for sid, cfg in grid.scenarios:
            names = (estimators or {}).get(cfg.scheme) or default_estimators(cfg.scheme)
            table = run_replications(cfg, names, options=options, executor=ex)
            block = summarize_table(table, sid)
            if out_dir is not None:
                write_summary_csv(block, os.path.join(out_dir, f"{sid}.csv"))
            rows += block
            if progress is not None:
                progress(sid)
    finally:
        if ex is not None:
            ex.shutdown()
    return rows


def _atomic_csv(path, header, lines) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(lines)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    _atomic_csv(path, SUMMARY_FIELDS, [r.csv_values() for r in rows])


def plot_rows(rows: Sequence[SummaryRow]) -> list[tuple]:
    """Long-format (scheme, N, T, param, measure, value) records for relBias and RMSE."""
    out = []
    for r in rows:
        for measure, v in (("relBias", r.relBias), ("RMSE", r.RMSE)):
            out.append((r.scheme, r.N, r.T, r.param, measure, v))
    return out


def write_plot_csv(rows: Sequence[SummaryRow], path) -> None:
    lines = [(s, str(n), str(t), p, m, _fmt(v)) for s, n, t, p, m, v in plot_rows(rows)]
    _atomic_csv(path, PLOT_FIELDS, lines)
