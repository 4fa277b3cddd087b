"""Trial-sequence generation for the four simulation schemes.

Schemes: ``FD`` (fixed design), ``UD`` (up-down design) and their random
intercept variants ``FDr``/``UDr``. Each subject owns one counter-based stream
keyed by ``(seed, replication, subject)``; within it the draw layout is fixed
so trial ``t`` always reads the same stream positions:

    [gaussian z, class uniform, start uniform, (level u_t, response u_t) * T]

Hence two configs that differ only in the effect model see identical uniforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .core import IntensityGrid, SubjectEffect, Theta, logistic_prob
from .designs import FixedDesign, updown_next
from .rng import stream

__all__ = [
    "Dataset",
    "SCHEMES",
    "ScenarioConfig",
    "SubjectData",
    "SufficientCounts",
    "TrialRecord",
    "draw_effect",
    "read_trials_csv",
    "simulate_dataset",
    "simulate_subject",
    "sufficient_counts",
    "write_trials_csv",
]

SCHEMES = ("FD", "FDr", "UD", "UDr")
_DEFAULT_EFFECT = {"FD": "none", "UD": "none", "FDr": "gaussian", "UDr": "gaussian"}


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of a simulation study.

    ``tau`` is the Gaussian intercept sd (``effect_model="gaussian"``) or the
    class-A prevalence (``effect_model="latent"``). Left unset it is 1.0 for
    Gaussian effects and 0.5 for latent classes.
    """

    scheme: str = "FD"
    effect_model: str | None = None
    N: int = 25
    T: int = 25
    d: float = 0.2
    L: int = 10
    a: float = 0.05
    b: float = 9.0
    tau: float | None = None
    A: float = 2.0
    R: int = 1000
    seed: int = 0
    updown_rule: str = "1u1d"
    fd_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.effect_model is None:
            object.__setattr__(self, "effect_model", _DEFAULT_EFFECT[self.scheme])
        if self.tau is None:
            object.__setattr__(self, "tau", 0.5 if self.effect_model == "latent" else 1.0)
        random_effect = self.scheme.endswith("r")
        if random_effect and self.effect_model not in ("gaussian", "latent"):
            raise ValueError(f"scheme {self.scheme} needs a gaussian or latent effect model")
        if not random_effect and self.effect_model != "none":
            raise ValueError(f"scheme {self.scheme} has no random effect")
        for name in ("N", "T", "L", "R"):
            v = getattr(self, name)
            if int(v) != v or v < (0 if name in ("N", "R") else 1):
                raise ValueError(f"{name} must be a positive integer, got {v}")
        if self.effect_model == "gaussian" and self.tau < 0:
            raise ValueError("gaussian tau (sd) must be >= 0")
        if self.effect_model == "latent":
            if not 0.0 <= self.tau <= 1.0:
                raise ValueError("latent tau (prevalence) must lie in [0, 1]")
            if not self.A > 0:
                raise ValueError("latent offset A must be positive")
        if self.updown_rule not in ("1u1d", "1u2d"):
            raise ValueError("updown_rule must be '1u1d' or '1u2d'")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.fd_weights is not None and len(self.fd_weights) != self.L:
            raise ValueError("fd_weights must have L entries")
        IntensityGrid(self.d, self.L)

    @property
    def theta(self) -> Theta:
        return Theta(self.a, self.b)

    @property
    def grid(self) -> IntensityGrid:
        return IntensityGrid(self.d, self.L)

    @property
    def design(self) -> FixedDesign:
        if self.fd_weights is None:
            return FixedDesign.uniform(self.L)
        return FixedDesign(np.asarray(self.fd_weights, dtype=float))

    @property
    def adaptive(self) -> bool:
        return self.scheme.startswith("UD")

    def replace(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class TrialRecord(NamedTuple):
    subject: int
    t: int
    level: int
    intensity: float
    response: int


@dataclass(frozen=True)
class SubjectData:
    """One subject's trials. ``effect`` is kept for oracle checks only."""

    subject: int
    levels: np.ndarray
    responses: np.ndarray
    grid: IntensityGrid
    effect: SubjectEffect = field(default_factory=SubjectEffect)

    @property
    def T(self) -> int:
        return self.levels.size

    @property
    def intensities(self) -> np.ndarray:
        return self.grid.intensity(self.levels)

    @property
    def records(self) -> list[TrialRecord]:
        x = self.intensities
        return [
            TrialRecord(self.subject, t + 1, int(lv), float(x[t]), int(y))
            for t, (lv, y) in enumerate(zip(self.levels, self.responses))
        ]


@dataclass(frozen=True)
class Dataset:
    """``N`` subjects by ``T`` trials, stored as level/response matrices.

    Iterating yields :class:`SubjectData`. ``effects`` holds the realized
    intercept shifts; estimators must not read it.
    """

    levels: np.ndarray
    responses: np.ndarray
    grid: IntensityGrid
    effects: np.ndarray
    effect_kind: str = "none"
    effect_tau: float = 0.0
    effect_A: float = 0.0

    @property
    def N(self) -> int:
        return self.levels.shape[0]

    @property
    def T(self) -> int:
        return self.levels.shape[1]

    def __len__(self) -> int:
        return self.N

    def __getitem__(self, i: int) -> SubjectData:
        eff = SubjectEffect(self.effect_kind, float(self.effects[i]), self.effect_tau, self.effect_A) \
            if self.effect_kind != "none" else SubjectEffect()
        return SubjectData(i + 1, self.levels[i], self.responses[i], self.grid, eff)

    def __iter__(self) -> Iterator[SubjectData]:
        return (self[i] for i in range(self.N))

    @property
    def intensities(self) -> np.ndarray:
        return self.grid.step * self.levels


@dataclass(frozen=True)
class SufficientCounts:
    """Per-subject trial counts ``Tis`` and correct counts ``mis`` (shape N x L)."""

    Tis: np.ndarray
    mis: np.ndarray

    @property
    def Ts(self) -> np.ndarray:
        return self.Tis.sum(axis=0)

    @property
    def ms(self) -> np.ndarray:
        return self.mis.sum(axis=0)

    @property
    def N(self) -> int:
        return self.Tis.shape[0]

    @property
    def L(self) -> int:
        return self.Tis.shape[1]


def sufficient_counts(data: Dataset) -> SufficientCounts:
    N, L = data.N, data.grid.L
    idx = (np.arange(N)[:, None] * L + data.levels - 1).ravel()
    Tis = np.bincount(idx, minlength=N * L).reshape(N, L)
    mis = np.bincount(idx, weights=data.responses.ravel(), minlength=N * L).reshape(N, L)
    return SufficientCounts(Tis, mis.astype(np.int64))


def _effect_from_draws(config: ScenarioConfig, z: float, u: float) -> SubjectEffect:
    kind = config.effect_model
    if kind == "gaussian":
        return SubjectEffect("gaussian", config.tau * z, tau=config.tau)
    if kind == "latent":
        return SubjectEffect("latent", config.A if u < config.tau else 0.0, tau=config.tau, A=config.A)
    return SubjectEffect()


def draw_effect(config: ScenarioConfig, rng: np.random.Generator) -> SubjectEffect:
    """Consume the two effect draws from ``rng`` and build the subject effect."""
    z = rng.standard_normal()
    u = rng.random()
    return _effect_from_draws(config, z, u)


def _simulate_block(config: ScenarioConfig, alphas: np.ndarray, u_start: np.ndarray,
                    u_trials: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized core: ``u_trials`` has shape (N, T, 2)."""
    N, T = u_trials.shape[:2]
    L = config.L
    grid = config.grid
    theta = config.theta
    levels = np.empty((N, T), dtype=np.int64)
    responses = np.empty((N, T), dtype=np.int64)
    if N == 0:
        return levels, responses
    start = np.minimum((u_start * L).astype(np.int64) + 1, L)
    if not config.adaptive:
        levels[:] = config.design.levels_from_uniforms(u_trials[:, :, 0])
        levels[:, 0] = start
        p = logistic_prob(theta, alphas[:, None], grid.step * levels)
        responses[:] = u_trials[:, :, 1] < p
        return levels, responses
    lev = start
    streak = np.zeros(N, dtype=np.int64)
    for t in range(T):
        levels[:, t] = lev
        p = logistic_prob(theta, alphas, grid.step * lev)
        y = (u_trials[:, t, 1] < p).astype(np.int64)
        responses[:, t] = y
        if config.updown_rule == "1u1d":
            lev = updown_next(lev, y, L)
        else:
            down = (y == 1) & (streak == 1)
            lev = np.where(y == 0, np.minimum(lev + 1, L), np.where(down, np.maximum(lev - 1, 1), lev))
            streak = np.where((y == 1) & (streak == 0), 1, 0)
    return levels, responses


def _trial_uniforms(rng: np.random.Generator, T: int) -> tuple[float, np.ndarray]:
    u_start = rng.random()
    return u_start, rng.random((T, 2))


def simulate_subject(config: ScenarioConfig, effect: SubjectEffect, rng: np.random.Generator,
                     subject: int = 1) -> SubjectData:
    """Simulate ``T`` trials for one subject with a realized ``effect``."""
    u_start, u = _trial_uniforms(rng, config.T)
    levels, responses = _simulate_block(
        config, np.array([effect.value]), np.array([u_start]), u[None]
    )
    return SubjectData(subject, levels[0], responses[0], config.grid, effect)


def simulate_dataset(config: ScenarioConfig, replication: int = 0,
                     rng: np.random.Generator | None = None) -> Dataset:
    """Simulate ``N`` independent subjects.

    By default subject ``i`` uses stream ``(config.seed, replication, i)``. If
    ``rng`` is given all subjects draw from it sequentially instead.
    """
    N, T = config.N, config.T
    alphas = np.zeros(N)
    u_start = np.empty(N)
    u_trials = np.empty((N, T, 2))
    for i in range(N):
        g = rng if rng is not None else stream(config.seed, replication, i)
        alphas[i] = draw_effect(config, g).value
        u_start[i], u_trials[i] = _trial_uniforms(g, T)
    levels, responses = _simulate_block(config, alphas, u_start, u_trials)
    return Dataset(
        levels, responses, config.grid, alphas,
        effect_kind=config.effect_model,
        effect_tau=config.tau if config.effect_model != "none" else 0.0,
        effect_A=config.A if config.effect_model == "latent" else 0.0,
    )


TRIAL_FIELDS = ("subject", "t", "level", "intensity", "response")


def write_trials_csv(data: Dataset | Sequence[SubjectData], path, include_alpha: bool = False) -> None:
    """Write trial data; the ``alpha`` column is an oracle-only extra."""
    header = list(TRIAL_FIELDS) + (["alpha"] if include_alpha else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        alphas = data.effects if isinstance(data, Dataset) else [s.effect.value for s in data]
        for subj, alpha in zip(data, alphas):
            for rec in subj.records:
                row = [rec.subject, rec.t, rec.level, repr(rec.intensity), rec.response]
                if include_alpha:
                    row.append(repr(float(alpha)))
                w.writerow(row)


def read_trials_csv(path, L: int | None = None) -> Dataset:
    """Read a trial CSV back into a :class:`Dataset`.

    The grid step is recovered from ``intensity / level``; ``L`` defaults to
    the largest observed level.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRIAL_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"trial CSV missing columns: {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise ValueError("trial CSV has no rows")
    subj = np.array([int(r["subject"]) for r in rows])
    t = np.array([int(r["t"]) for r in rows])
    lev = np.array([int(r["level"]) for r in rows])
    x = np.array([float(r["intensity"]) for r in rows])
    y = np.array([int(r["response"]) for r in rows])
    if not set(np.unique(y)) <= {0, 1}:
        raise ValueError("responses must be 0 or 1")
    has_alpha = "alpha" in (rows[0].keys())
    alpha = np.array([float(r["alpha"]) for r in rows]) if has_alpha else np.zeros(len(rows))
    step = x / lev
    if not np.allclose(step, step[0], rtol=1e-9):
        raise ValueError("intensities are not a multiple of a common grid step")
    step0 = float(step[0])
    L = int(lev.max()) if L is None else L
    ids = np.unique(subj)
    T = int(np.sum(subj == ids[0]))
    order = np.lexsort((t, subj))
    if len(rows) != ids.size * T:
        raise ValueError("all subjects must have the same number of trials")
    levels = lev[order].reshape(ids.size, T)
    responses = y[order].reshape(ids.size, T)
    effects = alpha[order].reshape(ids.size, T)[:, 0]
    grid = _grid_for_step(step0, L)
    return Dataset(levels, responses, grid, effects)


def _grid_for_step(step: float, L: int) -> IntensityGrid:
    # pick d so that d / L reproduces the recorded step bit-for-bit
    d = step * L
    for _ in range(8):
        g = IntensityGrid(d, L)
        if g.step == step:
            return g
        d = np.nextafter(d, np.inf if g.step < step else -np.inf)
    return IntensityGrid(step * L, L)


def run_replications(config: ScenarioConfig, estimators=None, **kwargs):
    """Simulate and fit ``config.R`` replications; see :func:`adaptive_bias.study.run_replications`."""
    from .study import run_replications as _run

    return _run(config, estimators, **kwargs)
