"""Stimulus-allocation rules and the analytic intensity pmf recursion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "FixedDesign",
    "LatticePmf",
    "UpDownState",
    "WindowTooSmallError",
    "one_up_two_down_next",
    "sample_fixed",
    "updown_next",
    "updown_pmf",
    "updown_pmf_step",
    "updown_walks",
]

TAIL_TOL = 1e-9


class WindowTooSmallError(RuntimeError):
    """Probability mass escaped the finite lattice window."""


@dataclass(frozen=True)
class FixedDesign:
    """Response-independent allocation: level ``k`` (1-based) drawn w.p. ``weights[k-1]``."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-d vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, L: int) -> "FixedDesign":
        return cls(np.full(L, 1.0 / L))

    @property
    def L(self) -> int:
        return self.weights.size

    def levels_from_uniforms(self, u):
        """Inverse-CDF map from uniforms in [0, 1) to levels 1..L."""
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, np.asarray(u), side="right") + 1


def sample_fixed(design: FixedDesign, rng: np.random.Generator) -> int:
    return int(design.levels_from_uniforms(rng.random()))


def updown_next(level, response, L: int):
    """Next level of the one-up-one-down rule.

    A correct response (1) steps the level down, an incorrect one steps it up;
    the result is clamped to ``1..L``. Vectorizes over arrays.
    """
    level = np.asarray(level)
    if np.any((level < 1) | (level > L)):
        raise ValueError(f"level outside 1..{L}")
    candidate = level - (2 * np.asarray(response) - 1)
    out = np.clip(candidate, 1, L)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class UpDownState:
    current_level: int
    consecutive_correct: int = 0


def one_up_two_down_next(state: UpDownState, response: int, L: int) -> UpDownState:
    """Step down only after two consecutive correct responses; targets accuracy 1/sqrt(2)."""
    lev = state.current_level
    if not 1 <= lev <= L:
        raise ValueError(f"level outside 1..{L}")
    if not response:
        return UpDownState(min(lev + 1, L), 0)
    if state.consecutive_correct == 0:
        return UpDownState(lev, 1)
    return UpDownState(max(lev - 1, 1), 0)


@dataclass(frozen=True)
class LatticePmf:
    """Probability mass on the integer window ``lo, lo+1, ..., lo+len(p)-1``."""

    lo: int
    p: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.lo, self.lo + self.p.size)

    def __getitem__(self, s: int) -> float:
        k = s - self.lo
        return float(self.p[k]) if 0 <= k < self.p.size else 0.0

    @classmethod
    def delta(cls, s0: int, half_width: int) -> "LatticePmf":
        p = np.zeros(2 * half_width + 1)
        p[half_width] = 1.0
        return cls(s0 - half_width, p)


def updown_pmf_step(f_prev: LatticePmf, F: Callable[[np.ndarray], np.ndarray]) -> LatticePmf:
    """One step of the unbounded-lattice recursion for the up-down intensity pmf.

    ``f_t(s) = F(s+1) f_{t-1}(s+1) + (1 - F(s-1)) f_{t-1}(s-1)``; no clamping.
    ``F`` maps lattice points to success probabilities.
    """
    s = f_prev.support
    q = np.asarray(F(s), dtype=float)
    down = q * f_prev.p  # mass moving s -> s-1
    up = (1.0 - q) * f_prev.p  # mass moving s -> s+1
    escaped = down[0] + up[-1]
    if escaped > TAIL_TOL:
        raise WindowTooSmallError(f"{escaped:.3g} mass left the window [{s[0]}, {s[-1]}]")
    p = np.zeros_like(f_prev.p)
    p[:-1] += down[1:]
    p[1:] += up[:-1]
    return LatticePmf(f_prev.lo, p)


def updown_pmf(T: int, F, start: LatticePmf | None = None, *, L: int | None = None,
               half_width: int | None = None) -> LatticePmf:
    """Pmf of the intensity at trial ``T`` on the unbounded lattice.

    The default start is uniform over ``1..L``; the window extends
    ``half_width`` (default ``4*T``) beyond the start support.
    """
    if start is None:
        if L is None:
            raise ValueError("need either start or L")
        hw = 4 * T if half_width is None else half_width
        p = np.zeros(L + 2 * hw)
        p[hw:hw + L] = 1.0 / L
        start = LatticePmf(1 - hw, p)
    f = start
    for _ in range(T - 1):
        f = updown_pmf_step(f, F)
    return f


def updown_walks(n: int, T: int, F, rng: np.random.Generator, *, L: int,
                 clamp: bool = True) -> np.ndarray:
    """Simulate ``n`` independent one-up-one-down walks of ``T`` trials.

    Starts are uniform on ``1..L``. With ``clamp=False`` the walk runs on the
    unbounded integer lattice and ``F`` is evaluated wherever it goes. Returns
    the ``(n, T)`` array of levels.
    """
    levels = np.empty((n, T), dtype=np.int64)
    levels[:, 0] = rng.integers(1, L + 1, size=n)
    for t in range(1, T):
        prev = levels[:, t - 1]
        y = (rng.random(n) < F(prev)).astype(np.int64)
        levels[:, t] = updown_next(prev, y, L) if clamp else prev - (2 * y - 1)
    return levels
