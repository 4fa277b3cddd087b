"""Psychometric-function models, parameter types and intensity grids.

Intensity levels are integer indices ``1..L``; real intensities come from an
:class:`IntensityGrid`. All functions here are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import expit

__all__ = [
    "DegenerateSlopeError",
    "IntensityGrid",
    "LatentClassParams",
    "P_MAX",
    "P_MIN",
    "SubjectEffect",
    "Theta",
    "ed50",
    "logistic_prob",
    "logit",
    "make_latent_probs",
    "marginal_latent_prob",
]

# saturation bounds for probabilities; keeps every log finite
P_MIN = 1e-300
P_MAX = float(np.nextafter(1.0, 0.0))


class DegenerateSlopeError(ValueError):
    """Raised when a quantity needs a nonzero slope."""


@dataclass(frozen=True)
class Theta:
    """Intercept ``a`` and slope ``b`` of the logistic curve (logit scale)."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError(f"Theta must be finite, got a={self.a}, b={self.b}")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b], dtype=float)


@dataclass(frozen=True)
class IntensityGrid:
    """Equidistant stimulus set ``d/L, 2d/L, ..., d``."""

    d: float
    L: int

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"maximum intensity d must be positive, got {self.d}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"level count L must be a positive integer, got {self.L}")

    @property
    def step(self) -> float:
        return self.d / self.L

    @property
    def values(self) -> np.ndarray:
        return self.step * np.arange(1, self.L + 1, dtype=float)

    @property
    def levels(self) -> np.ndarray:
        return np.arange(1, self.L + 1)

    def intensity(self, level):
        """Map level index (1-based, scalar or array) to intensity."""
        level = np.asarray(level)
        if np.any((level < 1) | (level > self.L)):
            raise IndexError(f"level outside 1..{self.L}")
        out = self.step * level.astype(float)
        return float(out) if out.ndim == 0 else out

    def level_of(self, intensity) -> np.ndarray | int:
        """Inverse of :meth:`intensity`; rounds to the nearest level."""
        x = np.asarray(intensity, dtype=float)
        lev = np.rint(x / self.step).astype(int)
        if np.any((lev < 1) | (lev > self.L)) or not np.allclose(
            lev * self.step, x, rtol=1e-9, atol=1e-12
        ):
            raise ValueError("intensity not on grid")
        return int(lev) if lev.ndim == 0 else lev


EffectKind = Literal["none", "gaussian", "latent"]


@dataclass(frozen=True)
class SubjectEffect:
    """A subject-level intercept shift and the model it was drawn from.

    ``tau`` is the standard deviation for ``kind="gaussian"`` and the class-A
    prevalence for ``kind="latent"``; the two uses never coexist.
    """

    kind: EffectKind = "none"
    value: float = 0.0
    tau: float = 0.0
    A: float = 0.0

    def __post_init__(self):
        if self.kind == "none":
            if self.value != 0.0:
                raise ValueError("effect kind 'none' must have value 0")
        elif self.kind == "gaussian":
            if self.tau < 0:
                raise ValueError("gaussian sd must be >= 0")
        elif self.kind == "latent":
            if not 0.0 <= self.tau <= 1.0:
                raise ValueError("latent prevalence must lie in [0, 1]")
            if not self.A > 0:
                raise ValueError("latent offset A must be positive")
            if self.value not in (0.0, self.A):
                raise ValueError("latent effect value must be 0 or A")
        else:
            raise ValueError(f"unknown effect kind {self.kind!r}")


@dataclass(frozen=True)
class LatentClassParams:
    """Class-conditional accuracies per level plus prevalence of class A.

    ``A`` is a known constant, not an estimated parameter.
    """

    pi0: np.ndarray
    piA: np.ndarray
    tau: float = 0.5
    A: float = 1.0

    def __post_init__(self):
        pi0 = np.array(self.pi0, dtype=float)
        piA = np.array(self.piA, dtype=float)
        if pi0.shape != piA.shape or pi0.ndim != 1:
            raise ValueError("pi0 and piA must be 1-d arrays of equal length")
        # closed interval: EM estimates may sit on the boundary
        if not (np.all((pi0 >= 0) & (pi0 <= 1)) and np.all((piA >= 0) & (piA <= 1))):
            raise ValueError("class probabilities must lie in [0, 1]")
        pi0.setflags(write=False)
        piA.setflags(write=False)
        object.__setattr__(self, "pi0", pi0)
        object.__setattr__(self, "piA", piA)
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")

    @property
    def L(self) -> int:
        return self.pi0.shape[0]

    def replace(self, **kw) -> "LatentClassParams":
        args = dict(pi0=self.pi0, piA=self.piA, tau=self.tau, A=self.A)
        args.update(kw)
        return LatentClassParams(**args)


def logistic_prob(theta: Theta, alpha, s):
    """Success probability ``1 / (1 + exp(-(a + alpha + b*s)))``.

    Works elementwise on arrays. Results are clipped into ``[P_MIN, P_MAX]`` so
    extreme linear predictors saturate instead of producing 0, 1 or NaN.
    """
    eta = theta.a + np.asarray(alpha, dtype=float) + theta.b * np.asarray(s, dtype=float)
    p = np.clip(expit(eta), P_MIN, P_MAX)
    return float(p) if p.ndim == 0 else p


def logit(p):
    p = np.asarray(p, dtype=float)
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def ed50(theta: Theta) -> float:
    """Intensity with 50% success probability, ``-a/b``."""
    if theta.b == 0:
        raise DegenerateSlopeError("ED50 undefined for zero slope")
    return -theta.a / theta.b


def make_latent_probs(theta: Theta, A: float, grid: IntensityGrid, tau: float = 0.5) -> LatentClassParams:
    """Class-conditional accuracies on ``grid`` for classes 0 and A.

    The logit difference between the two classes is exactly ``A`` at every
    level.
    """
    if not A >= 0:
        raise ValueError("offset A must be nonnegative")
    s = grid.values
    pi0 = logistic_prob(theta, 0.0, s)
    piA = logistic_prob(theta, A, s)
    return LatentClassParams(pi0=pi0, piA=piA, tau=tau, A=A)


def marginal_latent_prob(params: LatentClassParams, s: int) -> float:
    """Marginal accuracy at level ``s`` (1-based) when class and intensity are independent."""
    k = s - 1
    return (1.0 - params.tau) * params.pi0[k] + params.tau * params.piA[k]
