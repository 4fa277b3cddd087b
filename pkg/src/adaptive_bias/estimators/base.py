from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FitError",
    "FitResult",
    "RankDeficiencyError",
    "SeparationError",
    "inverse_info",
    "inverse_info_se",
    "numerical_hessian",
]

EPS = 1e-12


class FitError(RuntimeError):
    """A fit could not produce estimates."""


class SeparationError(FitError):
    """Responses are (quasi-)completely separated by intensity; the MLE diverges."""


class RankDeficiencyError(FitError):
    """Too few distinct intensities to identify intercept and slope."""


@dataclass
class FitResult:
    estimates: dict[str, float]
    standard_errors: dict[str, float]
    loglik: float
    converged: bool
    iterations: int
    info: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        return self.estimates[key]


def numerical_hessian(grad, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Symmetrized central-difference Jacobian of ``grad`` at ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    for j in range(n):
        step = h * max(1.0, abs(x[j]))
        e = np.zeros(n)
        e[j] = step
        H[:, j] = (np.asarray(grad(x + e)) - np.asarray(grad(x - e))) / (2 * step)
    return 0.5 * (H + H.T)


def inverse_info(neg_hessian: np.ndarray) -> np.ndarray:
    """Inverse observed information; all-NaN when singular."""
    try:
        return np.linalg.inv(neg_hessian)
    except np.linalg.LinAlgError:
        return np.full_like(neg_hessian, np.nan, dtype=float)


def inverse_info_se(neg_hessian: np.ndarray) -> np.ndarray:
    """Standard errors from the inverse observed information (NaN where not positive)."""
    d = np.diag(inverse_info(neg_hessian))
    with np.errstate(invalid="ignore"):
        return np.where(d > 0, np.sqrt(np.abs(d)), np.nan)
