"""Logistic maximum likelihood and the non-parametric per-level proportions."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit

from ..core import Theta
from ..sim import Dataset, SufficientCounts, sufficient_counts
from .base import FitResult, RankDeficiencyError, SeparationError, inverse_info

__all__ = [
    "NonparametricFit",
    "check_separation",
    "fit_logistic_mle",
    "fit_nonparametric",
    "grouped_data",
    "loglik_logistic",
    "score_logistic",
]


class NonparametricFit:
    """Per-level proportions ``m_s / T_s``; ``estimable`` is False where ``T_s == 0``."""

    def __init__(self, ms, Ts):
        self.ms = np.asarray(ms, dtype=float)
        self.Ts = np.asarray(Ts, dtype=float)
        self.estimable = self.Ts > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            self.pi_hat = np.where(self.estimable, self.ms / np.where(self.estimable, self.Ts, 1), np.nan)

    def __repr__(self):
        return f"NonparametricFit(pi_hat={self.pi_hat!r})"


def fit_nonparametric(counts: SufficientCounts) -> NonparametricFit:
    return NonparametricFit(counts.ms, counts.Ts)


def grouped_data(data: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pool a dataset into (intensity, successes, trials) over levels with trials."""
    c = sufficient_counts(data)
    keep = c.Ts > 0
    return data.grid.values[keep], c.ms[keep].astype(float), c.Ts[keep].astype(float)


def _as_arrays(x, y, n):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = np.ones_like(x) if n is None else np.asarray(n, dtype=float)
    return x, y, n


def loglik_logistic(theta: Theta, x, y, n=None) -> float:
    """Binomial log-likelihood; ``y`` successes out of ``n`` trials at intensity ``x``.

    With ``n`` omitted each row is a single Bernoulli trial.
    """
    x, y, n = _as_arrays(x, y, n)
    eta = theta.a + theta.b * x
    return float(np.sum(y * log_expit(eta) + (n - y) * log_expit(-eta)))


def score_logistic(theta: Theta, x, y, n=None) -> np.ndarray:
    """Gradient of :func:`loglik_logistic` in ``(a, b)``."""
    x, y, n = _as_arrays(x, y, n)
    r = y - n * expit(theta.a + theta.b * x)
    return np.array([r.sum(), (r * x).sum()])


def _information(theta: Theta, x, n) -> np.ndarray:
    p = expit(theta.a + theta.b * x)
    w = n * p * (1 - p)
    return np.array([[w.sum(), (w * x).sum()], [(w * x).sum(), (w * x * x).sum()]])


def check_separation(x, y, n=None) -> str | None:
    """Return ``"positive"``/``"negative"`` if a monotone cut separates the responses.

    Quasi-complete separation (ties at the cut) counts. Returns ``None`` when
    the MLE exists.
    """
    x, y, n = _as_arrays(x, y, n)
    has1 = y > 0
    has0 = (n - y) > 0
    if not has1.any() or not has0.any():
        return "degenerate"
    if x[has0].max() <= x[has1].min():
        return "positive"
    if x[has1].max() <= x[has0].min():
        return "negative"
    return None


def fit_logistic_mle(x, y, n=None, *, tol: float = 1e-8, max_iter: int = 100) -> FitResult:
    """Newton-Raphson fit of ``P(y=1) = expit(a + b x)``.

    Converged once ``max |score| < tol``. Raises :class:`SeparationError` when
    the data are separable (the slope estimate would diverge) and
    :class:`RankDeficiencyError` with fewer than two distinct intensities.
    """
    x, y, n = _as_arrays(x, y, n)
    keep = n > 0
    x, y, n = x[keep], y[keep], n[keep]
    if np.unique(x).size < 2:
        raise RankDeficiencyError("need at least two distinct intensities")
    sep = check_separation(x, y, n)
    if sep is not None:
        raise SeparationError(f"{sep} separation: |b| diverges")
    pbar = y.sum() / n.sum()
    beta = np.array([np.log(pbar) - np.log1p(-pbar), 0.0])
    ll = loglik_logistic(Theta(*beta), x, y, n)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        th = Theta(*beta)
        g = score_logistic(th, x, y, n)
        if np.max(np.abs(g)) < tol:
            converged = True
            it -= 1
            break
        step = np.linalg.solve(_information(th, x, n), g)
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = loglik_logistic(Theta(*cand), x, y, n)
            if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t /= 2
        beta, ll = cand, ll_new
    th = Theta(*beta)
    if not converged and np.max(np.abs(score_logistic(th, x, y, n))) < tol:
        converged = True
    cov = inverse_info(_information(th, x, n))
    se = np.sqrt(np.diag(cov))
    return FitResult(
        estimates={"a": float(beta[0]), "b": float(beta[1])},
        standard_errors={"a": float(se[0]), "b": float(se[1])},
        loglik=ll,
        converged=converged,
        iterations=it,
        info={"max_abs_b": abs(float(beta[1])), "cov": cov},
    )
