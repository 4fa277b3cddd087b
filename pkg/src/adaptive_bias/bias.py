"""Monte Carlo summaries and checks of the small-sample bias identities.

For a per-level proportion ``pi_hat_s = m_s / T_s`` with random total
``T_s``, ``E[T_s (pi_hat_s - pi_s)] = 0`` gives

    Bias(pi_hat_s) = -Cov(T_s, pi_hat_s) / E[T_s].

With oracle posterior class-A weights ``w_i`` the weighted estimator
``sum w_i m_is / sum w_i T_is`` obeys the same identity with ``T_s``
replaced by the weighted total ``sum w_i T_is``.

Replications with an empty denominator give no estimate. They are filled with
the true value, which keeps both identities exact (the filled term multiplies
a zero total) and leaves fixed designs exactly unbiased.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import logistic_prob, make_latent_probs
from .designs import updown_next
from .estimators.base import EPS
from .sim import ScenarioConfig, simulate_dataset, sufficient_counts

__all__ = [
    "IdentityCheck",
    "LevelUnsampledError",
    "SummaryStats",
    "bias_identity_check",
    "enumerate_bias_identity",
    "enumerate_weighted_bias_identity",
    "summarize",
    "weighted_bias_identity_check",
]


class LevelUnsampledError(ValueError):
    """The level was never visited, so the identity has a zero denominator."""


@dataclass(frozen=True)
class SummaryStats:
    absBias: float
    relBias: float
    SE: float
    RMSE: float
    R_effective: int
    R_excluded: int = 0

    @property
    def relBias_defined(self) -> bool:
        return not np.isnan(self.relBias)

    @property
    def relBias_mcse(self) -> float:
        """Monte Carlo standard error of ``relBias`` (NaN when undefined)."""
        return self._mcse_scale * self.SE / np.sqrt(self.R_effective)

    _mcse_scale: float = 1.0


def summarize(estimates, truth: float, converged=None) -> SummaryStats:
    """Bias, relative bias, empirical SD and RMSE of replicated estimates.

    Entries with ``converged`` False are excluded and counted. ``SE`` is the
    sample standard deviation (divisor ``R - 1``) and
    ``RMSE = sqrt(SE**2 + absBias**2)``. ``relBias`` is NaN when ``truth == 0``.
    """
    x = np.asarray(estimates, dtype=float)
    keep = np.ones(x.size, bool) if converged is None else np.asarray(converged, bool)
    keep &= np.isfinite(x)
    x = x[keep]
    if x.size < 2:
        raise ValueError("need at least two estimates to summarize")
    abs_bias = float(x.mean() - truth)
    se = float(x.std(ddof=1))
    rel = abs_bias / truth if truth != 0 else float("nan")
    return SummaryStats(
        absBias=abs_bias,
        relBias=rel,
        SE=se,
        RMSE=float(np.hypot(se, abs_bias)),  # no underflow for tiny values
        R_effective=int(x.size),
        R_excluded=int(keep.size - x.size),
        _mcse_scale=1.0 / abs(truth) if truth != 0 else float("nan"),
    )


@dataclass(frozen=True)
class IdentityCheck:
    """Both sides of a bias identity at one level.

    ``mc_se`` is the Monte Carlo standard error of ``lhs - rhs`` (0 for exact
    enumeration); ``lhs_se`` that of ``lhs`` alone.
    """

    level: int
    lhs: float
    rhs: float
    mc_se: float
    lhs_se: float
    mean_total: float
    R: int

    @property
    def diff(self) -> float:
        return self.lhs - self.rhs

    def agrees(self, k: float = 3.0) -> bool:
        return abs(self.diff) < k * self.mc_se


def _identity_from_samples(level, totals, estimates, truth) -> IdentityCheck:
    """Sample version of the identity; covariance uses divisor R.

    With divisor R, ``lhs - rhs = mean(totals * (est - truth)) / mean(totals)``
    exactly, so its standard error comes straight from that average.
    """
    R = totals.size
    mt = totals.mean()
    if mt <= 0:
        raise LevelUnsampledError(f"level {level} never sampled")
    lhs = estimates.mean() - truth
    cov = np.mean((totals - mt) * (estimates - estimates.mean()))
    rhs = -cov / mt
    d = totals * (estimates - truth) / mt
    return IdentityCheck(level, float(lhs), float(rhs), float(d.std(ddof=1) / np.sqrt(R)),
                         float(estimates.std(ddof=1) / np.sqrt(R)), float(mt), R)


def _levels_arg(level, L):
    if level is None:
        return list(range(1, L + 1))
    return [level] if np.isscalar(level) else list(level)


def bias_identity_check(config: ScenarioConfig, level=None, R: int | None = None):
    """Monte Carlo check of the unweighted identity for FD/UD data.

    Returns one :class:`IdentityCheck` (scalar ``level``) or a list (several
    or all levels). Replication ``r`` uses the streams of ``(config.seed, r)``.
    """
    if config.effect_model != "none":
        raise ValueError("bias_identity_check needs a scheme without random effects")
    R = config.R if R is None else R
    Ts = np.empty((R, config.L))
    ms = np.empty((R, config.L))
    for r in range(R):
        c = sufficient_counts(simulate_dataset(config, r))
        Ts[r], ms[r] = c.Ts, c.ms
    pi = logistic_prob(config.theta, 0.0, config.grid.values)
    out = []
    for s in _levels_arg(level, config.L):
        k = s - 1
        est = np.where(Ts[:, k] > 0, ms[:, k] / np.maximum(Ts[:, k], 1), pi[k])
        out.append(_identity_from_samples(s, Ts[:, k], est, pi[k]))
    return out[0] if np.isscalar(level) else out


def oracle_weights(Tis, mis, pi0, piA, tau) -> np.ndarray:
    """Posterior P(class A | data) at the true parameters (fixed designs)."""
    p0, pA = np.clip(pi0, EPS, 1 - EPS), np.clip(piA, EPS, 1 - EPS)
    l0 = np.sum(mis * np.log(p0) + (Tis - mis) * np.log1p(-p0), axis=-1)
    lA = np.sum(mis * np.log(pA) + (Tis - mis) * np.log1p(-pA), axis=-1)
    if tau >= 1.0:
        return np.ones_like(l0)
    if tau <= 0.0:
        return np.zeros_like(l0)
    return expit(np.log(tau) - np.log1p(-tau) + lA - l0)


def weighted_bias_identity_check(config: ScenarioConfig, level=None, R: int | None = None):
    """Monte Carlo check of the weighted identity under FDr with latent classes."""
    if config.scheme != "FDr" or config.effect_model != "latent":
        raise ValueError("weighted identity check needs scheme FDr with latent effects")
    R = config.R if R is None else R
    lp = make_latent_probs(config.theta, config.A, config.grid, config.tau)
    W = np.empty((R, config.L))
    WM = np.empty((R, config.L))
    for r in range(R):
        c = sufficient_counts(simulate_dataset(config, r))
        w = oracle_weights(c.Tis, c.mis, lp.pi0, lp.piA, config.tau)
        W[r], WM[r] = w @ c.Tis, w @ c.mis
    out = []
    for s in _levels_arg(level, config.L):
        k = s - 1
        est = np.where(W[:, k] > 0, WM[:, k] / np.where(W[:, k] > 0, W[:, k], 1), lp.piA[k])
        out.append(_identity_from_samples(s, W[:, k], est, lp.piA[k]))
    return out[0] if np.isscalar(level) else out


# exhaustive enumeration oracles ------------------------------------------------

def _subject_paths(design: str, T: int, L: int, class_probs: list[tuple[float, np.ndarray]]):
    """All (probability, class index, levels, responses) outcomes for one subject.

    ``class_probs`` lists (class probability, per-level accuracy) pairs. Fixed
    designs draw every level uniformly; up-down starts uniform and follows
    the step rule.
    """
    out = []
    for c, (pc, acc) in enumerate(class_probs):
        if pc == 0:
            continue
        for ys in itertools.product((0, 1), repeat=T):
            if design == "FD":
                level_seqs = [(1.0 / L**T, lv) for lv in itertools.product(range(1, L + 1), repeat=T)]
            else:
                level_seqs = []
                for s1 in range(1, L + 1):
                    lv = [s1]
                    for t in range(1, T):
                        lv.append(updown_next(lv[-1], ys[t - 1], L))
                    level_seqs.append((1.0 / L, tuple(lv)))
            for ps, lv in level_seqs:
                p = pc * ps
                for lev, y in zip(lv, ys):
                    q = acc[lev - 1]
                    p *= q if y else 1 - q
                out.append((p, c, np.array(lv), np.array(ys)))
    return out


def _subject_counts(lv, ys, L):
    Ti = np.bincount(lv - 1, minlength=L).astype(float)
    mi = np.bincount(lv - 1, weights=ys, minlength=L).astype(float)
    return Ti, mi


def _exact_identity(level, probs, totals, estimates, truth) -> IdentityCheck:
    E_T = float(np.sum(probs * totals))
    if E_T <= 0:
        raise LevelUnsampledError(f"level {level} never sampled")
    E_est = float(np.sum(probs * estimates))
    cov = float(np.sum(probs * (totals - E_T) * (estimates - E_est)))
    return IdentityCheck(level, E_est - truth, -cov / E_T, 0.0, 0.0, E_T, 0)


def enumerate_bias_identity(design: str, theta, grid, T: int, N: int = 1, level=None):
    """Exact expectations of both sides of the unweighted identity.

    Enumerates every joint outcome of ``N`` subjects (start levels, responses
    and, for fixed designs, level draws). Intended for tiny designs only.
    """
    if design not in ("FD", "UD"):
        raise ValueError("design must be 'FD' or 'UD'")
    L = grid.L
    acc = logistic_prob(theta, 0.0, grid.values)
    paths = _subject_paths(design, T, L, [(1.0, acc)])
    per = [(p, *_subject_counts(lv, ys, L)) for p, _, lv, ys in paths]
    probs, Ts, ms = [], [], []
    for combo in itertools.product(per, repeat=N):
        probs.append(np.prod([c[0] for c in combo]))
        Ts.append(sum(c[1] for c in combo))
        ms.append(sum(c[2] for c in combo))
    probs, Ts, ms = np.array(probs), np.array(Ts), np.array(ms)
    out = []
    for s in _levels_arg(level, L):
        k = s - 1
        est = np.where(Ts[:, k] > 0, ms[:, k] / np.maximum(Ts[:, k], 1), acc[k])
        out.append(_exact_identity(s, probs, Ts[:, k], est, acc[k]))
    return out[0] if np.isscalar(level) else out


def enumerate_weighted_bias_identity(theta, A: float, tau: float, grid, T: int, N: int = 2, level=None):
    """Exact expectations of both sides of the weighted identity (fixed design, latent classes)."""
    L = grid.L
    lp = make_latent_probs(theta, A, grid, tau)
    paths = _subject_paths("FD", T, L, [(1.0 - tau, lp.pi0), (tau, lp.piA)])
    per = []
    for p, _, lv, ys in paths:
        Ti, mi = _subject_counts(lv, ys, L)
        w = float(oracle_weights(Ti, mi, lp.pi0, lp.piA, tau))
        per.append((p, w * Ti, w * mi))
    probs, W, WM = [], [], []
    for combo in itertools.product(per, repeat=N):
        probs.append(np.prod([c[0] for c in combo]))
        W.append(sum(c[1] for c in combo))
        WM.append(sum(c[2] for c in combo))
    probs, W, WM = np.array(probs), np.array(W), np.array(WM)
    out = []
    for s in _levels_arg(level, L):
        k = s - 1
        est = np.where(W[:, k] > 0, WM[:, k] / np.where(W[:, k] > 0, W[:, k], 1), lp.piA[k])
        out.append(_exact_identity(s, probs, W[:, k], est, lp.piA[k]))
    return out[0] if np.isscalar(level) else out
