"""Estimators for psychometric data and a name-keyed registry used by the study runner."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from numpy.polynomial.hermite import hermgauss

from ..core import Theta, logistic_prob, make_latent_probs
from ..sim import Dataset, sufficient_counts
from .base import FitError, FitResult, RankDeficiencyError, SeparationError
from .latent_class import (
    conditional_loglik,
    em_m_step,
    em_tau_update,
    em_weights,
    fit_latent_class_em,
    latent_class_loglik,
    latent_class_score,
    plug_in_marginal,
)
from .logistic import (
    fit_logistic_mle,
    fit_nonparametric,
    grouped_data,
    loglik_logistic,
    score_logistic,
)
from .random_intercept import fit_random_intercept, subject_counts

__all__ = [
    "ESTIMATORS",
    "FitError",
    "FitResult",
    "RankDeficiencyError",
    "SeparationError",
    "conditional_loglik",
    "default_estimators",
    "em_m_step",
    "em_tau_update",
    "em_weights",
    "fit_latent_class_em",
    "fit_logistic_mle",
    "fit_nonparametric",
    "fit_random_intercept",
    "latent_class_loglik",
    "latent_class_score",
    "loglik_logistic",
    "plug_in_marginal",
    "run_estimator",
    "score_logistic",
    "truths",
    "two_stage_estimate",
]


def two_stage_estimate(fits: Sequence[FitResult | None]) -> FitResult:
    """Mean of per-subject estimates over converged fits.

    ``None`` entries and non-converged fits are excluded and counted in
    ``info["n_excluded"]``. The reported standard error is the sample sd of
    the per-subject estimates over sqrt(n_used).
    """
    used = [f for f in fits if f is not None and f.converged]
    if not used:
        raise FitError("no converged per-subject fit")
    keys = list(used[0].estimates)
    vals = {k: np.array([f.estimates[k] for f in used]) for k in keys}
    est = {k: float(v.mean()) for k, v in vals.items()}
    n = len(used)
    se = {k: float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan") for k, v in vals.items()}
    return FitResult(est, se, loglik=float("nan"), converged=True, iterations=0,
                     info={"n_used": n, "n_excluded": len(fits) - n})


def _with_ed50(fit: FitResult) -> FitResult:
    a, b = fit.estimates["a"], fit.estimates["b"]
    if b == 0:
        fit.estimates["ed50"] = float("nan")
        fit.standard_errors["ed50"] = float("nan")
        return fit
    fit.estimates["ed50"] = -a / b
    cov = fit.info.get("cov")
    if cov is not None:
        g = np.array([-1.0 / b, a / b**2])
        var = float(g @ cov @ g)
        fit.standard_errors["ed50"] = float(np.sqrt(var)) if var > 0 else float("nan")
    else:
        fit.standard_errors["ed50"] = float("nan")
    return fit


def _logistic(data: Dataset, **_) -> FitResult:
    return _with_ed50(fit_logistic_mle(*grouped_data(data)))


def _random_intercept(data: Dataset, **_) -> FitResult:
    return _with_ed50(fit_random_intercept(*subject_counts(data)))


def _two_stage(data: Dataset, **_) -> FitResult:
    x = data.grid.values
    fits = []
    for subj in data:
        Ti = np.bincount(subj.levels - 1, minlength=data.grid.L)
        mi = np.bincount(subj.levels - 1, weights=subj.responses, minlength=data.grid.L)
        try:
            fits.append(fit_logistic_mle(x, mi, Ti))
        except FitError:
            fits.append(None)
    res = two_stage_estimate(fits)
    res.estimates["ed50"] = -res.estimates["a"] / res.estimates["b"]
    res.standard_errors["ed50"] = float("nan")
    return res


def _nonparametric(data: Dataset, **_) -> FitResult:
    fit = fit_nonparametric(sufficient_counts(data))
    est = {f"pi[{k + 1}]": float(p) for k, p in enumerate(fit.pi_hat)}
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.sqrt(fit.pi_hat * (1 - fit.pi_hat) / fit.Ts)
    return FitResult(est, {f"pi[{k + 1}]": float(v) for k, v in enumerate(se)},
                     loglik=float("nan"), converged=True, iterations=0,
                     info={"estimable": fit.estimable})


def _latent_em(data: Dataset, A: float = 1.0, weight_mode: str = "exact_fd", M: int = 1000,
               rng: np.random.Generator | None = None, **_) -> FitResult:
    if weight_mode == "ud_simulated" and rng is None:
        rng = np.random.default_rng(0)
    return fit_latent_class_em(sufficient_counts(data), A, weight_mode=weight_mode,
                               levels=data.levels, M=M, rng=rng)


ESTIMATORS: dict[str, Callable[..., FitResult]] = {
    "logistic": _logistic,
    "random_intercept": _random_intercept,
    "two_stage": _two_stage,
    "nonparametric": _nonparametric,
    "latent_em": _latent_em,
}


def default_estimators(scheme: str) -> list[str]:
    """Fixed-effect fits for FD/UD, random-intercept fits for FDr/UDr."""
    return ["random_intercept"] if scheme.endswith("r") else ["logistic"]


def run_estimator(name: str, data: Dataset, **options) -> FitResult:
    try:
        fn = ESTIMATORS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None
    return fn(data, **options)


def truths(config, estimator: str) -> dict[str, float]:
    """True values of the parameters an estimator reports under ``config``.

    Parameters without a meaningful truth (for example the intercept sd when
    effects are latent classes) are NaN and skipped by the summaries.
    """
    th = Theta(config.a, config.b)
    x = config.grid.values
    if estimator == "nonparametric":
        if config.effect_model == "none":
            pi = logistic_prob(th, 0.0, x)
        elif config.effect_model == "latent":
            lp = make_latent_probs(th, config.A, config.grid, config.tau)
            pi = (1 - config.tau) * lp.pi0 + config.tau * lp.piA
        else:
            gx, gw = hermgauss(61)
            z = np.sqrt(2.0) * config.tau * gx
            pi = (gw[:, None] * logistic_prob(th, z[:, None], x[None, :])).sum(axis=0) / np.sqrt(np.pi)
        return {f"pi[{k + 1}]": float(p) for k, p in enumerate(pi)}
    if estimator == "latent_em":
        if config.effect_model != "latent":
            return {}
        lp = make_latent_probs(th, config.A, config.grid, config.tau)
        out = {f"pi0[{k + 1}]": float(p) for k, p in enumerate(lp.pi0)}
        out.update({f"piA[{k + 1}]": float(p) for k, p in enumerate(lp.piA)})
        out["tau"] = float(config.tau)
        return out
    out = {"a": th.a, "b": th.b, "ed50": -th.a / th.b if th.b else float("nan")}
    if estimator == "random_intercept":
        out["tau_sd"] = config.tau if config.effect_model == "gaussian" else float("nan")
    return out
