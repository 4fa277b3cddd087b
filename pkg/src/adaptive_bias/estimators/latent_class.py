"""Two-class latent model for per-level accuracies, fitted by EM.

Subjects belong to class 0 or class A. Conditional on class the responses at
level ``s`` are Bernoulli(``pi_s(class)``). The observed-data log-likelihood is

    l = sum_i log{(1 - tau) exp(l_i(0)) + tau exp(l_i(A))}

with ``l_i(a) = sum_s m_is log pi_s(a) + (T_is - m_is) log(1 - pi_s(a))``.
The offset ``A`` does not enter ``l``; it is carried as metadata.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, logsumexp

from ..core import LatentClassParams
from ..designs import updown_next
from ..sim import SufficientCounts
from .base import EPS, FitError, FitResult, inverse_info_se, numerical_hessian

__all__ = [
    "WEIGHT_MODES",
    "conditional_loglik",
    "em_m_step",
    "em_tau_update",
    "em_weights",
    "fit_latent_class_em",
    "latent_class_loglik",
    "latent_class_score",
    "plug_in_marginal",
    "simulate_path_log_ratio",
    "updown_path_log_prob",
]

WEIGHT_MODES = ("exact_fd", "ud_simulated", "naive")


def _clip(p):
    return np.clip(p, EPS, 1.0 - EPS)


def conditional_loglik(pi, Tis, mis) -> np.ndarray:
    """Per-subject ``l_i`` for class probabilities ``pi`` (length L).

    ``Tis``/``mis`` may be 1-d (one subject) or N x L.
    """
    p = _clip(np.asarray(pi, dtype=float))
    T = np.asarray(Tis, dtype=float)
    m = np.asarray(mis, dtype=float)
    return np.sum(m * np.log(p) + (T - m) * np.log1p(-p), axis=-1)


def latent_class_loglik(params: LatentClassParams, counts: SufficientCounts) -> float:
    l0 = conditional_loglik(params.pi0, counts.Tis, counts.mis)
    lA = conditional_loglik(params.piA, counts.Tis, counts.mis)
    tau = float(np.clip(params.tau, EPS, 1 - EPS))
    return float(np.sum(np.logaddexp(np.log1p(-tau) + l0, np.log(tau) + lA)))


def _weights_from_logs(tau, l0, lA, log_ratio=0.0):
    # w = 1 / (1 + (1 - tau)/tau * exp(l0 - lA) * ratio), evaluated on the log scale
    if tau >= 1.0 or tau <= 0.0:
        return np.full(np.shape(l0), float(tau >= 1.0))
    tau = np.clip(tau, EPS, 1 - EPS)
    return expit(np.log(tau) - np.log1p(-tau) + lA - l0 - log_ratio)


def updown_path_log_prob(levels, pi, L: int) -> np.ndarray:
    """Exact log-probability of each subject's level path given class accuracies.

    The start level is uniform over ``1..L``. Each later step reveals whether
    the preceding response was correct, so the path probability is a product
    of ``pi`` and ``1 - pi`` factors.
    """
    levels = np.atleast_2d(np.asarray(levels))
    p = _clip(np.asarray(pi, dtype=float))
    prev, nxt = levels[:, :-1], levels[:, 1:]
    correct = _correct_steps(prev, nxt, L)
    q = p[prev - 1]
    return -np.log(L) + np.sum(np.where(correct, np.log(q), np.log1p(-q)), axis=1)


def _correct_steps(prev, nxt, L):
    down = updown_next(prev, 1, L)
    up = updown_next(prev, 0, L)
    ok = (nxt == down) | (nxt == up)
    if not np.all(ok):
        raise ValueError("level path is not an up-down path")
    return nxt == down


def simulate_path_log_ratio(levels, params: LatentClassParams, M: int,
                            rng: np.random.Generator | None = None, uniforms=None) -> np.ndarray:
    """Monte Carlo estimate of ``log f(S_i | class 0) - log f(S_i | class A)``.

    Every transition probability along the observed path is estimated from
    ``M`` forward-simulated responses per class. The same uniforms serve both
    classes (common random numbers). Pass ``uniforms`` (N x M) to reuse draws
    across calls.
    """
    if M <= 0:
        raise ValueError("ud_simulated weights need M >= 1 forward simulations")
    levels = np.atleast_2d(np.asarray(levels))
    N = levels.shape[0]
    L = params.L
    if uniforms is None:
        if rng is None:
            raise ValueError("need rng or uniforms")
        uniforms = rng.random((N, M))
    u = np.sort(np.asarray(uniforms), axis=1)
    correct = _correct_steps(levels[:, :-1], levels[:, 1:], L)
    prev = levels[:, :-1]
    out = np.zeros(N)
    for cls, pi in ((0, params.pi0), (1, params.piA)):
        # empirical P(correct | level) per subject: fraction of uniforms below pi
        frac = np.stack([np.searchsorted(u[i], pi, side="left") for i in range(N)]) / u.shape[1]
        q = _clip(np.take_along_axis(frac, prev - 1, axis=1))
        lp = np.sum(np.where(correct, np.log(q), np.log1p(-q)), axis=1)
        out += lp if cls == 0 else -lp
    return out


def em_weights(counts: SufficientCounts, params: LatentClassParams, mode: str = "exact_fd", *,
               levels=None, M: int = 1000, rng: np.random.Generator | None = None,
               uniforms=None, log_ratio=None) -> np.ndarray:
    """Posterior probability that each subject belongs to class A.

    ``exact_fd`` and ``naive`` use the response likelihoods only; ``naive``
    is the same formula applied to any design. ``ud_simulated`` additionally
    multiplies in a simulated intensity-path ratio (needs ``levels``). A
    precomputed ``log_ratio`` overrides the simulation.
    """
    if mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {mode!r}")
    l0 = conditional_loglik(params.pi0, counts.Tis, counts.mis)
    lA = conditional_loglik(params.piA, counts.Tis, counts.mis)
    lr = 0.0
    if mode == "ud_simulated":
        if log_ratio is not None:
            lr = log_ratio
        else:
            if levels is None:
                raise ValueError("ud_simulated weights need the level paths")
            lr = simulate_path_log_ratio(levels, params, M, rng=rng, uniforms=uniforms)
    return _weights_from_logs(params.tau, l0, lA, lr)


def em_m_step(w, counts: SufficientCounts, prev: LatentClassParams | None = None):
    """Weighted proportions per level for classes 0 and A.

    Levels whose weighted denominator is zero keep their ``prev`` values
    (NaN without ``prev``); they are reported in the returned mask.
    """
    w = np.asarray(w, dtype=float)
    T = counts.Tis.astype(float)
    m = counts.mis.astype(float)
    dA, nA = w @ T, w @ m
    d0, n0 = (1 - w) @ T, (1 - w) @ m
    emptyA, empty0 = dA <= 0, d0 <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        piA = np.where(emptyA, np.nan, nA / np.where(emptyA, 1, dA))
        pi0 = np.where(empty0, np.nan, n0 / np.where(empty0, 1, d0))
    if prev is not None:
        piA = np.where(emptyA, prev.piA, piA)
        pi0 = np.where(empty0, prev.pi0, pi0)
    return pi0, piA, emptyA | empty0


def em_tau_update(w, l0, lA, log_ratio=0.0) -> float:
    """Prevalence from the reciprocal-weight identity: ``tau = 1 / (1 + chi)``.

    ``chi = sum (1 - w_i)/w_i / sum exp(l_i(0) - l_i(A)) * ratio_i``.
    Weights are clamped into ``[EPS, 1 - EPS]``.
    """
    w = np.clip(np.asarray(w, dtype=float), EPS, 1 - EPS)
    num = np.log(np.sum((1 - w) / w))
    den = logsumexp(np.asarray(l0) - np.asarray(lA) + log_ratio)
    return float(expit(-(num - den)))


def latent_class_score(params: LatentClassParams, counts: SufficientCounts) -> dict[str, np.ndarray]:
    """Analytic gradient of the observed-data log-likelihood.

    Returns ``{"pi0": (L,), "piA": (L,), "tau": float}``.
    """
    T = counts.Tis.astype(float)
    m = counts.mis.astype(float)
    p0, pA = _clip(params.pi0), _clip(params.piA)
    tau = float(np.clip(params.tau, EPS, 1 - EPS))
    l0 = conditional_loglik(p0, T, m)
    lA = conditional_loglik(pA, T, m)
    w = _weights_from_logs(tau, l0, lA)  # posterior P(class A)
    g0 = ((1 - w) @ (m - p0 * T)) / (p0 * (1 - p0))
    gA = (w @ (m - pA * T)) / (pA * (1 - pA))
    gtau = float(np.sum((w - tau) / (tau * (1 - tau))))
    return {"pi0": g0, "piA": gA, "tau": gtau}


def _flat(params: LatentClassParams) -> np.ndarray:
    return np.concatenate([params.pi0, params.piA, [params.tau]])


def _unflat(v, L, A) -> LatentClassParams:
    return LatentClassParams(pi0=v[:L], piA=v[L:2 * L], tau=float(v[-1]), A=A)


def _init_params(counts: SufficientCounts, A: float) -> LatentClassParams:
    Ts, ms = counts.Ts.astype(float), counts.ms.astype(float)
    overall = ms.sum() / max(Ts.sum(), 1.0)
    pooled = np.where(Ts > 0, ms / np.where(Ts > 0, Ts, 1), overall)
    return LatentClassParams(
        pi0=np.clip(pooled - 0.05, 0.01, 0.99),
        piA=np.clip(pooled + 0.05, 0.01, 0.99),
        tau=0.5,
        A=A,
    )


def _identify(params: LatentClassParams) -> LatentClassParams:
    if np.mean(params.piA) < np.mean(params.pi0):
        return LatentClassParams(params.piA, params.pi0, 1.0 - params.tau, params.A)
    return params


def fit_latent_class_em(counts: SufficientCounts, A: float = 1.0, *, weight_mode: str = "exact_fd",
                        tau_update: str = "em", levels=None, M: int = 1000,
                        rng: np.random.Generator | None = None, init: LatentClassParams | None = None,
                        tol: float = 1e-8, max_iter: int = 10_000, compute_se: bool = True) -> FitResult:
    """EM for ``(pi0, piA, tau)``.

    E-step: posterior class-A weights (:func:`em_weights`). M-step: weighted
    proportions (:func:`em_m_step`) and a prevalence update. ``tau_update``
    selects ``"em"`` (mean weight, the maximizer of the expected complete-data
    log-likelihood) or ``"heuristic"`` (:func:`em_tau_update`). Stops when
    the max-norm parameter change drops below ``tol``. After every M-step the
    labels are swapped if needed so that class A is the more accurate class.

    ``info["loglik_path"]`` holds the observed-data log-likelihood before the
    first iteration and after each one.
    """
    if counts.N < 2:
        raise FitError("latent-class EM needs at least two subjects")
    if tau_update not in ("em", "heuristic"):
        raise ValueError("tau_update must be 'em' or 'heuristic'")
    params = _init_params(counts, A) if init is None else init
    uniforms = None
    if weight_mode == "ud_simulated":
        if M <= 0:
            raise ValueError("ud_simulated weights need M >= 1 forward simulations")
        if levels is None or rng is None:
            raise ValueError("ud_simulated weights need level paths and an rng")
        uniforms = rng.random((counts.N, M))
    elif weight_mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {weight_mode!r}")

    path = [latent_class_loglik(params, counts)]
    held = np.zeros(params.L, dtype=bool)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        lr = 0.0
        if uniforms is not None:
            lr = simulate_path_log_ratio(levels, params, M, uniforms=uniforms)
        w = em_weights(counts, params, weight_mode, log_ratio=lr)
        pi0, piA, held_now = em_m_step(w, counts, prev=params)
        held |= held_now
        if tau_update == "em":
            tau = float(np.mean(w))
        else:
            l0 = conditional_loglik(pi0, counts.Tis, counts.mis)
            lA = conditional_loglik(piA, counts.Tis, counts.mis)
            tau = em_tau_update(w, l0, lA, lr)
        new = _identify(LatentClassParams(pi0, piA, tau, A))
        change = np.max(np.abs(_flat(new) - _flat(params)))
        params = new
        path.append(latent_class_loglik(params, counts))
        if change < tol:
            converged = True
            break

    L = params.L
    se = np.full(2 * L + 1, np.nan)
    if compute_se:
        def grad(v):
            v = np.clip(v, EPS, 1 - EPS)
            sc = latent_class_score(_unflat(v, L, A), counts)
            return np.concatenate([sc["pi0"], sc["piA"], [sc["tau"]]])

        v = _flat(params)
        interior = (v > 1e-6) & (v < 1 - 1e-6)
        if interior.all():
            se = inverse_info_se(-numerical_hessian(grad, v, h=1e-7))
    est = {f"pi0[{k + 1}]": float(params.pi0[k]) for k in range(L)}
    est.update({f"piA[{k + 1}]": float(params.piA[k]) for k in range(L)})
    est["tau"] = float(params.tau)
    ses = dict(zip(est.keys(), map(float, se)))
    return FitResult(
        estimates=est,
        standard_errors=ses,
        loglik=path[-1],
        converged=converged,
        iterations=it,
        info={"params": params, "loglik_path": np.array(path), "held_levels": held,
              "weight_mode": weight_mode, "tau_update": tau_update},
    )


def plug_in_marginal(fit: FitResult | LatentClassParams, s: int) -> float:
    """Marginal accuracy ``(1 - tau) pi_s(0) + tau pi_s(A)`` at level ``s`` (1-based)."""
    p = fit.info["params"] if isinstance(fit, FitResult) else fit
    return float((1 - p.tau) * p.pi0[s - 1] + p.tau * p.piA[s - 1])
