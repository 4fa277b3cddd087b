"""Random-intercept logistic model fitted by marginal maximum likelihood.

Each subject's contribution ``log ∫ φ(z) Π_t f(y_t | s_t, a + σ z + b s_t) dz``
is evaluated with adaptive Gauss-Hermite quadrature: nodes are recentred at
the mode of the subject's integrand and scaled by its curvature. The
intensity factor of the likelihood is free of the parameters under both fixed
and up-down designs, so only the response factor is used.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.optimize import minimize
from scipy.special import expit, log_expit, logsumexp

from ..sim import Dataset, sufficient_counts
from .base import FitError, FitResult, inverse_info, numerical_hessian
from .logistic import check_separation, fit_logistic_mle

__all__ = [
    "QuadratureError",
    "fit_random_intercept",
    "marginal_loglik",
    "subject_counts",
    "subject_marginal_loglik",
]

N_NODES = 21
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


class QuadratureError(FitError):
    pass


def subject_counts(data: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(grid intensities, Tis, mis) with levels never visited dropped."""
    c = sufficient_counts(data)
    keep = c.Ts > 0
    return data.grid.values[keep], c.Tis[:, keep].astype(float), c.mis[:, keep].astype(float)


def _log_integrand(z, base, sigma, Tis, mis):
    eta = base[None, :] + sigma * z[:, None]
    return -0.5 * z**2 + np.sum(mis * log_expit(eta) + (Tis - mis) * log_expit(-eta), axis=1)


def _modes(a, b, sigma, x, Tis, mis, max_iter=100):
    """Mode and curvature (``-h''``) of each subject's log-integrand in z.

    Newton steps are halved per subject until the log-integrand increases,
    which prevents the overshoot cycles plain Newton shows at large ``sigma``.
    """
    base = a + b * x
    z = np.zeros(Tis.shape[0])
    h = _log_integrand(z, base, sigma, Tis, mis)
    for _ in range(max_iter):
        p = expit(base[None, :] + sigma * z[:, None])
        d1 = -z + sigma * np.sum(mis - Tis * p, axis=1)
        d2 = 1.0 + sigma**2 * np.sum(Tis * p * (1 - p), axis=1)
        step = d1 / d2
        t = np.ones_like(z)
        for _ in range(50):
            h_new = _log_integrand(z + t * step, base, sigma, Tis, mis)
            bad = h_new < h - 1e-12 * np.abs(h)
            if not bad.any():
                break
            t = np.where(bad, t / 2, t)
        z = z + t * step
        h = np.maximum(h_new, h)
        if np.max(np.abs(t * step)) < 1e-12:
            break
    p = expit(base[None, :] + sigma * z[:, None])
    curv = 1.0 + sigma**2 * np.sum(Tis * p * (1 - p), axis=1)
    return z, curv


def _quadrature(params, x, Tis, mis, n_nodes):
    """Per-subject log-integrals and their gradients at fixed adaptive nodes."""
    a, b, sigma = params
    gx, gw = hermgauss(n_nodes)
    zhat, curv = _modes(a, b, sigma, x, Tis, mis)
    scale = np.sqrt(2.0 / curv)
    z = zhat[:, None] + scale[:, None] * gx[None, :]  # (N, K)
    eta = a + b * x[None, None, :] + sigma * z[:, :, None]  # (N, K, L)
    g = np.sum(mis[:, None, :] * log_expit(eta) + (Tis - mis)[:, None, :] * log_expit(-eta), axis=2)
    h = -0.5 * z**2 - _LOG_SQRT_2PI + g
    terms = np.log(gw)[None, :] + gx[None, :] ** 2 + h
    logI = np.log(scale) + logsumexp(terms, axis=1)
    if not np.all(np.isfinite(logI)):
        raise QuadratureError("non-finite marginal likelihood")
    wpost = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
    r = mis[:, None, :] - Tis[:, None, :] * expit(eta)
    ra = r.sum(axis=2)
    rb = (r * x[None, None, :]).sum(axis=2)
    grad = np.stack([
        np.sum(wpost * ra, axis=1),
        np.sum(wpost * rb, axis=1),
        np.sum(wpost * z * ra, axis=1),
    ], axis=1)
    return logI, grad


def marginal_loglik(params, x, Tis, mis, n_nodes: int = N_NODES) -> float:
    """Total marginal log-likelihood at ``params = (a, b, sigma)``."""
    return float(_quadrature(np.asarray(params, float), np.asarray(x, float),
                             np.atleast_2d(Tis).astype(float), np.atleast_2d(mis).astype(float),
                             n_nodes)[0].sum())


def subject_marginal_loglik(a, b, sigma, x, T_i, m_i, n_nodes: int = N_NODES) -> float:
    return marginal_loglik((a, b, sigma), x, np.atleast_2d(T_i), np.atleast_2d(m_i), n_nodes)


def fit_random_intercept(x, Tis, mis, *, tau_sd: float | None = None, n_nodes: int = N_NODES,
                         gtol: float = 1e-6, max_iter: int = 500) -> FitResult:
    """Marginal ML for ``(a, b, tau_sd)``.

    ``x`` holds the distinct intensities (length K) and ``Tis``/``mis`` the
    per-subject trial and success counts (N x K). Pass ``tau_sd`` to hold the
    intercept sd fixed; ``tau_sd=0`` reduces to the pooled logistic fit.
    A fit whose sd collapses to zero is flagged ``info["boundary"]``.
    """
    x = np.asarray(x, dtype=float)
    Tis = np.atleast_2d(np.asarray(Tis, dtype=float))
    mis = np.atleast_2d(np.asarray(mis, dtype=float))
    if Tis.shape[0] < 2 and tau_sd is None:
        raise FitError("random-intercept fit needs at least two subjects")
    Ts, ms = Tis.sum(axis=0), mis.sum(axis=0)
    if check_separation(x, ms, Ts) is None:
        start = fit_logistic_mle(x, ms, Ts)
        a0, b0 = start["a"], start["b"]
    else:
        pbar = np.clip(ms.sum() / Ts.sum(), 0.01, 0.99)
        a0, b0 = np.log(pbar / (1 - pbar)), 0.0
    free_sigma = tau_sd is None

    def unpack(v):
        return (v[0], v[1], v[2]) if free_sigma else (v[0], v[1], float(tau_sd))

    def fun(v):
        logI, grad = _quadrature(unpack(v), x, Tis, mis, n_nodes)
        gsum = grad.sum(axis=0)
        return -logI.sum(), -(gsum if free_sigma else gsum[:2])

    def grad_only(v):
        return -fun(v)[1]

    v0 = np.array([a0, b0, 0.5]) if free_sigma else np.array([a0, b0])
    res = minimize(fun, v0, jac=True, method="BFGS", options={"gtol": gtol * 1e-2, "maxiter": max_iter})
    v = res.x
    iters = int(res.nit)
    # Newton polish: BFGS often stalls slightly short of gtol on flat sd directions
    for _ in range(20):
        g = grad_only(v)
        if np.max(np.abs(g)) < gtol * 1e-2:
            break
        H = numerical_hessian(grad_only, v)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        f0 = fun(v)[0]
        t = 1.0
        while t > 1e-6:
            cand = v - t * step
            try:
                if fun(cand)[0] <= f0 + 1e-12 * abs(f0):
                    break
            except QuadratureError:
                pass
            t /= 2
        else:
            break
        v = cand
        iters += 1
    nll, g = fun(v)
    converged = bool(np.max(np.abs(g)) < gtol)
    cov = inverse_info(-numerical_hessian(grad_only, v))
    with np.errstate(invalid="ignore"):
        se = np.sqrt(np.diag(cov))
    est = {"a": float(v[0]), "b": float(v[1])}
    ses = {"a": float(se[0]), "b": float(se[1])}
    if free_sigma:
        sig = abs(float(v[2]))
        ses["tau_sd"] = float(se[2])
    else:
        sig = float(tau_sd)
        ses["tau_sd"] = float("nan")
    est["tau_sd"] = sig
    boundary = free_sigma and sig < 1e-4
    return FitResult(
        estimates=est,
        standard_errors=ses,
        loglik=float(-nll),
        converged=converged,
        iterations=iters,
        info={"boundary": boundary, "grad_max": float(np.max(np.abs(g))), "nodes": n_nodes,
              "cov": cov[:2, :2]},
    )
