"""Parametric baselines: Gaussian mixture (EM) and Gaussian HMM (Baum-Welch), BIC order selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .dist import VARIANCE_FLOOR, GaussParams, make_rng
from .dpmm import LOG_2PI, DpmmModel
from .errors import DegenerateComponent
from .hmm import HmmModel, emission_logliks, forward_log_likelihood, viterbi
from .ingest import RegularSeries

MAX_RESTARTS = 3


def bic(log_likelihood, n_params, n_obs):
    return -2.0 * log_likelihood + n_params * math.log(n_obs)


def gmm_n_params(k):
    return 3 * k - 1


def hmm_n_params(k):
    return k * (k - 1) + (k - 1) + 2 * k


@dataclass
class FitReport:
    model: object
    k: int
    log_likelihood: float
    n_params: int
    bic: float
    iterations_used: int
    converged: bool
    n_obs: int
    trace: list = field(default_factory=list)
    states: np.ndarray | None = None

    @property
    def kind(self):
        return "hmm" if isinstance(self.model, HmmModel) else "gmm"


def _kmeanspp(x, k, rng):
    centers = [x[rng.integers(x.size)]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        tot = d2.sum()
        if tot <= 0:
            centers.append(x[rng.integers(x.size)])
        else:
            centers.append(x[rng.choice(x.size, p=d2 / tot)])
    return np.sort(np.array(centers))


def _seed_params(x, k, rng):
    mu = _kmeanspp(x, k, rng)
    lab = np.argmin(np.abs(x[:, None] - mu[None, :]), axis=1)
    var = np.full(k, max(x.var(), VARIANCE_FLOOR))
    w = np.full(k, 1.0 / k)
    for j in range(k):
        sel = x[lab == j]
        if sel.size >= 2:
            mu[j] = sel.mean()
            var[j] = max(sel.var(), VARIANCE_FLOOR)
            w[j] = sel.size / x.size
    return w / w.sum(), mu, var


def _gauss_logpdf(x, mu, var):
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x[:, None] - mu) ** 2 / var


def _relative_gain(ll, prev):
    return (ll - prev) / max(abs(prev), 1.0)


def _gmm_once(x, k, max_iters, tol, rng):
    w, mu, var = _seed_params(x, k, rng)
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        lp = np.log(w) + _gauss_logpdf(x, mu, var)
        norm = logsumexp(lp, axis=1)
        trace.append(float(norm.sum()))
        if len(trace) > 1 and _relative_gain(trace[-1], trace[-2]) < tol:
            converged = True
            break
        r = np.exp(lp - norm[:, None])
        nk = r.sum(axis=0)
        if np.any(nk < 2.0):
            raise DegenerateComponent(f"component with {nk.min():.2f} effective points")
        w = nk / x.size
        mu = (r * x[:, None]).sum(axis=0) / nk
        var = (r * (x[:, None] - mu) ** 2).sum(axis=0) / nk
        if np.any(var <= VARIANCE_FLOOR) and k > 1:
            raise DegenerateComponent("component variance collapsed")
        var = np.maximum(var, VARIANCE_FLOOR)
    model = DpmmModel(w, tuple(GaussParams(float(m), float(v)) for m, v in zip(mu, var)))
    return model, trace, it, converged


def gmm_em_fit(data, k, max_iters=500, tol=1e-6, rng=None):
    """EM for a k-component 1-D Gaussian mixture with k-means++ seeding.

    ``tol`` is the relative log-likelihood gain below which EM stops.
    """
    rng = make_rng(rng)
    x = np.asarray(data.values if isinstance(data, RegularSeries) else data, dtype=float)
    x = x[~np.isnan(x)]
    if k < 1 or x.size < k:
        raise ValueError(f"need 1 <= k <= number of observations (k={k}, n={x.size})")
    if k == 1:
        var = max(float(x.var()), VARIANCE_FLOOR)
        model = DpmmModel.single(float(x.mean()), var)
        ll = float(_gauss_logpdf(x, model.means, model.variances).sum())
        return FitReport(model, 1, ll, gmm_n_params(1), bic(ll, gmm_n_params(1), x.size), 1, True, x.size, [ll],
                         np.zeros(x.size, dtype=np.int64))
    last = None
    for _ in range(MAX_RESTARTS + 1):
        try:
            model, trace, it, converged = _gmm_once(x, k, max_iters, tol, rng)
            break
        except DegenerateComponent as e:
            last = e
    else:
        raise DegenerateComponent(f"k={k}: every restart degenerated ({last})")
    lp = np.log(model.weights) + _gauss_logpdf(x, model.means, model.variances)
    ll = float(logsumexp(lp, axis=1).sum())
    n_p = gmm_n_params(k)
    return FitReport(model, k, ll, n_p, bic(ll, n_p, x.size), it, converged, x.size, trace,
                     np.argmax(lp, axis=1))


def _as_series(series):
    if isinstance(series, RegularSeries):
        return series
    return RegularSeries(0, 240, np.asarray(series, dtype=float))


def _hmm_once(series, k, max_iters, tol, rng):
    y = series.values
    present = series.present
    x = y[present]
    w, mu, var = _seed_params(x, k, rng)
    A = np.full((k, k), 0.1 / (k - 1))
    np.fill_diagonal(A, 0.9)
    pi0 = np.full(k, 1.0 / k)
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        logB = np.zeros((y.size, k))
        logB[present] = _gauss_logpdf(x, mu, var)
        post, xi, ll = K.forward_backward(logB, A, pi0)
        trace.append(float(ll))
        if len(trace) > 1 and _relative_gain(trace[-1], trace[-2]) < tol:
            converged = True
            break
        gp = post[present]
        nk = gp.sum(axis=0)
        if np.any(nk < 2.0):
            raise DegenerateComponent(f"state with {nk.min():.2f} effective observations")
        mu = (gp * x[:, None]).sum(axis=0) / nk
        var = (gp * (x[:, None] - mu) ** 2).sum(axis=0) / nk
        if np.any(var <= VARIANCE_FLOOR):
            raise DegenerateComponent("state variance collapsed")
        pi0 = post[0] / post[0].sum()
        A = xi / xi.sum(axis=1, keepdims=True)
    return HmmModel.gaussian(A, pi0, mu, var), trace, it, converged


def hmm_baum_welch_fit(series, k, max_iters=500, tol=1e-6, rng=None):
    """Baum-Welch for a k-state HMM with one Gaussian per state; missing steps are skipped."""
    rng = make_rng(rng)
    series = _as_series(series)
    x = series.present_values()
    if k < 1 or x.size < max(2, k):
        raise ValueError(f"need k >= 1 and at least max(2, k) present values (k={k}, n={x.size})")
    if k == 1:
        model = HmmModel.gaussian([[1.0]], [1.0], [float(x.mean())], [max(float(x.var()), VARIANCE_FLOOR)])
        ll = forward_log_likelihood(model, series)
        return FitReport(model, 1, ll, hmm_n_params(1), bic(ll, hmm_n_params(1), x.size), 1, True, x.size, [ll],
                         np.zeros(len(series), dtype=np.int64))
    last = None
    for _ in range(MAX_RESTARTS + 1):
        try:
            model, trace, it, converged = _hmm_once(series, k, max_iters, tol, rng)
            break
        except DegenerateComponent as e:
            last = e
    else:
        raise DegenerateComponent(f"k={k}: every restart degenerated ({last})")
    ll = forward_log_likelihood(model, series)
    n_p = hmm_n_params(k)
    return FitReport(model, k, ll, n_p, bic(ll, n_p, x.size), it, converged, x.size, trace,
                     viterbi(model, series))


def select_k_by_bic(fit_fn, data, k_range, rng=None, restarts=3, **kwargs):
    """Fit every k (best of ``restarts`` runs) and return the minimum-BIC report.

    Ties go to the smaller k.  Fit failures for some k are skipped; if every k
    fails the last error propagates.
    """
    rng = make_rng(rng)
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range is empty")
    best, last_err = None, None
    for k in ks:
        cand = None
        for _ in range(restarts if k > 1 else 1):
            try:
                rep = fit_fn(data, k, rng=rng, **kwargs)
            except (DegenerateComponent, ValueError) as e:
                last_err = e
                continue
            if cand is None or rep.log_likelihood > cand.log_likelihood:
                cand = rep
        if cand is not None and (best is None or cand.bic < best.bic):
            best = cand
    if best is None:
        raise last_err
    return best
