"""Collapsed Gibbs sampling for the Dirichlet-process Gaussian mixture.

Cluster parameters are integrated out against the Normal-Inverse-chi^2 prior,
so each assignment is drawn from

    P(c_t = k | rest) ~ n_{-t,k} * t_k(y_t)        existing cluster k
    P(c_t = new | rest) ~ alpha * t_0(y_t)          fresh cluster

where t_k is the Student-t predictive given the other members of cluster k and
t_0 is the prior predictive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _kernels as K
from .dist import VARIANCE_FLOOR, GaussParams, NixParams, posterior_from_stats, student_t_params
from .errors import EmptyData, InconsistentState

LOG_2PI = math.log(2 * math.pi)


@dataclass
class DpmmState:
    """Partition of the data plus per-cluster sufficient statistics."""

    assignments: np.ndarray
    counts: np.ndarray
    sums: np.ndarray
    sumsqs: np.ndarray
    alpha_dp: float
    prior: NixParams

    @property
    def num_clusters(self):
        return int(self.counts.size)

    @classmethod
    def from_assignments(cls, data, assignments, alpha_dp, prior):
        data = np.asarray(data, dtype=float)
        a = np.asarray(assignments, dtype=np.int64)
        _, dense = np.unique(a, return_inverse=True)
        k = int(dense.max()) + 1 if dense.size else 0
        counts = np.bincount(dense, minlength=k).astype(np.int64)
        sums = np.bincount(dense, weights=data, minlength=k)
        sumsqs = np.bincount(dense, weights=data * data, minlength=k)
        return cls(dense.astype(np.int64), counts, sums, sumsqs, float(alpha_dp), prior)

    def check(self, data, tol=1e-9):
        """Raise InconsistentState unless stats equal a recount from the assignments."""
        ref = DpmmState.from_assignments(data, self.assignments, self.alpha_dp, self.prior)
        ok = (
            np.array_equal(np.unique(self.assignments), np.arange(self.num_clusters))
            and np.all(self.counts >= 1)
            and np.array_equal(ref.counts, self.counts)
            and np.allclose(ref.sums, self.sums, rtol=0, atol=tol * max(1.0, np.abs(ref.sums).max(initial=0)))
            and np.allclose(ref.sumsqs, self.sumsqs, rtol=0, atol=tol * max(1.0, np.abs(ref.sumsqs).max(initial=0)))
        )
        if not ok:
            raise InconsistentState("cluster statistics disagree with assignments")

    def cluster_posterior(self, k, exclude=None):
        """NIX posterior of cluster k, optionally without one observation value."""
        n, s, ss = int(self.counts[k]), float(self.sums[k]), float(self.sumsqs[k])
        if exclude is not None:
            n, s, ss = n - 1, s - exclude, ss - exclude * exclude
        if n <= 0:
            return self.prior
        mean = s / n
        return posterior_from_stats(self.prior, n, mean, max(ss - s * mean, 0.0))


@dataclass(frozen=True)
class DpmmModel:
    """Finite mixture read off a fitted DP mixture, heaviest component first."""

    weights: np.ndarray
    components: tuple
    alpha_dp: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.size != len(self.components) or w.size == 0:
            raise ValueError("need one weight per component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        order = np.argsort(-w, kind="stable")
        object.__setattr__(self, "weights", w[order])
        object.__setattr__(self, "components", tuple(self.components[i] for i in order))

    @property
    def means(self):
        return np.array([c.mu for c in self.components])

    @property
    def variances(self):
        return np.array([c.sigma_sq for c in self.components])

    def mean(self):
        return float(self.weights @ self.means)

    def std(self):
        m = self.mean()
        return math.sqrt(float(self.weights @ (self.variances + (self.means - m) ** 2)))

    def sample(self, rng, size):
        comp = rng.choice(self.weights.size, size=size, p=self.weights)
        return rng.normal(self.means[comp], np.sqrt(self.variances[comp]))

    @classmethod
    def single(cls, mu, sigma_sq):
        return cls(np.array([1.0]), (GaussParams(float(mu), float(sigma_sq)),))


def dpmm_logpdf(model, y):
    """log sum_k w_k N(y; mu_k, sigma_k^2), stable in log space; y scalar or array."""
    y = np.asarray(y, dtype=float)
    mu = model.means
    var = model.variances
    lp = (
        np.log(model.weights)
        - 0.5 * (LOG_2PI + np.log(var))
        - 0.5 * (y[..., None] - mu) ** 2 / var
    )
    out = logsumexp(lp, axis=-1)
    return float(out) if out.ndim == 0 else out


# --- sampler ------------------------------------------------------------------------


def _prior_arrays(prior, shift):
    p = np.array([prior.mu0 - shift, prior.kappa0, prior.nu0, prior.sigma0_sq])
    df, _, scale2 = student_t_params(prior)
    pt = np.array([df, prior.mu0 - shift, scale2, K.t_lognorm(df, scale2)])
    return p, pt


class _Tables:
    """Capacity-backed cluster statistics shared by the DPMM and HDP-HMM samplers.

    Rows are states (a single row for a plain mixture), columns cluster slots.
    Data are stored shifted by ``shift`` for numerical conditioning.
    """

    def __init__(self, prior, alpha_e, n_rows, n_cols, shift):
        self.prior = prior
        self.alpha_e = float(alpha_e)
        self.shift = float(shift)
        self.p, self.pt = _prior_arrays(prior, self.shift)
        self.cn = np.zeros((n_rows, n_cols), dtype=np.int64)
        self.cs = np.zeros((n_rows, n_cols))
        self.css = np.zeros((n_rows, n_cols))
        self.nobs = np.zeros(n_rows, dtype=np.int64)
        self.cache = np.zeros((n_rows, n_cols, 4))
        self.cache[:] = self.pt

    def load(self, y, obs, z, cz):
        self.cn[:] = 0
        self.cs[:] = 0
        self.css[:] = 0
        self.nobs[:] = 0
        zz, cc, yy = z[obs], cz[obs], y[obs]
        np.add.at(self.cn, (zz, cc), 1)
        np.add.at(self.cs, (zz, cc), yy)
        np.add.at(self.css, (zz, cc), yy * yy)
        np.add.at(self.nobs, zz, 1)
        self.refresh_all()

    def refresh_all(self):
        p = self.p
        for k in range(self.cn.shape[0]):
            for c in range(self.cn.shape[1]):
                K.refresh_cluster(k, c, self.cn, self.cs, self.css, self.cache, p[0], p[1], p[2], p[3], VARIANCE_FLOOR)

    def grow(self, rows=None, cols=None):
        r0, c0 = self.cn.shape
        rows = r0 if rows is None else rows
        cols = c0 if cols is None else cols
        for name in ("cn", "cs", "css"):
            old = getattr(self, name)
            new = np.zeros((rows, cols), dtype=old.dtype)
            new[:r0, :c0] = old
            setattr(self, name, new)
        nobs = np.zeros(rows, dtype=np.int64)
        nobs[:r0] = self.nobs
        self.nobs = nobs
        cache = np.empty((rows, cols, 4))
        cache[:] = self.pt
        cache[:r0, :c0] = self.cache
        self.cache = cache

    def needs_cols(self):
        live = self.nobs > 0
        return bool(np.any((self.cn[live] > 0).all(axis=1)))

    def compact(self, row_order, cz, z, obs, n_rows=None):
        """Keep rows ``row_order`` (in that order) and pack each row's clusters left.

        Rewrites ``cz`` in place for present steps; ``z`` must already be relabeled
        so that state i is old row ``row_order[i]``.  Extra empty rows pad the
        result up to ``n_rows``.
        """
        old_rows = np.asarray(row_order, dtype=np.int64)
        cn = self.cn[old_rows]
        live = cn > 0
        new_c = np.cumsum(live, axis=1) - 1
        width = max(int(live.sum(axis=1).max(initial=0)), 1)
        cap = max(self.cn.shape[1], 1)
        while cap < width + 1:
            cap *= 2
        remap = np.where(live, new_c, -1)
        cz[obs] = remap[z[obs], cz[obs]]
        n_rows = max(old_rows.size, 1, n_rows or 0)
        for name in ("cn", "cs", "css"):
            old = getattr(self, name)[old_rows]
            new = np.zeros((n_rows, cap), dtype=old.dtype)
            rr, cc = np.nonzero(live)
            new[rr, new_c[rr, cc]] = old[rr, cc]
            setattr(self, name, new)
        nobs = np.zeros(n_rows, dtype=np.int64)
        nobs[: old_rows.size] = self.nobs[old_rows]
        self.nobs = nobs
        self.cache = np.empty((n_rows, cap, 4))
        self.refresh_all()

    def row_stats(self, k):
        live = self.cn[k] > 0
        return self.cn[k, live], self.cs[k, live] + 0.0, self.css[k, live] + 0.0

    def log_marginal(self):
        """Sum over clusters of log p(cluster data) plus the CRP partition prior per row."""
        p = self.p
        mu0, k0, v0, s0 = p
        live = self.cn > 0
        n = self.cn[live].astype(float)
        if n.size == 0:
            return 0.0
        s = self.cs[live]
        ss = self.css[live]
        mean = s / n
        cen = np.maximum(ss - s * mean, 0.0)
        kn = k0 + n
        vn = v0 + n
        sn = np.maximum((v0 * s0 + cen + (n * k0 / kn) * (mean - mu0) ** 2) / vn, VARIANCE_FLOOR)
        lm = (
            gammaln(vn / 2) - gammaln(v0 / 2) + 0.5 * np.log(k0 / kn)
            + 0.5 * v0 * math.log(v0 * s0) - 0.5 * vn * np.log(vn * sn) - 0.5 * n * math.log(math.pi)
        )
        a = self.alpha_e
        rows = self.nobs > 0
        kc = live.sum(axis=1)[rows]
        nr = self.nobs[rows].astype(float)
        crp = kc * math.log(a) + gammaln(a) - gammaln(a + nr)
        return float(lm.sum() + gammaln(n).sum() + crp.sum())

    def gauss_estimates(self, k):
        """Posterior-mean (mu, sigma^2) and weight of every live cluster in row k."""
        n, s, ss = self.row_stats(k)
        out = []
        for ni, si, ssi in zip(n, s, ss):
            mean = si / ni
            post = posterior_from_stats(self.prior, int(ni), mean + self.shift, max(ssi - si * mean, 0.0))
            _, _, vn, sn = post.as_tuple()
            var = vn * sn / (vn - 2) if vn > 2 else sn
            out.append((ni / n.sum(), GaussParams(post.mu0, max(var, VARIANCE_FLOOR))))
        return out


def _state_to_arrays(state, data):
    y = np.asarray(data, dtype=float)
    z = np.zeros(y.size, dtype=np.int64)
    obs = np.ones(y.size, dtype=bool)
    shift = state.prior.mu0
    tables = _Tables(state.prior, state.alpha_dp, 1, max(2 * state.num_clusters, 4), shift)
    cz = state.assignments.astype(np.int64).copy()
    yy = y - shift
    tables.load(yy, obs, z, cz)
    return yy, obs, z, cz, tables


def _run_cluster_sweep(yy, obs, z, cz, tables, u):
    t0 = 0
    while True:
        t0 = K.sweep_clusters(yy, obs, z, cz, tables.cn, tables.cs, tables.css, tables.nobs,
                              tables.cache, tables.p, tables.pt, tables.alpha_e, VARIANCE_FLOOR, u, t0)
        if t0 < 0:
            return
        tables.grow(cols=2 * tables.cn.shape[1])


def _arrays_to_state(yy, cz, tables, prior, alpha_dp):
    shift = tables.shift
    _, dense = np.unique(cz, return_inverse=True)
    return DpmmState.from_assignments(yy + shift, dense, alpha_dp, prior)


def dpmm_gibbs_sweep(state, data, rng, check=False):
    """Resample every assignment once, in order; returns a new compacted state."""
    data = np.asarray(data, dtype=float)
    if state.assignments.size != data.size:
        raise InconsistentState("state does not match the data length")
    if check:
        state.check(data)
    yy, obs, z, cz, tables = _state_to_arrays(state, data)
    _run_cluster_sweep(yy, obs, z, cz, tables, rng.random(data.size))
    new = _arrays_to_state(yy, cz, tables, state.prior, state.alpha_dp)
    if check:
        new.check(data)
    return new


def dpmm_conditional_weights(state, data, t):
    """Unnormalized conditional weights of observation t: existing clusters, then new.

    Existing cluster k gets n_{-t,k} * t_k(y_t) (the cluster predictive without
    y_t); the last entry is alpha * t_0(y_t).
    """
    y = float(data[t])
    own = int(state.assignments[t])
    out = []
    for k in range(state.num_clusters):
        n = int(state.counts[k]) - (k == own)
        if n == 0:
            out.append(0.0)
            continue
        post = state.cluster_posterior(k, exclude=y if k == own else None)
        out.append(n * math.exp(_t_logpdf(post, y)))
    out.append(state.alpha_dp * math.exp(_t_logpdf(state.prior, y)))
    return np.array(out)


def _t_logpdf(params, y):
    df, loc, s2 = student_t_params(params)
    return K.t_logpdf(y, df, loc, s2, K.t_lognorm(df, s2))


def dpmm_log_posterior(state, data):
    """log p(partition) + log p(data | partition) with cluster parameters integrated out."""
    yy, obs, z, cz, tables = _state_to_arrays(state, data)
    return tables.log_marginal()


def initial_state(data, alpha_dp, prior, rng, n_init=None):
    """Random partition into a few clusters.

    Starting from many broad clusters lets well-separated modes specialize;
    a single initial cluster rarely splits under a vague prior.
    """
    data = np.asarray(data, dtype=float)
    if n_init is None:
        n_init = 8
    n_init = max(1, min(n_init, data.size))
    a = rng.integers(0, n_init, size=data.size)
    return DpmmState.from_assignments(data, a, alpha_dp, prior)


def model_from_state(state, data):
    """Finite mixture with posterior-mean component parameters and weights n_k / n."""
    data = np.asarray(data, dtype=float)
    comps, weights = [], []
    for k in range(state.num_clusters):
        post = state.cluster_posterior(k)
        _, _, vn, sn = post.as_tuple()
        var = vn * sn / (vn - 2) if vn > 2 else sn
        comps.append(GaussParams(post.mu0, max(var, VARIANCE_FLOOR)))
        weights.append(state.counts[k] / data.size)
    w = np.array(weights)
    return DpmmModel(w / w.sum(), tuple(comps), state.alpha_dp)


def dpmm_fit(data, alpha_dp=1.0, prior=None, sweeps=200, burn_in=50, rng=None, n_init=None, trace=None,
             return_state=False):
    """Run the collapsed sampler and return the best post-burn-in snapshot as a model.

    Two chains run, one from a random partition and one from a single
    cluster; the snapshot maximizes the joint log posterior of the partition
    over both.  With ``return_state`` the snapshot's DpmmState is returned too.
    """
    from .dist import default_prior, make_rng

    data = np.asarray(data, dtype=float).ravel()
    if data.size == 0:
        raise EmptyData("dpmm_fit needs at least one observation")
    if not np.all(np.isfinite(data)):
        raise ValueError("data must be finite")
    if not sweeps > burn_in >= 0:
        raise ValueError(f"need sweeps > burn_in >= 0 (got sweeps={sweeps}, burn_in={burn_in})")
    rng = make_rng(rng)
    if prior is None:
        prior = default_prior(data)
    # random starts split modes apart, a single start merges what belongs together
    starts = [initial_state(data, alpha_dp, prior, rng, n_init), initial_state(data, alpha_dp, prior, rng, 1)]
    best_lp, best = -np.inf, None
    for state in starts:
        yy, obs, z, cz, tables = _state_to_arrays(state, data)
        for sweep in range(sweeps):
            _run_cluster_sweep(yy, obs, z, cz, tables, rng.random(data.size))
            if sweep >= burn_in:
                lp = tables.log_marginal()
                if trace is not None:
                    trace.append((int((tables.cn > 0).sum()), lp))
                if lp > best_lp:
                    best_lp, best = lp, _arrays_to_state(yy, cz.copy(), tables, prior, alpha_dp)
    model = model_from_state(best, data)
    return (model, best) if return_state else model
