"""Direct-assignment Gibbs sampler for the sticky HDP-HMM with DP-mixture emissions.

Each sweep resamples, in time order, the state of every step jointly with its
mixture component inside that state (transition rows and emission parameters
are integrated out), then refreshes every component assignment once more,
then redraws the global state weights beta through the auxiliary
table counts.  Optionally the concentrations are resampled too.

The point estimate is the post-burn-in configuration with the highest joint
log posterior, turned into a finite ``HmmModel``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import median_filter
from scipy.special import gammaln

from . import _kernels as K
from .dist import VARIANCE_FLOOR, NixParams, default_prior, make_rng
from .dpmm import DpmmModel, DpmmState, _Tables
from .errors import AllMissing, InconsistentState, TooShort
from .hmm import HmmModel, forward_log_likelihood
from .ingest import RegularSeries

RULES = {"exact": K.RULE_EXACT, "simplified": K.RULE_SIMPLIFIED}


@dataclass(frozen=True)
class HyperPrior:
    """Gamma priors on gamma and on alpha + kappa, Beta prior on kappa / (alpha + kappa)."""

    gamma_shape: float = 1.0
    gamma_rate: float = 1.0
    ak_shape: float = 1.0
    ak_rate: float = 1.0
    rho_a: float = 10.0
    rho_b: float = 1.0


@dataclass(frozen=True)
class HdpHmmConfig:
    alpha: float = 1.0
    gamma: float = 1.0
    kappa: float = 10.0
    emission_prior: NixParams | None = None
    emission_alpha: float = 1.0
    sweeps: int = 500
    burn_in: int = 200
    seed: int = 0
    hyperprior: HyperPrior | None = None
    transition_rule: str = "exact"
    init: str = "levels"

    def __post_init__(self):
        if not (self.alpha > 0 and self.gamma > 0 and self.kappa >= 0 and self.emission_alpha > 0):
            raise ValueError("need alpha > 0, gamma > 0, kappa >= 0, emission_alpha > 0")
        if not self.sweeps > self.burn_in >= 0:
            raise ValueError("need sweeps > burn_in >= 0")
        if self.transition_rule not in RULES:
            raise ValueError(f"transition_rule must be one of {sorted(RULES)}")
        if self.init not in ("levels", "random", "single"):
            raise ValueError("init must be 'levels', 'random' or 'single'")

    def to_dict(self):
        d = asdict(self)
        return d


@dataclass
class SamplerState:
    """Compact snapshot of the sampler: ids are dense 0..K-1.

    ``beta`` has K + 1 entries, the last being the unallocated remainder.
    ``clusters`` holds each present step's component id within its state
    (-1 at missing steps).
    """

    z: np.ndarray
    clusters: np.ndarray
    beta: np.ndarray
    transition_counts: np.ndarray

    @property
    def num_states(self):
        return self.transition_counts.shape[0]

    def emission_state(self, k, values, alpha_e, prior):
        """Per-state DP mixture state built from the steps currently in state k."""
        idx = np.flatnonzero((self.z == k) & ~np.isnan(values))
        return DpmmState.from_assignments(values[idx], self.clusters[idx], alpha_e, prior)

    def check(self):
        K_ = self.num_states
        z = self.z
        ref = np.zeros((K_, K_), dtype=np.int64)
        np.add.at(ref, (z[:-1], z[1:]), 1)
        if not np.array_equal(ref, self.transition_counts):
            raise InconsistentState("transition counts disagree with z")
        if K_ and not np.array_equal(np.unique(z), np.arange(K_)):
            raise InconsistentState("state ids are not dense")
        if abs(self.beta.sum() - 1.0) > 1e-9 or np.any(self.beta < 0):
            raise InconsistentState("beta is off the simplex")


@dataclass
class SegmentationResult:
    series: RegularSeries
    states: np.ndarray
    model: HmmModel
    log_likelihood: float
    sweep_diagnostics: list = field(default_factory=list)
    config: HdpHmmConfig | None = None
    log_posterior: float = float("nan")
    clusters_per_state: list = field(default_factory=list)

    @property
    def num_states(self):
        return self.model.num_states

    def num_segments(self):
        return int(1 + np.count_nonzero(np.diff(self.states)))


# --- initialization -----------------------------------------------------------------


def noise_scale(values):
    """Robust within-segment noise sd from successive differences of present values."""
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if v.size < 3:
        return math.sqrt(VARIANCE_FLOOR)
    d = np.diff(v)
    mad = np.median(np.abs(d - np.median(d)))
    return max(1.4826 * mad / math.sqrt(2.0), math.sqrt(VARIANCE_FLOOR))


def _split_levels(sv, lo, hi, min_sep, out):
    """Recursive two-way splits of sorted values sv[lo:hi] at the best Otsu cut."""
    x = sv[lo:hi]
    n = x.size
    if n >= 2:
        c = np.cumsum(x)
        i = np.arange(1, n)
        m1 = c[:-1] / i
        m2 = (c[-1] - c[:-1]) / (n - i)
        score = i * (n - i) * (m2 - m1) ** 2
        j = int(np.argmax(score))
        if m2[j] - m1[j] > min_sep:
            _split_levels(sv, lo, lo + j + 1, min_sep, out)
            _split_levels(sv, lo + j + 1, hi, min_sep, out)
            return
    out.append(hi)


def level_labels(values, window=9, separation=6.0):
    """Group present values (in time order) into levels of their running median.

    The running median keeps steps sharp and drops isolated spikes.  Sorted
    smoothed values are split recursively at the cut maximizing the
    between-group variance, as long as the two group means are more than
    ``separation`` smoothed-noise standard deviations apart.
    """
    v = np.asarray(values, dtype=float)
    w = min(window, v.size if v.size % 2 else v.size - 1)
    sm = median_filter(v, size=w, mode="nearest") if w > 1 else v
    # asymptotic sd of the median of w Gaussian draws
    sd = noise_scale(v) * math.sqrt(math.pi / (2.0 * max(w, 1)))
    order = np.argsort(sm, kind="stable")
    ends = []
    _split_levels(sm[order], 0, v.size, separation * sd, ends)
    sorted_lab = np.repeat(np.arange(len(ends)), np.diff(np.concatenate([[0], ends])))
    lab = np.empty(v.size, dtype=np.int64)
    lab[order] = sorted_lab
    return lab


def _initial_z(y, obs, config, rng):
    T = y.size
    if config.init == "single":
        return np.zeros(T, dtype=np.int64)
    if config.init == "random":
        return rng.integers(0, 8, size=T)
    lab = np.zeros(T, dtype=np.int64)
    lab[obs] = level_labels(y[obs])
    # missing steps continue the previous step's state
    idx = np.where(obs, np.arange(T), 0)
    np.maximum.accumulate(idx, out=idx)
    first = np.argmax(obs)
    z = lab[idx]
    z[:first] = lab[first]
    return z


# --- sampler ------------------------------------------------------------------------


class _Sampler:
    def __init__(self, series, config, rng, prior=None):
        self.config = config
        self.rng = rng
        y = series.values if isinstance(series, RegularSeries) else np.asarray(series, dtype=float)
        self.obs = ~np.isnan(y)
        present = y[self.obs]
        self.prior = prior if prior is not None else (config.emission_prior or default_prior(present))
        self.shift = self.prior.mu0
        self.y = np.where(self.obs, y - self.shift, 0.0)
        self.T = y.size
        self.alpha = float(config.alpha)
        self.kappa = float(config.kappa)
        self.gamma = float(config.gamma)
        self.rule = RULES[config.transition_rule]

    # state <-> arrays

    def load(self, z, cz, beta, capacity=None):
        z = np.asarray(z, dtype=np.int64)
        k = int(z.max()) + 1
        cap = max(capacity or 0, 2 * k, 4)
        self.z = z.copy()
        self.cz = np.where(self.obs, cz, -1).astype(np.int64)
        self.N = np.zeros((cap, cap), dtype=np.int64)
        np.add.at(self.N, (z[:-1], z[1:]), 1)
        self.nrow = self.N.sum(axis=1)
        self.occ = np.bincount(z, minlength=cap).astype(np.int64)
        self.beta = np.zeros(cap)
        self.beta[:k] = beta[:k]
        self.beta_rem = np.array([float(beta[k])])
        ncols = max(4, 2 * (int(self.cz.max(initial=0)) + 1))
        self.tables = _Tables(self.prior, self.config.emission_alpha, cap, ncols, self.shift)
        self.tables.load(self.y, self.obs, self.z, np.where(self.obs, self.cz, 0))

    def initialize(self):
        z = _initial_z(self.y + self.shift, self.obs, self.config, self.rng)
        _, z = np.unique(z, return_inverse=True)
        k = int(z.max()) + 1
        # stick-breaking draw for the initial weights
        b = self.rng.beta(1.0, self.gamma, size=k)
        rest = np.concatenate([[1.0], np.cumprod(1 - b)])
        beta = np.concatenate([b * rest[:-1], [rest[-1]]])
        self.load(z, np.zeros(self.T, dtype=np.int64), beta)

    def grow_states(self):
        old = self.occ.size
        new = 2 * old
        N = np.zeros((new, new), dtype=np.int64)
        N[:old, :old] = self.N
        self.N = N
        self.nrow = np.concatenate([self.nrow, np.zeros(new - old, dtype=np.int64)])
        self.occ = np.concatenate([self.occ, np.zeros(new - old, dtype=np.int64)])
        self.beta = np.concatenate([self.beta, np.zeros(new - old)])
        self.tables.grow(rows=new)

    def sweep_states(self, t0=0, t1=None, u=None):
        t1 = self.T if t1 is None else t1
        if u is None:
            u = self.rng.random((3, self.T))
        tb = self.tables
        while True:
            t0 = K.sweep_states(
                self.y, self.obs, self.z, self.cz, self.N, self.nrow, self.occ, self.beta, self.beta_rem,
                tb.cn, tb.cs, tb.css, tb.nobs, tb.cache, tb.p, tb.pt,
                self.alpha, self.kappa, self.gamma, tb.alpha_e, self.rule, VARIANCE_FLOOR,
                u[0], u[1], u[2], t0, t1,
            )
            if t0 < 0:
                return
            if (self.occ > 0).sum() >= self.occ.size:
                self.grow_states()
            else:
                tb.grow(cols=2 * tb.cn.shape[1])

    def sweep_clusters(self):
        tb = self.tables
        u = self.rng.random(self.T)
        t0 = 0
        while True:
            t0 = K.sweep_clusters(self.y, self.obs, self.z, self.cz, tb.cn, tb.cs, tb.css, tb.nobs,
                                  tb.cache, tb.p, tb.pt, tb.alpha_e, VARIANCE_FLOOR, u, t0)
            if t0 < 0:
                return
            tb.grow(cols=2 * tb.cn.shape[1])

    def compact(self):
        live = np.flatnonzero(self.occ > 0)
        k = live.size
        remap = np.full(self.occ.size, -1, dtype=np.int64)
        remap[live] = np.arange(k)
        self.z = remap[self.z]
        cap = max(2 * k, 4)
        N = np.zeros((cap, cap), dtype=np.int64)
        N[:k, :k] = self.N[np.ix_(live, live)]
        self.N = N
        self.nrow = N.sum(axis=1)
        occ = np.zeros(cap, dtype=np.int64)
        occ[:k] = self.occ[live]
        self.occ = occ
        beta = np.zeros(cap)
        beta[:k] = self.beta[live]
        self.beta = beta
        self.tables.compact(live, self.cz, self.z, self.obs, n_rows=cap)

    @property
    def num_states(self):
        return int((self.occ > 0).sum())

    def state(self):
        k = self.num_states
        beta = np.concatenate([self.beta[:k], self.beta_rem])
        return SamplerState(self.z.copy(), self.cz.copy(), beta, self.N[:k, :k].copy())

    # global weights and hyperparameters

    def sample_beta(self):
        k = self.num_states
        if k == 0:
            self.beta_rem[0] = 1.0
            return np.array([1.0]), None, None
        N = self.N[:k, :k]
        m = K.count_tables(N, self.beta[:k], self.alpha, self.kappa, self.rng.random(int(N.sum())))
        rho = self.kappa / (self.alpha + self.kappa)
        diag = np.diag(m)
        p = rho / (rho + self.beta[:k] * (1 - rho)) if rho > 0 else np.zeros(k)
        w = self.rng.binomial(diag, p)
        mbar = m.sum(axis=0) - w
        mbar[self.z[0]] += 1
        draw = self.rng.dirichlet(np.concatenate([mbar.astype(float), [self.gamma]]))
        self.beta[:k] = draw[:k]
        self.beta[k:] = 0.0
        self.beta_rem[0] = draw[k]
        return draw, m, w

    def resample_hyper(self, m, w, hp):
        """Auxiliary-variable updates of alpha + kappa, kappa / (alpha + kappa) and gamma."""
        k = self.num_states
        rng = self.rng
        N = self.N[:k, :k]
        nj = N.sum(axis=1).astype(float)
        mj = m.sum(axis=1)
        ak = self.alpha + self.kappa
        for _ in range(20):
            has = nj > 0
            r = rng.beta(ak + 1.0, np.where(has, nj, 1.0))
            s = rng.random(k) < nj / (nj + ak)
            ak = rng.gamma(hp.ak_shape + mj.sum() - (s & has).sum(),
                           1.0 / (hp.ak_rate - np.log(r[has]).sum()))
        wsum = w.sum()
        rho = rng.beta(hp.rho_a + wsum, hp.rho_b + m.sum() - wsum)
        self.alpha = float(ak * (1 - rho))
        self.kappa = float(ak * rho)
        mbar_tot = float(m.sum() - wsum + 1)
        g = self.gamma
        for _ in range(20):
            eta = rng.beta(g + 1.0, mbar_tot)
            odds = (hp.gamma_shape + k - 1) / (mbar_tot * (hp.gamma_rate - math.log(eta)))
            shape = hp.gamma_shape + k if rng.random() < odds / (1 + odds) else hp.gamma_shape + k - 1
            g = rng.gamma(shape, 1.0 / (hp.gamma_rate - math.log(eta)))
        self.gamma = float(g)

    # objective

    def log_posterior(self):
        """log p(y, z, components | beta, alpha, kappa) with rows and emissions integrated out."""
        k = self.num_states
        N = self.N[:k, :k].astype(float)
        beta = self.beta[:k]
        a = self.alpha * beta[None, :] + self.kappa * np.eye(k)
        ak = self.alpha + self.kappa
        with np.errstate(divide="ignore"):
            lp = math.log(beta[self.z[0]]) if beta[self.z[0]] > 0 else -math.inf
        lp += float((gammaln(ak) - gammaln(ak + N.sum(axis=1))).sum())
        lp += float((gammaln(a + N) - gammaln(a)).sum())
        return lp + self.tables.log_marginal()

    # output

    def finalize(self, z, cz, beta, alpha, kappa):
        """Relabel by occupancy and build the finite HMM from one configuration."""
        T = self.T
        k = int(z.max()) + 1
        occ = np.bincount(z, minlength=k)
        first = np.array([np.argmax(z == j) for j in range(k)])
        order = np.lexsort((first, -occ))
        remap = np.empty(k, dtype=np.int64)
        remap[order] = np.arange(k)
        z = remap[z]
        b = np.concatenate([beta[:k][order], beta[k:k + 1]])
        N = np.zeros((k, k))
        np.add.at(N, (z[:-1], z[1:]), 1)
        rows = alpha * b[None, :k] + N + kappa * np.eye(k)
        P = rows / rows.sum(axis=1, keepdims=True)
        init = np.bincount(z, minlength=k) / T
        tb = _Tables(self.prior, self.config.emission_alpha, k, max(4, int(cz.max(initial=0)) + 2), self.shift)
        tb.load(self.y, self.obs, z, np.where(self.obs, cz, 0))
        ems = []
        for j in range(k):
            est = tb.gauss_estimates(j)
            if not est:
                ems.append(DpmmModel.single(self.prior.mu0, self.prior.sigma0_sq))
                continue
            w = np.array([e[0] for e in est], dtype=float)
            ems.append(DpmmModel(w / w.sum(), tuple(e[1] for e in est), self.config.emission_alpha))
        model = HmmModel(P, init, tuple(ems), b)
        return z, model, [int((tb.cn[j] > 0).sum()) for j in range(k)]


def sample_beta(state, gamma, kappa, alpha, rng, values=None, prior=None):
    """Redraw (beta_1..beta_K, beta_rem) given a sampler state's transition counts."""
    k = state.num_states
    if k == 0:
        return np.array([1.0])
    N = state.transition_counts
    m = K.count_tables(np.asarray(N, dtype=np.int64), state.beta[:k], alpha, kappa, rng.random(int(N.sum())))
    rho = kappa / (alpha + kappa)
    p = rho / (rho + state.beta[:k] * (1 - rho)) if rho > 0 else np.zeros(k)
    w = rng.binomial(np.diag(m), p)
    mbar = m.sum(axis=0) - w
    mbar[state.z[0]] += 1
    return rng.dirichlet(np.concatenate([mbar.astype(float), [gamma]]))


def _sampler_for(state, series, config, rng):
    s = _Sampler(series, config, rng)
    if state is None or state.z.size == 0:
        return s
    s.load(state.z, np.where(s.obs, state.clusters, 0), state.beta)
    return s


def joint_log_posterior(state, series, config):
    """Objective used to pick the MAP snapshot, evaluated at ``state``."""
    return _sampler_for(state, series, config, make_rng(0)).log_posterior()


def state_conditional(t, state, series, config):
    """Normalized P(z_t = k | everything else) over existing states, then a new state.

    Emission factors use each state's DP-mixture predictive.
    """
    s = _sampler_for(state, series, config, make_rng(0))
    tb = s.tables
    z, T = s.z, s.T
    k_old = z[t]
    prev = z[t - 1] if t > 0 else -1
    nxt = z[t + 1] if t < T - 1 else -1
    N, nrow, occ = s.N.copy(), s.nrow.copy(), s.occ.copy()
    beta, beta_rem = s.beta.copy(), float(s.beta_rem[0])
    if prev >= 0:
        N[prev, k_old] -= 1
        nrow[prev] -= 1
    if nxt >= 0:
        N[k_old, nxt] -= 1
        nrow[k_old] -= 1
    occ[k_old] -= 1
    if s.obs[t]:
        K._remove_obs(k_old, s.cz[t], s.y[t], tb.cn, tb.cs, tb.css, tb.cache, tb.p, VARIANCE_FLOOR)
        tb.nobs[k_old] -= 1
    if occ[k_old] == 0:
        beta_rem += beta[k_old]
        beta[k_old] = 0.0
    live = occ > 0
    out = np.empty(live.size + 1)
    m = K.transition_logweights(prev, nxt, live, N, nrow, beta, beta_rem, s.alpha, s.kappa, s.rule, out)
    logw = out[:m]
    if s.obs[t]:
        buf = np.empty(tb.cn.shape[1] + 1)
        j = 0
        for k in range(live.size):
            if live[k]:
                logw[j] += K.state_emission_logpred(k, s.y[t], tb.cn, tb.cache, tb.cn.shape[1],
                                                    tb.nobs[k], tb.alpha_e, tb.pt, buf)
                j += 1
        logw[-1] += K.t_logpdf(s.y[t], *tb.pt)
    p = np.exp(logw - logw.max())
    p /= p.sum()
    full = np.zeros(state.num_states + 1)
    ids = np.concatenate([np.flatnonzero(live), [state.num_states]])
    full[ids] = p
    return full


def sample_state_at(t, state, series, config, rng):
    """Draw z_t from its full conditional; returns K for a brand-new state."""
    if state is None or state.z.size == 0:
        return 0
    p = state_conditional(t, state, series, config)
    return int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right").clip(max=p.size - 1))


def fit(series, config=None, prior=None):
    """Segment one series; returns the MAP-snapshot segmentation and its finite HMM."""
    config = config or HdpHmmConfig()
    if not isinstance(series, RegularSeries):
        series = RegularSeries(0, 240, np.asarray(series, dtype=float))
    n_present = int(series.present.sum())
    if n_present == 0:
        raise AllMissing("series has no present values")
    if n_present < 2:
        raise TooShort("need at least 2 present values")
    rng = make_rng(config.seed)
    s = _Sampler(series, config, rng, prior)
    s.initialize()
    best = None
    diags = []
    hp = config.hyperprior
    for sweep in range(config.sweeps):
        s.sweep_states()
        s.sweep_clusters()
        s.compact()
        _, m, w = s.sample_beta()
        if hp is not None and m is not None:
            s.resample_hyper(m, w, hp)
        lp = s.log_posterior()
        diags.append({"sweep": sweep, "num_states": s.num_states, "log_posterior": lp})
        if sweep >= config.burn_in and (best is None or lp > best[0]):
            k = s.num_states
            best = (lp, s.z.copy(), s.cz.copy(), np.concatenate([s.beta[:k], s.beta_rem]), s.alpha, s.kappa)
    lp, z, cz, beta, alpha, kappa = best
    states, model, ncl = s.finalize(z, cz, beta, alpha, kappa)
    return SegmentationResult(
        series=series,
        states=states,
        model=model,
        log_likelihood=forward_log_likelihood(model, series),
        sweep_diagnostics=diags,
        config=config,
        log_posterior=lp,
        clusters_per_state=ncl,
    )
