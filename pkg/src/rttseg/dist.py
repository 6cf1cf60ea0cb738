"""Conjugate Normal-Inverse-chi^2 machinery and the basic random measures.

The Normal-Inverse-chi^2 family ``NIX(mu0, kappa0, nu0, sigma0_sq)`` is the
joint prior

    sigma^2 ~ Scaled-Inv-chi^2(nu0, sigma0_sq)
    mu | sigma^2 ~ N(mu0, sigma^2 / kappa0)

for a Gaussian with unknown mean and variance.  Its posterior predictive is a
location-scale Student-t, which is what both Gibbs samplers evaluate in their
inner loops.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DimensionError

VARIANCE_FLOOR = 1e-9
LOG_PI = math.log(math.pi)


@dataclass(frozen=True)
class NixParams:
    mu0: float
    kappa0: float
    nu0: float
    sigma0_sq: float

    def __post_init__(self):
        vals = (self.mu0, self.kappa0, self.nu0, self.sigma0_sq)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite NIX hyperparameters: {vals}")
        if self.kappa0 <= 0 or self.nu0 <= 0 or self.sigma0_sq <= 0:
            raise ValueError(f"kappa0, nu0 and sigma0_sq must be positive: {vals}")

    def as_tuple(self):
        return (float(self.mu0), float(self.kappa0), float(self.nu0), float(self.sigma0_sq))


@dataclass(frozen=True)
class GaussParams:
    mu: float
    sigma_sq: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma_sq)):
            raise ValueError("non-finite Gaussian parameters")
        if self.sigma_sq <= 0:
            raise ValueError("sigma_sq must be positive")

    @property
    def sigma(self):
        return math.sqrt(self.sigma_sq)


def make_rng(seed=None):
    """Return the generator used by every sampler in the package.

    Identical seeds and identical call sequences give identical draws.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(base, *keys):
    """Deterministic 63-bit seed from a base seed and arbitrary keys.

    Independent of process, thread and hash randomization, so batch drivers
    and the service get the same seed for the same work item.
    """
    h = hashlib.sha256(str(int(base)).encode())
    for k in keys:
        h.update(b"\x00")
        h.update(str(k).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


def default_prior(values, kappa0=0.01, nu0=2.0):
    """Weakly informative, scale-adaptive prior: median location, MAD^2 scale."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return NixParams(0.0, kappa0, nu0, 1.0)
    mu0 = float(np.median(v))
    mad = float(np.median(np.abs(v - mu0)))
    scale_sq = mad * mad
    if scale_sq < VARIANCE_FLOOR:
        scale_sq = float(np.var(v))
    return NixParams(mu0, kappa0, nu0, max(scale_sq, VARIANCE_FLOOR))


def _suff_stats(data):
    x = np.asarray(data, dtype=float).ravel()
    n = x.size
    if n == 0:
        return 0, 0.0, 0.0
    mean = float(x.mean())
    ss = float(((x - mean) ** 2).sum())
    return n, mean, ss


def posterior_from_stats(prior, n, mean, ss):
    """NIX update from count, sample mean and centred sum of squares."""
    if n == 0:
        return prior
    mu0, k0, v0, s0 = prior.as_tuple()
    kn = k0 + n
    vn = v0 + n
    mun = (k0 * mu0 + n * mean) / kn
    sn = (v0 * s0 + ss + (n * k0 / kn) * (mean - mu0) ** 2) / vn
    return NixParams(mun, kn, vn, max(sn, VARIANCE_FLOOR))


def nix_posterior(prior, data):
    """Exact conjugate posterior of ``prior`` after observing ``data``."""
    n, mean, ss = _suff_stats(data)
    if n and not math.isfinite(mean + ss):
        raise ValueError("data must be finite")
    return posterior_from_stats(prior, n, mean, ss)


def nix_log_marginal(prior, data):
    """log p(data) with the Gaussian parameters integrated against ``prior``."""
    n, mean, ss = _suff_stats(data)
    if n == 0:
        return 0.0
    post = posterior_from_stats(prior, n, mean, ss)
    mu0, k0, v0, s0 = prior.as_tuple()
    _, kn, vn, sn = post.as_tuple()
    return float(
        gammaln(vn / 2) - gammaln(v0 / 2)
        + 0.5 * math.log(k0 / kn)
        + 0.5 * v0 * math.log(v0 * s0)
        - 0.5 * vn * math.log(vn * sn)
        - 0.5 * n * LOG_PI
    )


def student_t_params(params):
    """(df, loc, scale^2) of the posterior predictive of ``params``."""
    mu, k, v, s = params.as_tuple()
    return v, mu, s * (1.0 + k) / k


def nix_posterior_predictive_logpdf(params, y):
    """log of the integral of N(y; mu, sigma^2) against NIX(params).

    Accepts a scalar or an array of query points.
    """
    df, loc, scale_sq = student_t_params(params)
    y = np.asarray(y, dtype=float)
    z2 = (y - loc) ** 2 / scale_sq
    out = (
        gammaln((df + 1) / 2) - gammaln(df / 2)
        - 0.5 * math.log(df * math.pi * scale_sq)
        - 0.5 * (df + 1) * np.log1p(z2 / df)
    )
    return float(out) if out.ndim == 0 else out


def nix_logpdf(params, mu, sigma_sq):
    """Joint log-density of (mu, sigma^2) under NIX(params)."""
    m0, k0, v0, s0 = params.as_tuple()
    log_invchi2 = (
        0.5 * v0 * math.log(v0 * s0 / 2) - gammaln(v0 / 2)
        - (v0 / 2 + 1) * np.log(sigma_sq) - v0 * s0 / (2 * sigma_sq)
    )
    var_mu = sigma_sq / k0
    log_norm = -0.5 * np.log(2 * math.pi * var_mu) - (mu - m0) ** 2 / (2 * var_mu)
    return log_invchi2 + log_norm


def sample_nix(params, rng, size=None):
    """Draw sigma^2 from its scaled inverse-chi^2 marginal, then mu given sigma^2.

    Returns a ``GaussParams`` when ``size`` is None, else two arrays.
    """
    mu0, k0, v0, s0 = params.as_tuple()
    chi2 = rng.chisquare(v0, size=size)
    sigma_sq = np.maximum(v0 * s0 / chi2, VARIANCE_FLOOR)
    mu = rng.normal(mu0, np.sqrt(sigma_sq / k0))
    if size is None:
        return GaussParams(float(mu), float(sigma_sq))
    return mu, sigma_sq


def sample_gem(alpha, n, rng, size=None):
    """First ``n`` stick-breaking weights of GEM(alpha).

    pi_k = eta_k * prod_{l<k} (1 - eta_l) with eta_k ~ Beta(1, alpha).
    With ``size`` set, returns a (size, n) array of independent draws.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    shape = (n,) if size is None else (size, n)
    eta = rng.beta(1.0, alpha, size=shape)
    # remaining stick before each break, computed in log space for long sticks;
    # a break of exactly 1 leaves log(0) = -inf and zero weight after it
    with np.errstate(divide="ignore"):
        log_rest = np.cumsum(np.log1p(-eta), axis=-1)
    log_rest = np.concatenate([np.zeros(shape[:-1] + (1,)), log_rest[..., :-1]], axis=-1)
    return eta * np.exp(log_rest)


def sample_dirichlet(concentration, rng, size=None):
    """Draw from Dir(concentration) by normalizing independent gammas."""
    a = np.asarray(concentration, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise DimensionError("Dirichlet needs at least 2 concentration entries")
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise ValueError("concentrations must be positive and finite")
    shape = a.shape if size is None else (size,) + a.shape
    g = rng.standard_gamma(np.broadcast_to(a, shape))
    tot = g.sum(axis=-1, keepdims=True)
    bad = tot[..., 0] <= 0
    if np.any(bad):
        # all gammas underflowed (tiny concentrations): fall back on the log-space draw
        u = rng.random(shape)
        logg = np.log(rng.standard_gamma(np.broadcast_to(a + 1.0, shape))) + np.log(u) / a
        g = np.where(bad[..., None], np.exp(logg - logg.max(axis=-1, keepdims=True)), g)
        tot = g.sum(axis=-1, keepdims=True)
    return g / tot
