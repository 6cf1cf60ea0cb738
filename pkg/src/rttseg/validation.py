"""Goodness of fit: likelihood of observed series vs. series simulated from their own fit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dist import make_rng
from .errors import TooFew
from .hmm import forward_log_likelihood, simulate


@dataclass(frozen=True)
class LikelihoodPair:
    series_id: str
    observed_loglik: float
    simulated_loglik: float
    T: int

    def __post_init__(self):
        if not (math.isfinite(self.observed_loglik) and math.isfinite(self.simulated_loglik)):
            raise ValueError("log-likelihoods must be finite")


def likelihood_pair(model, series, rng):
    """Simulate len(series) steps from ``model`` and score both series under it."""
    sim, _ = simulate(model, len(series), rng, series.start_time, series.interval, series.series_id)
    # keep the observed missingness pattern so both likelihoods cover the same slots
    if not series.present.all():
        v = sim.values.copy()
        v[~series.present] = np.nan
        sim = type(sim)(sim.start_time, sim.interval, v, series_id=sim.series_id)
    return LikelihoodPair(
        series.series_id,
        forward_log_likelihood(model, series),
        forward_log_likelihood(model, sim),
        len(series),
    )


def likelihood_pairs(results, rng=None):
    """One LikelihoodPair per SegmentationResult (each needs .model and .series)."""
    rng = make_rng(rng)
    return [likelihood_pair(r.model, r.series, rng) for r in results]


def qq_points(pairs):
    """Sorted observed quantiles against sorted simulated quantiles."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise TooFew(f"need at least 2 pairs, got {len(pairs)}")
    obs = np.sort([p.observed_loglik if isinstance(p, LikelihoodPair) else p[0] for p in pairs])
    sim = np.sort([p.simulated_loglik if isinstance(p, LikelihoodPair) else p[1] for p in pairs])
    return [(float(a), float(b)) for a, b in zip(obs, sim)]


def ks_test(pairs):
    """Two-sample Kolmogorov-Smirnov test of observed vs simulated log-likelihoods."""
    obs = [p.observed_loglik for p in pairs]
    sim = [p.simulated_loglik for p in pairs]
    return stats.ks_2samp(obs, sim)


def ks_critical(n, m, level=0.01):
    """Asymptotic critical value of the two-sample KS statistic."""
    c = math.sqrt(-0.5 * math.log(level / 2))
    return c * math.sqrt((n + m) / (n * m))


def write_pairs_csv(pairs, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("observed,simulated\n")
        for p in pairs:
            fh.write(f"{p.observed_loglik!r},{p.simulated_loglik!r}\n")
