"""Synthetic RTT generators shared by the tests, the acceptance suite and the demos."""

from __future__ import annotations

import numpy as np

from .dist import make_rng
from .hmm import HmmModel, simulate
from .ingest import RegularSeries


def three_state_model(means=(10.0, 50.0, 100.0), sigma=2.0, p_self=0.98):
    k = len(means)
    P = np.full((k, k), (1.0 - p_self) / (k - 1))
    np.fill_diagonal(P, p_self)
    return HmmModel.gaussian(P, np.full(k, 1.0 / k), means, [sigma**2] * k)


def three_state_series(rng, T=2000, **kw):
    """(series, true states) from ``three_state_model``."""
    return simulate(three_state_model(**kw), T, make_rng(rng))


def jitter_series(rng, level=10.0, sigma=0.01, T=500, start=0, interval=240):
    rng = make_rng(rng)
    return RegularSeries(start, interval, level + rng.normal(0.0, sigma, T), series_id="jitter")


def level_series(rng, levels, lengths, noise=1.0, df=None, spikes=0.0, spike_scale=30.0,
                 missing=0.0, start=0, interval=240, series_id="levels"):
    """Piecewise-constant levels plus noise.

    ``df`` switches the noise to Student-t; ``spikes`` is the fraction of
    steps hit by a positive exponential spike; ``missing`` the fraction of
    missing steps.  Returns (series, true segment labels).
    """
    rng = make_rng(rng)
    labels = np.repeat(np.arange(len(levels)), lengths)
    base = np.asarray(levels, dtype=float)[labels]
    T = base.size
    eps = rng.standard_t(df, T) if df else rng.standard_normal(T)
    y = base + noise * eps
    hit = rng.random(T) < spikes
    y[hit] += rng.exponential(spike_scale, hit.sum())
    y = np.maximum(y, 0.0)
    y[rng.random(T) < missing] = np.nan
    return RegularSeries(start, interval, y, series_id=series_id), labels


def rtt_week(rng, T=2520, levels=(24.0, 31.0, 24.0, 45.0, 31.0, 24.0), missing=0.03, start=0):
    """Week-long series (4-min ticks) shaped like real RTTs: floor plus skewed noise and spikes."""
    rng = make_rng(rng)
    cuts = np.sort(rng.choice(np.arange(100, T - 100), len(levels) - 1, replace=False))
    lengths = np.diff(np.concatenate([[0], cuts, [T]]))
    labels = np.repeat(np.arange(len(levels)), lengths)
    y = np.asarray(levels)[labels] + rng.exponential(0.8, T)
    hit = rng.random(T) < 0.02
    y[hit] += rng.exponential(40.0, hit.sum())
    y[rng.random(T) < missing] = np.nan
    return RegularSeries(start, 240, y, series_id="week"), labels


def matched_accuracy(true, pred):
    """Accuracy after the best one-to-one matching of predicted to true labels."""
    from scipy.optimize import linear_sum_assignment

    true = np.asarray(true)
    pred = np.asarray(pred)
    kt, kp = true.max() + 1, pred.max() + 1
    C = np.zeros((kp, kt))
    np.add.at(C, (pred, true), 1)
    r, c = linear_sum_assignment(-C)
    return float(C[r, c].sum() / true.size)
