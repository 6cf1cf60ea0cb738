"""Finite HMMs with Gaussian-mixture emissions: likelihood, decoding, simulation."""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dpmm import DpmmModel, dpmm_logpdf
from .errors import DomainError
from .ingest import RegularSeries


def expected_duration(p_self):
    """Mean sojourn (in steps) of a state with self-transition probability p_self.

    Rational inputs (``fractions.Fraction``) give an exact rational result.
    """
    if isinstance(p_self, numbers.Rational):
        p = p_self
    else:
        p = float(p_self)
    if not 0 <= p < 1:
        raise DomainError(f"self-transition probability must be in [0, 1), got {p}")
    return 1 / (1 - p)


@dataclass(frozen=True)
class HmmModel:
    """K-state HMM whose emissions are finite Gaussian mixtures.

    ``beta`` carries the global state weights (K entries plus the unallocated
    remainder) when the model comes from the HDP-HMM; it is informational.
    """

    transition: np.ndarray
    initial: np.ndarray
    emissions: tuple
    beta: np.ndarray = None

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        pi0 = np.asarray(self.initial, dtype=float)
        k = P.shape[0]
        if P.shape != (k, k) or k == 0:
            raise ValueError("transition must be a non-empty square matrix")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1) > 1e-9):
            raise ValueError("transition rows must be probability vectors")
        if pi0.shape != (k,) or np.any(pi0 < 0) or abs(pi0.sum() - 1) > 1e-9:
            raise ValueError("initial must be a probability vector of length K")
        if len(self.emissions) != k:
            raise ValueError("need one emission model per state")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial", pi0)
        object.__setattr__(self, "emissions", tuple(self.emissions))
        if self.beta is not None:
            object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))

    @property
    def num_states(self):
        return self.transition.shape[0]

    @property
    def expected_durations(self):
        return np.array([expected_duration(p) for p in np.diag(self.transition)])

    @property
    def per_state(self):
        """(mean ms, std ms, expected duration in steps) for every state."""
        return [
            (e.mean(), e.std(), d)
            for e, d in zip(self.emissions, self.expected_durations)
        ]

    @classmethod
    def gaussian(cls, transition, initial, means, variances):
        ems = [DpmmModel.single(m, v) for m, v in zip(means, variances)]
        return cls(np.asarray(transition), np.asarray(initial), tuple(ems))


def _values(series):
    if isinstance(series, RegularSeries):
        return series.values
    return np.asarray(series, dtype=float)


def emission_logliks(model, series):
    """(T, K) matrix of log p(y_t | state k); zero rows at missing steps."""
    y = _values(series)
    out = np.zeros((y.size, model.num_states))
    present = ~np.isnan(y)
    for k, em in enumerate(model.emissions):
        out[present, k] = dpmm_logpdf(em, y[present])
    return out


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def forward_log_likelihood(model, series):
    """log p(y_1:T | model) via the forward recursion in log space."""
    B = emission_logliks(model, series)
    logA = _log(model.transition)
    la = _log(model.initial) + B[0]
    for t in range(1, B.shape[0]):
        la = logsumexp(la[:, None] + logA, axis=0) + B[t]
    return float(logsumexp(la))


def viterbi(model, series):
    """Most likely state path; ties go to the lower state id."""
    B = emission_logliks(model, series)
    T, K = B.shape
    logA = _log(model.transition)
    delta = _log(model.initial) + B[0]
    back = np.zeros((T, K), dtype=np.int64)
    for t in range(1, T):
        scores = delta[:, None] + logA
        back[t] = np.argmax(scores, axis=0)  # argmax returns the first maximum
        delta = scores[back[t], np.arange(K)] + B[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def path_log_prob(model, series, path):
    """Joint log p(y, z = path)."""
    B = emission_logliks(model, series)
    path = np.asarray(path)
    with np.errstate(divide="ignore"):
        lp = math.log(model.initial[path[0]]) if model.initial[path[0]] > 0 else -math.inf
        lp += _log(model.transition[path[:-1], path[1:]]).sum()
    return float(lp + B[np.arange(path.size), path].sum())


def simulate(model, T, rng, start_time=0, interval=240, series_id="simulated"):
    """Draw a state path and observations; returns (RegularSeries, states)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    K = model.num_states
    cum = np.cumsum(model.transition, axis=1)
    u = rng.random(T)
    z = np.empty(T, dtype=np.int64)
    z[0] = min(int(np.searchsorted(np.cumsum(model.initial), u[0], side="right")), K - 1)
    for t in range(1, T):
        z[t] = min(int(np.searchsorted(cum[z[t - 1]], u[t], side="right")), K - 1)
    y = np.empty(T)
    for k, em in enumerate(model.emissions):
        idx = np.flatnonzero(z == k)
        if idx.size:
            y[idx] = em.sample(rng, idx.size)
    # RTTs are non-negative; Gaussian tails occasionally are not
    np.maximum(y, 0.0, out=y)
    return RegularSeries(start_time, interval, y, series_id=series_id), z
