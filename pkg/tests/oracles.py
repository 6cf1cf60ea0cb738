"""Independent reference computations used by the tests."""

import itertools
import math

import numpy as np
from scipy.special import logsumexp

from rttseg.dist import GaussParams
from rttseg.dpmm import DpmmModel
from rttseg.hmm import HmmModel


def mixture_logpdf(em, y):
    # direct sum, no shared code with the package
    return math.log(sum(w * math.exp(-(y - c.mu) ** 2 / (2 * c.sigma_sq)) / math.sqrt(2 * math.pi * c.sigma_sq)
                        for w, c in zip(em.weights, em.components)))


def enumerate_paths(model, y):
    """(log p(y), best path, its log joint) by brute force over all K^T paths."""
    K, T = model.num_states, len(y)
    B = [[0.0 if math.isnan(v) else mixture_logpdf(model.emissions[k], v) for k in range(K)] for v in y]
    scores = []
    best, best_path = -math.inf, None
    for path in itertools.product(range(K), repeat=T):
        with np.errstate(divide="ignore"):
            lp = math.log(model.initial[path[0]]) if model.initial[path[0]] > 0 else -math.inf
            for a, b in zip(path, path[1:]):
                p = model.transition[a, b]
                lp += math.log(p) if p > 0 else -math.inf
        lp += sum(B[t][k] for t, k in enumerate(path))
        scores.append(lp)
        if lp > best:
            best, best_path = lp, path
    return float(logsumexp(scores)), np.array(best_path), best


def random_model(rng, K):
    P = rng.dirichlet(np.ones(K), size=K)
    pi0 = rng.dirichlet(np.ones(K))
    ems = []
    for _ in range(K):
        c = rng.integers(1, 4)
        w = rng.dirichlet(np.ones(c))
        ems.append(DpmmModel(w, tuple(GaussParams(float(rng.normal(0, 5)), float(rng.uniform(0.3, 4)))
                                      for _ in range(c))))
    return HmmModel(P, pi0, tuple(ems))
