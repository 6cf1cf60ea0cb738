"""Checking model fit by comparing observed and simulated log-likelihoods.

Run with ``python demos/goodness_of_fit.py``; writes ``qq_pairs.csv`` next to the working dir.
"""

# %% Fit a batch of series drawn from random few-state HMMs
import numpy as np

from rttseg.hdphmm import HdpHmmConfig, fit
from rttseg.hmm import HmmModel, simulate
from rttseg.validation import ks_critical, ks_test, likelihood_pairs, qq_points, write_pairs_csv

rng = np.random.default_rng(0)
results = []
for i in range(40):
    k = int(rng.integers(1, 4))
    P = np.full((k, k), 0.02 / max(k - 1, 1))
    np.fill_diagonal(P, 0.98 if k > 1 else 1.0)
    m = HmmModel.gaussian(P, np.full(k, 1 / k), np.sort(rng.uniform(10, 100, k)), rng.uniform(0.5, 4, k) ** 2)
    s, _ = simulate(m, 300, rng)
    results.append(fit(s, HdpHmmConfig(sweeps=150, burn_in=50, seed=i)))

# %% For each fit, the likelihood of the data and of a fresh simulation from the fitted model
pairs = likelihood_pairs(results, 1)
obs, sim = np.array(qq_points(pairs)).T
print("largest quantile gap:", round(float(np.max(np.abs(obs - sim))), 2))

# %% Two-sample KS on the per-tick log-likelihoods; small D means the model reproduces the data
ks = ks_test(pairs)
print(f"D={ks.statistic:.3f}, 1% critical {ks_critical(len(pairs), len(pairs)):.3f}")
write_pairs_csv(pairs, "qq_pairs.csv")
