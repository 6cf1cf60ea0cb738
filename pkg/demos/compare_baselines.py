"""HDP-HMM against BIC-selected GMM and HMM baselines and a plain DP mixture.

Run with ``python demos/compare_baselines.py``.
"""

# %% Three levels with heavy-tailed noise; the spikes are what trip up Gaussian models
import numpy as np

from rttseg.cli import compare_models
from rttseg.hdphmm import HdpHmmConfig
from rttseg.synth import level_series

rng = np.random.default_rng(11)
series, labels = level_series(rng, (20, 32, 20, 45), (200, 150, 250, 150), noise=1.0, df=3, spikes=0.02)
print("true segments:", 1 + int(np.count_nonzero(np.diff(labels))))

# %% Each model reports its k, log-likelihood, BIC (where defined) and segment count
out = compare_models(series, ["gmm", "hmm", "dpmm", "hdphmm"], HdpHmmConfig(seed=0), k_max=8, seed=0)
for name, m in out.items():
    bic = m["bic"]
    ll = m["log_likelihood"]
    print(f"{name:7s} k={m['k']:2d}  segments={m['num_segments']:4d}  "
          f"loglik={'-' if ll is None else round(ll, 1)}  bic={'-' if bic is None else round(bic, 1)}")

# %% Mixtures ignore time order, so every spike toggles the label and segments pile up.
# The HMMs share information across neighbouring ticks; the sticky prior also damps short visits.
