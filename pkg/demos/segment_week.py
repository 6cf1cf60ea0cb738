"""Segmenting one synthetic week of RTT measurements.

Run with ``python demos/segment_week.py``.
"""

# %% A week of ticks at 4-minute spacing with a few level shifts, spikes and gaps
import numpy as np

from rttseg.changepoint import extract_changepoints
from rttseg.hdphmm import HdpHmmConfig, fit
from rttseg.report import state_summaries
from rttseg.synth import matched_accuracy, rtt_week

rng = np.random.default_rng(3)
series, labels = rtt_week(rng)
print(f"{len(series.values)} ticks, {int((~series.present).sum())} missing")

# %% Fit the sticky HDP-HMM; the state count is inferred
result = fit(series, HdpHmmConfig(sweeps=500, burn_in=200, seed=1))
print("states:", result.num_states, "segments:", result.num_segments())
print("label agreement with the generator:", round(matched_accuracy(labels, result.states), 3))

# %% Per-state summary: level, spread, mean dwell time
for st in state_summaries(result):
    dur = st["expected_duration_steps"]
    print(f"state {st['id']}: {st['mean_ms']:6.2f} ms  sd {st['std_ms']:5.2f}  "
          f"occupancy {st['occupancy_fraction']:.2f}  dwell {dur if dur is None else round(dur, 1)} ticks")

# %% Change times, as hours into the week
cps = extract_changepoints(result.states, series)
print("changes at hours:", [round((t - series.start_time) / 3600, 1) for t in cps.change_times])
