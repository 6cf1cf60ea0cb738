"""JSON-ready views of segmentation results, shared by the CLI and the service."""

from __future__ import annotations

import json
import math

import numpy as np

from .changepoint import extract_changepoints


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def state_summaries(result):
    """Per-state mean, std, expected duration and occupancy of a SegmentationResult."""
    model = result.model
    occ = np.bincount(result.states, minlength=model.num_states) / len(result.states)
    out = []
    for k, em in enumerate(model.emissions):
        p = model.transition[k, k]
        out.append({
            "id": k,
            "mean_ms": float(em.mean()),
            "std_ms": float(em.std()),
            # a lone state never leaves; its duration is unbounded
            "expected_duration_steps": None if p >= 1.0 else 1.0 / (1.0 - p),
            "occupancy_fraction": float(occ[k]),
        })
    return out


def result_to_dict(result, include_diagnostics=False):
    s = result.series
    cps = extract_changepoints(result.states, s)
    d = {
        "series_id": s.series_id,
        "start": int(s.start_time),
        "interval": int(s.interval),
        "values": s.to_list(),
        "states": [int(z) for z in result.states],
        "num_states": int(result.num_states),
        "num_segments": int(result.num_segments()),
        "change_times": list(cps.change_times),
        "log_likelihood": _finite(result.log_likelihood),
        "log_posterior": _finite(result.log_posterior),
        "state_summaries": state_summaries(result),
        "transition": result.model.transition.tolist(),
        "config": result.config.to_dict() if result.config is not None else None,
    }
    if include_diagnostics:
        d["sweep_diagnostics"] = result.sweep_diagnostics
    return d


def dumps(obj):
    """Canonical JSON bytes: sorted keys, no whitespace, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
