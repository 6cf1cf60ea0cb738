"""Changepoints from state sequences, scoring against labels, change-frequency aggregation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyWindow, LengthMismatch, ParseError, SchemaError


@dataclass(frozen=True)
class ChangePointSet:
    """Times (epoch s) of the first tick of every new segment."""

    series_id: str
    change_times: tuple = ()

    def __post_init__(self):
        ts = tuple(int(t) for t in self.change_times)
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("change times must be strictly increasing")
        object.__setattr__(self, "change_times", ts)

    def __len__(self):
        return len(self.change_times)


@dataclass(frozen=True)
class TrueChange:
    time: int
    magnitude: float = 1.0


@dataclass(frozen=True)
class CpdMetrics:
    true_positive: int
    false_positive: int
    false_negative: int
    precision: float
    recall: float
    weighted_recall: float

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class ChangeFrequency:
    bucket_start: int
    bucket_width: int
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def bucket_starts(self):
        return self.bucket_start + self.bucket_width * np.arange(self.counts.size, dtype=np.int64)


def extract_changepoints(states, series):
    """A change at every t >= 1 where the state differs from the previous step."""
    z = np.asarray(states)
    if z.size != len(series):
        raise LengthMismatch(f"{z.size} states for a series of {len(series)} ticks")
    idx = np.flatnonzero(z[1:] != z[:-1]) + 1
    return ChangePointSet(series.series_id, tuple(series.times[idx].tolist()))


def _truth(truth):
    out = []
    for c in truth:
        if isinstance(c, TrueChange):
            out.append(c)
        elif isinstance(c, (tuple, list)):
            out.append(TrueChange(int(c[0]), float(c[1]) if len(c) > 1 else 1.0))
        else:
            out.append(TrueChange(int(c)))
    return sorted(out, key=lambda c: c.time)


def match(predicted, truth, tolerance):
    """Greedy one-to-one matching in time order; returns (pred index, truth index) pairs."""
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    times = list(predicted.change_times if isinstance(predicted, ChangePointSet) else predicted)
    truth = _truth(truth)
    used = [False] * len(truth)
    pairs = []
    for i, p in enumerate(times):
        for j, c in enumerate(truth):
            if not used[j] and abs(p - c.time) <= tolerance:
                used[j] = True
                pairs.append((i, j))
                break
    return pairs


def score(predicted, truth, tolerance):
    """Precision, recall and magnitude-weighted recall of predicted changes.

    With no predictions precision is 1.0; with no true changes recall and
    weighted recall are 1.0.
    """
    truth = _truth(truth)
    n_pred = len(predicted.change_times if isinstance(predicted, ChangePointSet) else predicted)
    pairs = match(predicted, truth, tolerance)
    tp = len(pairs)
    fp = n_pred - tp
    fn = len(truth) - tp
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    total = sum(c.magnitude for c in truth)
    if total > 0:
        weighted = sum(truth[j].magnitude for _, j in pairs) / total
    else:
        weighted = recall
    return CpdMetrics(tp, fp, fn, precision, recall, weighted)


def aggregate_metrics(results):
    """Pool (TP, FP, FN, matched magnitude, total magnitude) over several series."""
    tp = fp = fn = 0
    got = tot = 0.0
    for m, matched_mag, total_mag in results:
        tp += m.true_positive
        fp += m.false_positive
        fn += m.false_negative
        got += matched_mag
        tot += total_mag
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return CpdMetrics(tp, fp, fn, precision, recall, got / tot if tot > 0 else recall)


def change_frequency(sets, window_start, window_stop, bucket_width=360):
    """Count change times of all sets in consecutive buckets of [start, stop)."""
    if bucket_width <= 0:
        raise ValueError("bucket_width must be positive")
    if window_start >= window_stop:
        raise EmptyWindow(f"empty window [{window_start}, {window_stop})")
    n = -(-(window_stop - window_start) // bucket_width)
    counts = np.zeros(n, dtype=np.int64)
    for s in sets:
        t = np.asarray(s.change_times if isinstance(s, ChangePointSet) else s, dtype=np.int64)
        t = t[(t >= window_start) & (t < window_stop)]
        np.add.at(counts, (t - window_start) // bucket_width, 1)
    return ChangeFrequency(int(window_start), int(bucket_width), counts)


def change_magnitude(series, t_index, width=None):
    """|median after - median before| around a change at tick index ``t_index``."""
    v = series.values
    lo = 0 if width is None else max(0, t_index - width)
    hi = v.size if width is None else min(v.size, t_index + width)
    before, after = v[lo:t_index], v[t_index:hi]
    before, after = before[~np.isnan(before)], after[~np.isnan(after)]
    if before.size == 0 or after.size == 0:
        return 0.0
    return float(abs(np.median(after) - np.median(before)))


def truth_magnitudes(series, times):
    """Magnitudes for labeled change times, each from the segments between neighbouring labels."""
    idx = sorted(int((t - series.start_time) // series.interval) for t in times)
    bounds = [0] + idx + [len(series)]
    out = []
    v = series.values
    for i, t in enumerate(idx):
        before = v[bounds[i]:t]
        after = v[t:bounds[i + 2]]
        before, after = before[~np.isnan(before)], after[~np.isnan(after)]
        m = 0.0 if before.size == 0 or after.size == 0 else abs(np.median(after) - np.median(before))
        out.append(TrueChange(int(series.start_time + t * series.interval), float(m)))
    return out


def read_truth(path):
    """Read a ``time,magnitude`` CSV of labeled changes."""
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:1] != ["time"]:
            raise SchemaError(f"{path}: header must be 'time,magnitude', got {header}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                t = int(rec[0])
                mag = float(rec[1]) if len(rec) > 1 and rec[1].strip() else 1.0
            except ValueError:
                raise ParseError(f"bad row {rec!r}", lineno) from None
            out.append(TrueChange(t, mag))
    return sorted(out, key=lambda c: c.time)


def write_truth(path, changes):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("time,magnitude\n")
        for c in _truth(changes):
            fh.write(f"{c.time},{c.magnitude!r}\n")


def write_frequency(freq, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("bucket_start,count\n")
        for b, c in zip(freq.bucket_starts, freq.counts):
            fh.write(f"{int(b)},{int(c)}\n")
