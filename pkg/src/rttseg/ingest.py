"""Measurement ticks -> regular, missing-aware RTT series; file formats; fixture client."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyWindow, InvalidTick, NotFound, ParseError, SchemaError, TransportError

MISSING = None
DEFAULT_INTERVAL = 240


@dataclass(frozen=True)
class RawTick:
    """One probing round: a timestamp and up to three raw RTTs (ms)."""

    timestamp: int
    rtt_values: tuple = ()

    def __post_init__(self):
        if self.timestamp < 0:
            raise InvalidTick(f"negative timestamp {self.timestamp}")
        vals = tuple(float(v) for v in self.rtt_values)
        for v in vals:
            if not math.isfinite(v) or v < 0:
                raise InvalidTick(f"invalid rtt value {v!r} at t={self.timestamp}")
        object.__setattr__(self, "rtt_values", vals)


@dataclass(eq=False)
class RegularSeries:
    """Evenly spaced RTT observations; NaN in ``values`` marks a missing slot."""

    start_time: int
    interval: int
    values: np.ndarray
    series_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError("interval must be positive")
        v = np.array([np.nan if x is None else x for x in self.values], dtype=float) \
            if not isinstance(self.values, np.ndarray) else self.values.astype(float, copy=True)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("a series needs at least one slot")
        present = ~np.isnan(v)
        if np.any(~np.isfinite(v[present])) or np.any(v[present] < 0):
            raise InvalidTick("series values must be finite and non-negative")
        v.setflags(write=False)
        self.values = v

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, RegularSeries):
            return NotImplemented
        return (
            self.start_time == other.start_time
            and self.interval == other.interval
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    @property
    def present(self):
        return ~np.isnan(self.values)

    @property
    def times(self):
        return self.start_time + self.interval * np.arange(len(self), dtype=np.int64)

    @property
    def stop_time(self):
        return self.start_time + self.interval * len(self)

    def present_values(self):
        return self.values[self.present]

    def to_list(self):
        return [None if math.isnan(v) else float(v) for v in self.values]

    def to_ticks(self):
        """One RawTick per slot (empty for missing slots)."""
        return [
            RawTick(int(t), () if math.isnan(v) else (float(v),))
            for t, v in zip(self.times, self.values)
        ]


def num_slots(start, stop, interval):
    return -(-(stop - start) // interval)


def regularize(ticks: Sequence[RawTick], start: int, stop: int, interval: int, series_id=""):
    """Bin ticks onto the half-open grid [start, stop) keeping the per-slot minimum.

    Slots without any value are left missing; nothing is interpolated.
    """
    if interval <= 0:
        raise ValueError("interval must be positive")
    if start >= stop:
        raise EmptyWindow(f"empty window [{start}, {stop})")
    n = num_slots(start, stop, interval)
    out = np.full(n, np.inf)
    for tick in ticks:
        if not isinstance(tick, RawTick):
            tick = RawTick(*tick)
        if not (start <= tick.timestamp < stop) or not tick.rtt_values:
            continue
        s = (tick.timestamp - start) // interval
        m = min(tick.rtt_values)
        if m < out[s]:
            out[s] = m
    out[np.isinf(out)] = np.nan
    return RegularSeries(int(start), int(interval), out, series_id=series_id)


# --- file formats -----------------------------------------------------------------


def _series_from_rows(rows, interval, series_id):
    if not rows:
        raise ParseError("no data rows")
    times = [t for t, _ in rows]
    if interval is None:
        diffs = np.diff(sorted(set(times)))
        interval = int(np.gcd.reduce(diffs)) if diffs.size else DEFAULT_INTERVAL
    start = min(times)
    stop = max(times) + interval
    n = num_slots(start, stop, interval)
    vals = np.full(n, np.nan)
    for t, v in rows:
        if (t - start) % interval:
            raise ParseError(f"timestamp {t} is off the {interval}s grid")
        s = (t - start) // interval
        if v is not None and (np.isnan(vals[s]) or v < vals[s]):
            vals[s] = v
    return RegularSeries(int(start), int(interval), vals, series_id=series_id)


def _parse_rtt(raw, lineno):
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"bad rtt value {raw!r}", lineno) from None
    if not math.isfinite(v) or v < 0:
        raise ParseError(f"rtt must be finite and non-negative, got {raw!r}", lineno)
    return v


def _parse_time(raw, lineno):
    try:
        t = int(raw)
    except (TypeError, ValueError):
        raise ParseError(f"bad timestamp {raw!r}", lineno) from None
    if t < 0:
        raise ParseError(f"negative timestamp {t}", lineno)
    return t


def read_series(path, format=None, interval=None, series_id=None):
    """Read a CSV (``timestamp,rtt``) or JSONL (``{"t", "rtt"}``) series file.

    Missing values are empty CSV fields or JSON nulls.  The grid interval is
    inferred from the timestamps unless given.
    """
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix in (".jsonl", ".json") else "csv"
    if series_id is None:
        series_id = path.stem
    rows = []
    with open(path, newline="") as fh:
        if format == "csv":
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise SchemaError(f"{path}: empty file")
            header = [h.strip() for h in header]
            if "timestamp" not in header or "rtt" not in header:
                raise SchemaError(f"{path}: header must contain 'timestamp' and 'rtt', got {header}")
            it, ir = header.index("timestamp"), header.index("rtt")
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                if len(rec) <= max(it, ir):
                    raise ParseError("too few fields", lineno)
                t = _parse_time(rec[it].strip(), lineno)
                raw = rec[ir].strip()
                rows.append((t, None if raw == "" else _parse_rtt(raw, lineno)))
        elif format == "jsonl":
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ParseError(str(e), lineno) from None
                if not isinstance(obj, dict) or "t" not in obj or "rtt" not in obj:
                    raise SchemaError(f"{path}: line {lineno} needs keys 't' and 'rtt'")
                t = _parse_time(obj["t"], lineno)
                raw = obj["rtt"]
                if isinstance(raw, bool):
                    raise ParseError(f"bad rtt value {raw!r}", lineno)
                rows.append((t, None if raw is None else _parse_rtt(raw, lineno)))
        else:
            raise ValueError(f"unknown format {format!r}")
    return _series_from_rows(rows, interval, series_id)


def write_series(series, path, format=None):
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix in (".jsonl", ".json") else "csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if format == "csv":
            fh.write("timestamp,rtt\n")
            for t, v in zip(series.times, series.to_list()):
                fh.write(f"{int(t)},{'' if v is None else repr(v)}\n")
        elif format == "jsonl":
            for t, v in zip(series.times, series.to_list()):
                fh.write(json.dumps({"t": int(t), "rtt": v}) + "\n")
        else:
            raise ValueError(f"unknown format {format!r}")


# --- measurement platform -----------------------------------------------------------


class MeasurementClient:
    """Source of raw ticks for a (measurement, probe) pair.

    Implementations must be safe to share between concurrent requests.
    """

    def fetch(self, msm_id, prb_id, start, stop):
        raise NotImplementedError


class FixtureClient(MeasurementClient):
    """Reads ``<root>/<msm_id>/<prb_id>.jsonl``.

    Each line is ``{"t": int, "rtt": number | null | [numbers]}``; a list
    holds the individual pings of one round.
    """

    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, msm_id, prb_id):
        return self.root / str(msm_id) / f"{prb_id}.jsonl"

    def fetch(self, msm_id, prb_id, start, stop):
        path = self.path_for(msm_id, prb_id)
        if not path.is_file():
            raise NotFound(msm_id, prb_id)
        ticks = []
        try:
            with open(path) as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    t = int(obj["t"])
                    if not (start <= t < stop):
                        continue
                    rtt = obj.get("rtt")
                    if rtt is None:
                        vals = ()
                    elif isinstance(rtt, list):
                        vals = tuple(v for v in rtt if v is not None)
                    else:
                        vals = (rtt,)
                    ticks.append(RawTick(t, vals))
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise TransportError(f"{path}: {e}") from e
        return ticks


def fetch_measurement(client, msm_id, prb_id, start, stop):
    """Raw ticks in [start, stop); an empty window short-circuits to []."""
    if stop <= start:
        return []
    ticks = client.fetch(msm_id, prb_id, start, stop)
    return [t for t in ticks if start <= t.timestamp < stop]


def write_fixture(root, msm_id, prb_id, ticks):
    """Store ticks in the fixture layout read by ``FixtureClient``."""
    path = Path(root) / str(msm_id) / f"{prb_id}.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for tick in ticks:
            fh.write(json.dumps({"t": int(tick.timestamp), "rtt": list(tick.rtt_values)}) + "\n")
    return path
