"""HTTP service exposing ticks, trends and trend summaries for (measurement, probe) pairs."""

from __future__ import annotations

import os
import threading
from collections import OrderedDict
from contextlib import asynccontextmanager
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import Response

from .changepoint import extract_changepoints
from .dist import derive_seed
from .errors import NotFound, TransportError
from .hdphmm import HdpHmmConfig, fit
from .ingest import DEFAULT_INTERVAL, FixtureClient, fetch_measurement, regularize
from .report import dumps, state_summaries

TIME_FORMATS = ("%Y-%m-%dT%H:%M", "%Y-%m-%d")


@dataclass(frozen=True)
class Settings:
    host: str = "127.0.0.1"
    port: int = 8000
    fixture_root: str = "fixtures"
    interval: int = DEFAULT_INTERVAL
    sweeps: int = 500
    burn_in: int = 200
    seed_salt: int = 0
    timeout_s: float = 10.0
    cache_size: int = 256

    @classmethod
    def from_env(cls, env=None, **overrides):
        env = os.environ if env is None else env
        kw = {}
        for name, cast in (("host", str), ("port", int), ("fixture_root", str), ("interval", int),
                           ("sweeps", int), ("burn_in", int), ("seed_salt", int),
                           ("timeout_s", float), ("cache_size", int)):
            key = "RTTSEG_" + name.upper()
            if key in env:
                kw[name] = cast(env[key])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


def parse_time(text):
    """Epoch seconds (UTC) from ``YYYY-MM-DD`` or ``YYYY-MM-DDTHH:MM``."""
    for fmt in TIME_FORMATS:
        try:
            dt = datetime.strptime(text, fmt)
        except (ValueError, TypeError):
            continue
        return int(dt.replace(tzinfo=timezone.utc).timestamp())
    raise ValueError(f"time must be YYYY-MM-DD or YYYY-MM-DDTHH:MM, got {text!r}")


class FitCache:
    """Thread-safe LRU of finished computations with one in-flight job per key."""

    def __init__(self, maxsize, workers=2):
        self.maxsize = maxsize
        self._done = OrderedDict()
        self._pending = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="rttseg-fit")

    def _finish(self, key, fut):
        with self._lock:
            self._pending.pop(key, None)
            if fut.exception() is None:
                self._done[key] = fut.result()
                self._done.move_to_end(key)
                while len(self._done) > self.maxsize:
                    self._done.popitem(last=False)

    def get(self, key, fn, timeout):
        with self._lock:
            if key in self._done:
                self._done.move_to_end(key)
                return self._done[key]
            fut = self._pending.get(key)
            fresh = fut is None
            if fresh:
                fut = self._pool.submit(fn)
                self._pending[key] = fut
        if fresh:
            # runs inline when the job already finished, so it must not hold the lock
            fut.add_done_callback(lambda f: self._finish(key, f))
        return fut.result(timeout=timeout)

    def __len__(self):
        return len(self._done)

    def shutdown(self):
        self._pool.shutdown(wait=False, cancel_futures=True)


class TrendsEngine:
    """Fetch, regularize and segment; everything the endpoints need, minus HTTP."""

    def __init__(self, settings, client=None):
        self.settings = settings
        self.client = client or FixtureClient(settings.fixture_root)
        self.cache = FitCache(settings.cache_size)
        self.config = HdpHmmConfig(sweeps=settings.sweeps, burn_in=settings.burn_in)

    def series(self, msm_id, prb_id, start, stop):
        ticks = fetch_measurement(self.client, msm_id, prb_id, start, stop)
        return regularize(ticks, start, stop, self.settings.interval, series_id=f"{msm_id}/{prb_id}")

    def ticks_body(self, msm_id, prb_id, start, stop):
        s = self.series(msm_id, prb_id, start, stop)
        return {
            "msm_id": msm_id,
            "prb_id": prb_id,
            "start": start,
            "stop": stop,
            "interval": s.interval,
            "ticks": [{"t": int(t), "rtt": v} for t, v in zip(s.times, s.to_list())],
        }

    def _compute(self, msm_id, prb_id, start, stop):
        s = self.series(msm_id, prb_id, start, stop)
        seed = derive_seed(self.settings.seed_salt, msm_id, prb_id, start, stop)
        res = fit(s, replace(self.config, seed=seed))
        summary = {
            "msm_id": msm_id,
            "prb_id": prb_id,
            "start": start,
            "stop": stop,
            "num_states": int(res.num_states),
            "states": state_summaries(res),
            "change_times": list(extract_changepoints(res.states, s).change_times),
            "log_likelihood": float(res.log_likelihood),
        }
        ticks = [
            {"t": int(t), "rtt": v, "state": int(z)}
            for t, v, z in zip(s.times, s.to_list(), res.states)
        ]
        return {"interval": s.interval, "ticks": ticks, "summary": summary}

    def trends(self, msm_id, prb_id, start, stop):
        # fail fast on unknown pairs and unusable windows before queueing a fit
        s = self.series(msm_id, prb_id, start, stop)
        n = int(s.present.sum())
        if n < 2:
            raise _Unprocessable(f"window has {n} present values; need at least 2")
        key = (msm_id, prb_id, start, stop)
        return self.cache.get(key, lambda: self._compute(*key), self.settings.timeout_s)


class _Unprocessable(Exception):
    pass


def _json(body):
    return Response(content=dumps(body), media_type="application/json")


def create_app(settings=None, client=None):
    settings = settings or Settings.from_env()
    engine = TrendsEngine(settings, client)

    @asynccontextmanager
    async def lifespan(app):
        yield
        engine.cache.shutdown()

    app = FastAPI(title="rttseg trends", version="1", lifespan=lifespan)
    app.state.engine = engine

    def window(start, stop):
        try:
            a, b = parse_time(start), parse_time(stop)
        except ValueError as e:
            raise HTTPException(400, str(e)) from None
        if a >= b:
            raise HTTPException(400, "start must be before stop")
        return a, b

    def guarded(fn, *args):
        try:
            return fn(*args)
        except NotFound as e:
            raise HTTPException(404, str(e)) from None
        except _Unprocessable as e:
            raise HTTPException(422, str(e)) from None
        except FutureTimeout:
            raise HTTPException(503, "segmentation still running; retry shortly",
                                headers={"Retry-After": "5"}) from None
        except TransportError as e:
            raise HTTPException(502, str(e)) from None

    @app.get("/api/v1/ticks/{msm_id}/{prb_id}")
    def ticks(msm_id: int, prb_id: int, start: str = Query(...), stop: str = Query(...)):
        a, b = window(start, stop)
        return _json(guarded(engine.ticks_body, msm_id, prb_id, a, b))

    @app.get("/api/v1/trends/{msm_id}/{prb_id}")
    def trends(msm_id: int, prb_id: int, start: str = Query(...), stop: str = Query(...)):
        a, b = window(start, stop)
        r = guarded(engine.trends, msm_id, prb_id, a, b)
        return _json({"msm_id": msm_id, "prb_id": prb_id, "start": a, "stop": b, **r})

    @app.get("/api/v1/trends/{msm_id}/{prb_id}/summary")
    def summary(msm_id: int, prb_id: int, start: str = Query(...), stop: str = Query(...)):
        a, b = window(start, stop)
        return _json(guarded(engine.trends, msm_id, prb_id, a, b)["summary"])

    return app


def serve(settings):
    import uvicorn

    uvicorn.run(create_app(settings), host=settings.host, port=settings.port)
