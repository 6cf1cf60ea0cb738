import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from rttseg.service import FitCache, Settings, create_app, parse_time

from service_fixtures import DAY, GAP, LEVELS, NEXT, STEP_AT, T0, build, validator

Q = {"start": DAY, "stop": NEXT}


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    root = build(tmp_path_factory.mktemp("fixtures"))
    app = create_app(Settings(fixture_root=str(root), sweeps=200, burn_in=50))
    with TestClient(app) as c:
        yield c


def test_parse_time():
    assert parse_time("2024-03-01") == 1709251200
    assert parse_time("2024-03-01T01:30") == 1709251200 + 5400
    with pytest.raises(ValueError):
        parse_time("03/01/2024")


def test_ticks_contract(client):
    r = client.get("/api/v1/ticks/1001/1", params=Q)
    assert r.status_code == 200
    body = r.json()
    validator("ticks").validate(body)
    assert len(body["ticks"]) == 360 and body["interval"] == 240
    assert body["ticks"][GAP] == {"t": T0 + 240 * GAP, "rtt": None}


def test_ticks_errors(client):
    assert client.get("/api/v1/ticks/1001/1", params={"start": DAY, "stop": DAY}).status_code == 400
    assert client.get("/api/v1/ticks/1001/1", params={"start": "yesterday", "stop": DAY}).status_code == 400
    assert client.get("/api/v1/ticks/9999/1", params=Q).status_code == 404


def test_trends_steps_and_determinism(client):
    r1 = client.get("/api/v1/trends/1001/1", params=Q)
    assert r1.status_code == 200
    body = r1.json()
    validator("trends").validate(body)
    changes = [(c - T0) // 240 for c in body["summary"]["change_times"]]
    assert len(changes) == len(STEP_AT)
    assert all(abs(a - b) <= 2 for a, b in zip(changes, STEP_AT))
    r2 = client.get("/api/v1/trends/1001/1", params=Q)
    assert r1.content == r2.content
    ticks = client.get("/api/v1/ticks/1001/1", params=Q).json()["ticks"]
    assert [{"t": t["t"], "rtt": t["rtt"]} for t in body["ticks"]] == ticks


def test_summary_two_levels(client):
    r = client.get("/api/v1/trends/1001/1/summary", params=Q)
    body = r.json()
    validator("summary").validate(body)
    assert body["num_states"] == 2 == len(body["states"])
    means = sorted(s["mean_ms"] for s in body["states"])
    # observed value is the per-tick minimum of three pings, slightly above the level
    assert abs(means[0] - LEVELS[0]) < 1 and abs(means[1] - LEVELS[1]) < 1
    assert sum(s["occupancy_fraction"] for s in body["states"]) == pytest.approx(1, abs=1e-6)


def test_summary_duration_passthrough(client):
    eng = client.app.state.engine
    body = client.get("/api/v1/trends/1001/1/summary", params=Q).json()
    s = eng.series(1001, 1, parse_time(DAY), parse_time(NEXT))
    from dataclasses import replace
    from rttseg.dist import derive_seed
    from rttseg.hdphmm import fit

    res = fit(s, replace(eng.config, seed=derive_seed(0, 1001, 1, parse_time(DAY), parse_time(NEXT))))
    P = res.model.transition
    for st in body["states"]:
        assert st["expected_duration_steps"] == 1.0 / (1.0 - P[st["id"], st["id"]])


def test_summary_constant(client):
    body = client.get("/api/v1/trends/1001/2/summary", params=Q).json()
    validator("summary").validate(body)
    assert body["num_states"] == 1
    assert [s["occupancy_fraction"] for s in body["states"]] == [1.0]


def test_trends_errors(client):
    assert client.get("/api/v1/trends/1001/3", params=Q).status_code == 422
    assert client.get("/api/v1/trends/1001/1", params={"start": "2030-01-01", "stop": "2030-01-02"}).status_code == 422
    assert client.get("/api/v1/trends/4242/1/summary", params=Q).status_code == 404
    assert client.get("/api/v1/trends/1001/1", params={"start": NEXT, "stop": DAY}).status_code == 400


def test_timeout_returns_503(tmp_path):
    root = build(tmp_path)
    app = create_app(Settings(fixture_root=str(root), sweeps=2000, burn_in=10, timeout_s=0.001))
    with TestClient(app) as c:
        r = c.get("/api/v1/trends/1001/1", params=Q)
        assert r.status_code == 503 and "retry-after" in r.headers


def test_cache_coalesces_concurrent_requests():
    cache = FitCache(4)
    calls = []
    gate = threading.Event()

    def work():
        calls.append(1)
        gate.wait(5)
        return 42

    out = []
    threads = [threading.Thread(target=lambda: out.append(cache.get("k", work, 10))) for _ in range(8)]
    for t in threads:
        t.start()
    gate.set()
    for t in threads:
        t.join()
    assert out == [42] * 8 and len(calls) == 1
    cache.shutdown()


def test_cache_lru_eviction():
    cache = FitCache(2)
    for k in "abc":
        cache.get(k, lambda k=k: k, 5)
    assert len(cache) == 2
    cache.shutdown()


def test_settings_from_env():
    s = Settings.from_env({"RTTSEG_PORT": "9000", "RTTSEG_SWEEPS": "50"}, fixture_root="x")
    assert (s.port, s.sweeps, s.fixture_root, s.interval) == (9000, 50, "x", 240)
