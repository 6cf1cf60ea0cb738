import numpy as np
import pytest
from hypothesis import given, strategies as st

from rttseg.changepoint import (
    ChangePointSet, change_frequency, change_magnitude, extract_changepoints, read_truth, score,
    truth_magnitudes, write_truth,
)
from rttseg.errors import EmptyWindow, LengthMismatch
from rttseg.ingest import RegularSeries


def grid(n, start=0, interval=240):
    return RegularSeries(start, interval, np.zeros(n))


def test_extract_examples():
    assert extract_changepoints([0, 0, 1, 1, 0], grid(5)).change_times == (480, 960)
    assert extract_changepoints([2, 2, 2], grid(3)).change_times == ()
    assert len(extract_changepoints([0, 1, 0, 1], grid(4))) == 3
    with pytest.raises(LengthMismatch):
        extract_changepoints([0, 1], grid(3))


@given(st.lists(st.integers(0, 3), min_size=1, max_size=30))
def test_extract_relabel_invariant(z):
    z = np.array(z)
    perm = np.array([3, 1, 0, 2])
    assert extract_changepoints(z, grid(z.size)) == extract_changepoints(perm[z], grid(z.size))


def test_score_examples():
    m = score(ChangePointSet("a", (100,)), [(100, 5.0)], 0)
    assert (m.precision, m.recall, m.weighted_recall) == (1.0, 1.0, 1.0)
    m = score(ChangePointSet("a", (100, 500)), [(110, 2.0), (900, 8.0)], 60)
    assert (m.true_positive, m.false_positive, m.false_negative) == (1, 1, 1)
    assert (m.precision, m.recall) == (0.5, 0.5)
    assert m.weighted_recall == pytest.approx(0.2)
    m = score(ChangePointSet("a", ()), [(100, 1.0)], 10)
    assert m.precision == 1.0 and m.recall == 0.0


def test_score_one_to_one():
    m = score(ChangePointSet("a", (100, 105)), [(102, 1.0)], 10)
    assert (m.true_positive, m.false_positive, m.false_negative) == (1, 1, 0)


@given(st.lists(st.integers(0, 10_000), max_size=10, unique=True),
       st.lists(st.integers(0, 10_000), max_size=10, unique=True),
       st.integers(0, 500), st.integers(-5000, 5000))
def test_score_shift_invariant(pred, truth, tol, dt):
    a = score(ChangePointSet("a", sorted(pred)), [(t, 1.0) for t in truth], tol)
    b = score(ChangePointSet("a", sorted(p + dt for p in pred)), [(t + dt, 1.0) for t in truth], tol)
    assert a == b


def test_change_frequency_examples():
    f = change_frequency([ChangePointSet("a", (0, 700)), ChangePointSet("b", (100,))], 0, 1080)
    assert f.counts.tolist() == [2, 1, 0]
    assert change_frequency([], 0, 1080).counts.tolist() == [0, 0, 0]
    with pytest.raises(EmptyWindow):
        change_frequency([], 5, 5)


@given(st.lists(st.lists(st.integers(-500, 5000), max_size=10, unique=True), max_size=6),
       st.integers(1, 999))
def test_change_frequency_conservation(sets, w):
    sets = [ChangePointSet(str(i), sorted(s)) for i, s in enumerate(sets)]
    f = change_frequency(sets, 0, 4000, w)
    assert f.counts.size == -(-4000 // w)
    assert f.counts.sum() == sum(sum(0 <= t < 4000 for t in s.change_times) for s in sets)


def test_injected_simultaneous_shift_is_global_max():
    rng = np.random.default_rng(0)
    T, inject = 360, 200
    sets = []
    for i in range(50):
        z = np.zeros(T, dtype=int)
        z[inject:] = 1
        # background noise: a few random spurious changes per series
        for t in rng.choice(T, 2, replace=False):
            z[t:] = z[t:] + 2
        sets.append(extract_changepoints(z, grid(T)))
    f = change_frequency(sets, 0, T * 240)
    b = inject * 240 // 360
    assert f.counts[b] >= 40 and f.counts[b] == f.counts.max()


def test_magnitudes_and_truth_file(tmp_path):
    s = RegularSeries(0, 240, np.array([1.0, 1.0, 1.0, 5.0, 5.0, np.nan, 9.0]))
    assert change_magnitude(s, 3) == 4.0
    tm = truth_magnitudes(s, [720, 1440])
    assert [c.magnitude for c in tm] == [4.0, 4.0]
    write_truth(tmp_path / "t.csv", [(1440, 4.0), (720, 2.5)])
    got = read_truth(tmp_path / "t.csv")
    assert [(c.time, c.magnitude) for c in got] == [(720, 2.5), (1440, 4.0)]
