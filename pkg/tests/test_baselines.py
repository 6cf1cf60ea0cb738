import math

import numpy as np
import pytest

from rttseg.baselines import (
    FitReport, bic, gmm_em_fit, gmm_n_params, hmm_baum_welch_fit, hmm_n_params, select_k_by_bic,
)
from rttseg.errors import DegenerateComponent
from rttseg.hmm import HmmModel, forward_log_likelihood, simulate
from rttseg.ingest import RegularSeries


def test_bic_arithmetic():
    assert bic(-100.0, 5, 100) == pytest.approx(223.02585093, abs=1e-8)


def test_param_counts():
    assert [gmm_n_params(k) for k in (1, 2, 3)] == [2, 5, 8]
    assert [hmm_n_params(k) for k in (1, 2, 3)] == [2, 7, 14]


def test_gmm_k1_is_mle():
    x = np.random.default_rng(0).normal(3, 2, 101)
    r = gmm_em_fit(x, 1)
    assert abs(r.model.means[0] - x.mean()) < 1e-10
    assert abs(r.model.variances[0] - x.var()) < 1e-10
    assert r.bic == pytest.approx(-2 * r.log_likelihood + 2 * math.log(101))


def test_gmm_two_components_and_monotone():
    rng = np.random.default_rng(1)
    x = np.where(rng.random(500) < 0.5, rng.normal(0, 1, 500), rng.normal(10, 1, 500))
    r = gmm_em_fit(x, 2, rng=rng)
    np.testing.assert_allclose(np.sort(r.model.means), [0, 10], atol=0.3)
    assert np.all(np.diff(r.trace) >= -1e-9)
    assert r.converged and r.n_params == 5


def test_gmm_degenerate_reports():
    with pytest.raises((DegenerateComponent, ValueError)):
        gmm_em_fit(np.array([1.0, 1.0, 1.0, 1.0]), 3, rng=0)


def test_hmm_k1_is_mle():
    x = np.random.default_rng(2).normal(5, 1, 80)
    r = hmm_baum_welch_fit(x, 1)
    em = r.model.emissions[0]
    assert abs(em.mean() - x.mean()) < 1e-10 and abs(em.variances[0] - x.var()) < 1e-10
    assert r.log_likelihood == pytest.approx(forward_log_likelihood(r.model, x))


def test_hmm_two_state_recovery():
    P = np.array([[0.95, 0.05], [0.1, 0.9]])
    truth = HmmModel.gaussian(P, [0.5, 0.5], [10, 20], [1, 1])
    mean_err, diag_err = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        s, _ = simulate(truth, 1000, rng)
        r = hmm_baum_welch_fit(s, 2, rng=rng)
        assert np.all(np.diff(r.trace) >= -1e-9)
        mu = np.array([e.mean() for e in r.model.emissions])
        o = np.argsort(mu)
        mean_err.append(np.abs(mu[o] - [10, 20]).max())
        diag_err.append(np.abs(np.diag(r.model.transition)[o] - np.diag(P)).max())
    assert np.median(mean_err) < 0.5 and np.median(diag_err) < 0.05


def test_hmm_missing_values():
    truth = HmmModel.gaussian([[0.95, 0.05], [0.05, 0.95]], [0.5, 0.5], [0, 10], [1, 1])
    s, _ = simulate(truth, 600, np.random.default_rng(3))
    v = s.values.copy()
    v[::7] = np.nan
    r = hmm_baum_welch_fit(RegularSeries(0, 240, v), 2, rng=3)
    assert np.isfinite(r.log_likelihood) and r.n_obs == np.count_nonzero(~np.isnan(v))
    assert len(r.states) == 600


def test_select_k_three_components():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = np.concatenate([rng.normal(m, 1, 200) for m in (0, 10, 20)])
        hits += select_k_by_bic(gmm_em_fit, x, range(1, 7), rng).k == 3
    assert hits >= 18


def test_select_singleton_and_empty():
    x = np.random.default_rng(4).normal(0, 1, 50)
    assert select_k_by_bic(gmm_em_fit, x, [1], 0).k == 1
    with pytest.raises(ValueError):
        select_k_by_bic(gmm_em_fit, x, [], 0)


def test_select_ties_go_to_smaller_k():
    def fake(data, k, rng=None):
        return FitReport(None, k, -10.0, 0, 7.0, 1, True, 10)

    assert select_k_by_bic(fake, None, [3, 1, 2], 0).k == 1


def test_select_all_fail_propagates():
    def broken(data, k, rng=None):
        raise DegenerateComponent("nope")

    with pytest.raises(DegenerateComponent):
        select_k_by_bic(broken, None, [1, 2], 0)
