import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinal.stats import Estimate, batch_means_se, block_rng, gap, loglog_slope, mean_se, n_workers, run_blocks


def test_mean_se_against_numpy():
    v = np.random.default_rng(0).normal(3, 2, 1000)
    e = mean_se(v)
    assert e.mean == pytest.approx(v.mean(), rel=1e-12)
    assert e.se == pytest.approx(v.std(ddof=1) / math.sqrt(1000), rel=1e-12)
    assert math.isnan(mean_se([]).mean)
    assert mean_se([2.0]).se == 0


def test_se_matches_batch_means():
    v = np.random.default_rng(1).exponential(1.0, 4_000_000)
    assert batch_means_se(v, 100) == pytest.approx(mean_se(v).se, rel=0.01)


def test_block_streams_are_independent_and_fixed():
    a = block_rng(1, 2, 3).random(5)
    np.testing.assert_array_equal(a, block_rng(1, 2, 3).random(5))
    assert not np.array_equal(a, block_rng(1, 2, 4).random(5))
    assert not np.array_equal(a, block_rng(2, 2, 3).random(5))


@given(st.integers(1, 9000), st.integers(1, 3000))
def test_run_blocks_covers_all_replicas(N, block):
    sizes = run_blocks(lambda n, rng: n, N, 0, "x", block=block)
    assert sum(sizes) == N and max(sizes) <= block


def test_results_independent_of_thread_count():
    def fn(n, rng):
        return rng.random(n)

    a = np.concatenate(run_blocks(fn, 10_000, 3, "t", block=700, workers=1))
    b = np.concatenate(run_blocks(fn, 10_000, 3, "t", block=700, workers=4))
    np.testing.assert_array_equal(a, b)


def test_thread_env(monkeypatch):
    monkeypatch.setenv("SPINAL_THREADS", "1")
    assert n_workers() == 1
    monkeypatch.setenv("SPINAL_THREADS", "junk")
    assert n_workers() >= 1


def test_gap_and_slope():
    assert gap(Estimate(1.0, 0.3, 10), Estimate(2.0, 0.4, 10)) == pytest.approx(2.0)
    assert gap(Estimate(1.0, 0.0, 1), Estimate(1.0, 0.0, 1)) == 0.0
    assert gap(Estimate(1.0, 0.0, 1), Estimate(2.0, 0.0, 1)) == math.inf
    K = np.array([100, 400, 1600])
    assert loglog_slope(K, 3 * K ** -0.5) == pytest.approx(-0.5)
    m, s = Estimate(1.0, 2.0, 3)
    assert (m, s) == (1.0, 2.0)
