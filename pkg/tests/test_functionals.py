import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinal.functionals import (CompositionProbe, Constant, FinalType, LineageSummary, Occupation, TypeAtTimes,
                                TypeChanges, parse_functional, probe_grid, summarize_segments)
from spinal.model import preset_cycle3
from spinal.popsim import LineagePath


def random_paths(rng, n, D, t):
    starts, types, comps, pid = [], [], [], []
    for p in range(n):
        k = rng.integers(1, 8)
        s = np.sort(np.concatenate([[0.0], rng.random(k - 1) * t]))
        starts.append(s)
        types.append(rng.integers(0, D, k))
        comps.append(rng.random((k, D)) / D)
        pid.append(np.full(k, p))
    return np.concatenate(starts), np.concatenate(types), np.concatenate(comps), np.concatenate(pid)


FUNCS = [Constant(), FinalType(1), TypeAtTimes([0.5, 1.5], [0, 2]), Occupation(2), TypeChanges(3),
         CompositionProbe(1, 0.7)]


@given(st.integers(0, 2**32 - 1))
def test_functionals_respect_bounds(seed):
    rng = np.random.default_rng(seed)
    t = 2.0
    s, x, c, p = random_paths(rng, 50, 3, t)
    probes = probe_grid(FUNCS, t)
    summ = summarize_segments(s, x, c, p, 50, t, probes)
    for F in FUNCS:
        v = F.on_summary(summ, t)
        assert v.shape == (50,)
        assert np.all(np.abs(v) <= F.bound(t) + 1e-12)


def test_summary_against_direct_evaluation():
    rng = np.random.default_rng(0)
    t = 2.0
    s, x, c, p = random_paths(rng, 30, 3, t)
    probes = probe_grid(FUNCS, t)
    summ = summarize_segments(s, x, c, p, 30, t, probes)
    for q in range(30):
        sel = p == q
        lp = LineagePath(s[sel], x[sel], c[sel] * 10, 10, t)
        ends = np.append(s[sel][1:], t)
        assert summ.occ[q, 2] == pytest.approx(np.sum((ends - s[sel])[x[sel] == 2]))
        k = np.searchsorted(s[sel], 1.5, side="right") - 1
        assert summ.ptype[q, summ.probe_index(1.5)] == x[sel][k]
        assert summ.nchg[q] == np.count_nonzero(np.diff(x[sel]))
        for F in FUNCS:
            assert F.evaluate(lp, t) == pytest.approx(F.on_summary(summ, t)[q])


def test_summary_total_occupation():
    rng = np.random.default_rng(1)
    s, x, c, p = random_paths(rng, 40, 3, 1.0)
    summ = summarize_segments(s, x, c, p, 40, 1.0, [1.0])
    np.testing.assert_allclose(summ.occ.sum(axis=1), 1.0)


def test_parse_functionals():
    idx = preset_cycle3(1, 1, 1, 5).type_index
    assert isinstance(parse_functional("const", idx), Constant)
    assert parse_functional("final:Y", idx).target == 1
    f = parse_functional("at:0.5=X,1.5=Z", idx)
    assert f.times == [0.5, 1.5] and f.targets == [0, 2]
    assert parse_functional("occ:Z", idx).target == 2
    assert parse_functional("changes:4", idx).cap == 4
    g = parse_functional("comp:Y@0.25", idx)
    assert (g.coord, g.time) == (1, 0.25) and g.lipschitz == 1.0
    with pytest.raises(ValueError):
        parse_functional("bogus", idx)


def test_probe_errors():
    with pytest.raises(ValueError):
        probe_grid([CompositionProbe(0, 5.0)], 1.0)
    summ = LineageSummary(np.array([1.0]), np.zeros((1, 1), int), np.zeros((1, 1, 1)), np.zeros((1, 1)), np.zeros(1, int))
    with pytest.raises(KeyError):
        summ.probe_index(0.5)
