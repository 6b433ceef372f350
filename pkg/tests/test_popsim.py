import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinal.functionals import Constant, FinalType, Occupation
from spinal.model import ModelError, preset_cycle3, preset_logistic, preset_toy, preset_yule
from spinal.msolver import solve_model
from spinal.popsim import (designated_root, estimate_m_mc, extract_lineage, lineage_functional_sum, many_to_one_lhs,
                           simulate_batch, simulate_population)


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_forest_is_consistent_with_composition(seed):
    model = preset_cycle3(2, 1, 1.5, 25)
    T = 1.5
    forest, path = simulate_population(model, (3, 2, 1), T, seed)
    assert np.all(np.diff(path.times) > 0)
    assert np.all(path.comps >= 0) and np.all(path.comps.sum(axis=1) <= 25)
    for s in (0.0, 0.4, 1.1, T):
        alive = forest.alive_at(s)
        counts = np.bincount(forest.types[alive], minlength=3)
        np.testing.assert_array_equal(counts, path.at(s))
    # parents are created before their children and die when they reproduce
    for h in range(len(forest)):
        p = forest.parent[h]
        if p >= 0:
            assert p < h
            assert forest.birth[h] == forest.death[p]
            assert forest.label(h)[:-1] == forest.label(p)


def test_roots_and_labels():
    forest, _ = simulate_population(preset_toy(1, 2), (1, 0), 3.0, 7)
    assert forest.label(0) == (1,)
    labels = [forest.label(h) for h in range(len(forest))]
    assert len(set(labels)) == len(labels)
    h = len(forest) - 1
    assert forest.handle(forest.label(h)) == h
    with pytest.raises(KeyError):
        forest.handle((9, 9, 9))
    ind = forest.individual(0)
    assert ind.parent is None and ind.type == 0


def test_determinism():
    m = preset_logistic(2, 1, 40)
    a = simulate_population(m, (5,), 2.0, 99)
    b = simulate_population(m, (5,), 2.0, 99)
    np.testing.assert_array_equal(a[1].times, b[1].times)
    np.testing.assert_array_equal(a[0].parent, b[0].parent)


def test_lineage_extraction():
    model = preset_cycle3(2, 1, 1.5, 25)
    forest, path = simulate_population(model, (3, 2, 1), 2.0, 5)
    alive = forest.alive_at(2.0)
    for h in alive[:10]:
        lin = extract_lineage(forest, path, int(h), 2.0)
        assert lin.types[-1] == forest.types[h]
        root = forest.ancestry(int(h))[0]
        assert lin.types[0] == forest.types[root]
        np.testing.assert_array_equal(lin.comps[-1], path.at(2.0))
    dead = np.flatnonzero(~np.isnan(forest.death))
    if dead.size:
        with pytest.raises(ValueError):
            extract_lineage(forest, path, int(dead[0]), 2.0)
    total = lineage_functional_sum(forest, path, Constant(), lambda x, z: 1.0, 2.0)
    assert total == len(alive)


def test_designated_root():
    assert designated_root((2, 3, 1), 1) == 2
    with pytest.raises(ModelError):
        designated_root((0, 3), 0)


def test_batch_summary_shapes():
    b = simulate_batch(preset_toy(1, 2), (1, 0), 3.0, [1.0, 3.0], 200, np.random.default_rng(1))
    assert b.summary.ptype.shape == (len(b.rep), 2)
    np.testing.assert_allclose(b.summary.occ.sum(axis=1), 3.0)
    np.testing.assert_array_equal(np.bincount(b.rep, minlength=200), b.zfinal.sum(axis=1))


def test_m_estimate_matches_solver(toy_table):
    mean, se = estimate_m_mc(preset_toy(1, 2), 0, (1, 0), 3.0, 40_000, 3)
    exact = float(toy_table.at(3.0, 0))
    assert abs(mean - exact) <= 3 * se


def test_yule_mean_size():
    # far from capacity the mean population is n0 e^{beta t}
    est = many_to_one_lhs(preset_yule(1.0, 10_000), (1,), [Constant()], 1.0, 20_000, 4)[0]
    assert abs(est.mean - math.e) <= 3 * est.se


def test_many_to_one_lhs_constant_is_sum_of_m():
    m = preset_cycle3(2, 1, 1.5, 8)
    z0 = (2, 1, 0)
    tab = solve_model(m, 1.0)
    exact = sum(z0[x] * float(tab.at(1.0, tab.idx.index(x, z0))) for x in range(3) if z0[x])
    est = many_to_one_lhs(m, z0, [Constant(), FinalType(2), Occupation(0)], 1.0, 20_000, 8)
    assert abs(est[0].mean - exact) <= 3 * est[0].se
    assert 0 <= est[1].mean <= est[0].mean


def test_invalid_initial_state():
    with pytest.raises(ModelError):
        simulate_population(preset_toy(1, 2), (3, 0), 1.0, 0)
    with pytest.raises(ModelError):
        simulate_population(preset_toy(1, 2), (1,), 1.0, 0)
