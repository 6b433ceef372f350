import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from spinal.functionals import Constant
from spinal.model import ModelError, PsiWeight, RatePolynomial, preset_cycle3, preset_toy
from spinal.msolver import build_generator, solve_model, toy_rho_closed_form
from spinal.spine import (InhomPlan, apply_generator_A, generator_check, inhom_spine_rates, many_to_one_rhs,
                          run_inhom, simulate_hom_spine_k, simulate_inhom_spine)

CYC = preset_cycle3(2, 1, 1.5, 6)
CYC_TAB = solve_model(CYC, 2.0)


@pytest.mark.parametrize("s", [0.0, 1.0, 2.0, 2.9])
def test_toy_spine_birth_rate(toy, toy_table, s):
    r = inhom_spine_rates(toy, toy_table, s, (0, (1, 0)), 3.0)
    assert r.spine(0, (2, 0)) == pytest.approx(toy_rho_closed_form(1, 2, 3.0, s), abs=1e-6)


def test_toy_rate_limits(toy):
    tab = solve_model(toy, 50.0)
    assert inhom_spine_rates(toy, tab, 50.0, (0, (1, 0)), 50.0).spine(0, (2, 0)) == pytest.approx(2.0, abs=1e-3)
    assert inhom_spine_rates(toy, tab, 0.0, (0, (1, 0)), 50.0).spine(0, (2, 0)) == pytest.approx(1.0, abs=1e-3)


def test_toy_other_rates_biased(toy, toy_table):
    # with two A's the non-spine death is favoured over the unbiased rate b
    r = inhom_spine_rates(toy, toy_table, 0.0, (0, (2, 0)), 3.0)
    assert r.other(0, (0, 0)) > 1.0
    assert set(r.by_target()) == {(0, (1, 0)), (1, (1, 1)), (0, (1, 1))}


@given(st.integers(0, len(CYC_TAB.idx) - 1), st.floats(0, 2))
def test_channel_rates_match_generator(i, s):
    x, z = CYC_TAB.idx.state(i)
    r = inhom_spine_rates(CYC, CYC_TAB, s, (x, z), 2.0)
    n = len(CYC_TAB.idx)
    for target, rate in r.by_target().items():
        e = np.zeros(n)
        e[CYC_TAB.idx.index(*target)] = 1.0
        assert rate == pytest.approx(apply_generator_A(CYC_TAB, s, 2.0, e)[i], rel=1e-8, abs=1e-12)


def test_A_annihilates_constants():
    for s in np.linspace(0, 2, 101):
        assert np.abs(apply_generator_A(CYC_TAB, s, 2.0, np.ones(len(CYC_TAB.idx)))).max() == 0.0


@settings(max_examples=20)
@given(st.floats(0, 2), st.lists(st.integers(0, len(CYC_TAB.idx) - 1), min_size=1, max_size=20))
def test_thinning_bounds_dominate(s, states):
    plan = InhomPlan(CYC_TAB, 2.0)
    states = np.array(states)
    tot = plan.rates(states, np.full(len(states), s)).sum(axis=1)
    tau = 2.0 - s
    grid = plan.interp.grid
    c = np.clip(np.searchsorted(grid, tau, side="left") - 1, 0, plan.ncell - 1)
    assert np.all(tot <= plan.bound[states, c] * (1 + 1e-9))


def test_time_t_marginal_is_h_transform(toy, toy_table):
    # P(Y(t) = j) = exp(G t)_{i0 j} / m(i0, t) with psi = 1
    t = 2.0
    G = build_generator(toy).dense()
    P = scipy.linalg.expm(G * t)[0]
    exact = P / P.sum()
    plan = InhomPlan(toy_table, t)
    fin = run_inhom(plan, np.zeros(40_000, dtype=np.int64), np.random.default_rng(2))
    freq = np.bincount(fin, minlength=4) / len(fin)
    se = np.sqrt(exact * (1 - exact) / len(fin))
    assert np.all(np.abs(freq - exact) <= 3.5 * se)


def test_psi_weighted_marginal():
    psi = PsiWeight((RatePolynomial.from_terms([((0, 0), 1.0), ((1, 0), 1.0)], 2), RatePolynomial.constant(0.5, 2)))
    m = preset_toy(1, 2).with_psi(psi)
    tab = solve_model(m, 1.5)
    G = build_generator(m).dense()
    w = scipy.linalg.expm(G * 1.5)[0] * tab.values[0]
    exact = w / w.sum()
    fin = run_inhom(InhomPlan(tab, 1.5), np.zeros(40_000, dtype=np.int64), np.random.default_rng(3))
    freq = np.bincount(fin, minlength=4) / len(fin)
    se = np.sqrt(exact * (1 - exact) / len(fin))
    assert np.all(np.abs(freq - exact) <= 3.5 * se)


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_spine_path_invariants(seed):
    p = simulate_inhom_spine(CYC, CYC_TAB, 1, (1, 2, 1), 2.0, seed)
    assert p.times[0] == 0 and np.all(np.diff(p.times) > 0) and p.times[-1] <= 2.0
    assert np.all(p.comps[np.arange(len(p.types)), p.types] >= 1)
    assert np.all(p.comps.sum(axis=1) <= CYC.K)
    assert p.types[0] == 1 and tuple(p.comps[0]) == (1, 2, 1)


def test_spine_path_export(tmp_path):
    p = simulate_inhom_spine(CYC, CYC_TAB, 0, (2, 0, 1), 2.0, 1)
    out = tmp_path / "spine.csv"
    p.export(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "time,spine_type,z0,z1,z2" and len(lines) == len(p.times) + 1


def test_bad_start_states():
    with pytest.raises(ModelError):
        simulate_inhom_spine(CYC, CYC_TAB, 0, (0, 2, 1), 1.0, 1)
    with pytest.raises(ModelError):
        inhom_spine_rates(CYC, CYC_TAB, 0.0, (0, (0, 1, 1)), 1.0)


def test_generator_check_passes(toy, toy_table):
    rep = generator_check(toy, toy_table, 0.5, (0, (2, 0)), 3.0, 1e-3, 200_000, 4)
    assert rep.conservativity == 0.0
    assert rep.passed
    assert len(rep.targets) == 3


def test_rhs_constant_is_exact(toy_table):
    toy = preset_toy(1, 2)
    est = many_to_one_rhs(toy, toy_table, (1, 0), Constant(), 3.0, 1000, 1)
    assert est.se == 0
    assert est.mean == pytest.approx(float(toy_table.at(3.0, 0)), rel=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_homogeneous_spine_keeps_one_spine(seed):
    p = simulate_hom_spine_k(CYC, 0, (2, 1, 1), 2.0, seed)
    assert np.all(p.others >= 0)
    assert np.all(p.comps.sum(axis=1) <= CYC.K)
    assert np.all(p.comps[np.arange(len(p.times)), p.spine_type] >= 1)
    assert np.isfinite(p.log_weight)


def test_homogeneous_spine_rejects_bad_state():
    with pytest.raises(ModelError):
        simulate_hom_spine_k(CYC, 0, (0, 1, 1), 1.0, 0)
