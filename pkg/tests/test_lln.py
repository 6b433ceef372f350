import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from spinal.functionals import Constant, FinalType, Occupation
from spinal.lln import (FlowError, RateEval, couple_spines, coupling_experiment, estimate_sup_deviation,
                        feynman_kac_mean, flow_lipschitz_check, gronwall_bound, link_identity, simulate_hom_spine_star,
                        simulate_limit_spine, simulate_weighted_hom_limit, solve_flow, solve_m_characteristics)
from spinal.model import ModelError, preset_cycle3, preset_logistic, preset_switch, preset_twotype, preset_yule

LOG = preset_logistic(2, 1, 100)
TWO = preset_twotype(3, 1.5, 1, 1, 100)


def test_logistic_equilibrium():
    f = solve_flow(LOG, (0.2,), 20.0)
    assert f.z(20.0)[0] == pytest.approx(0.5, abs=1e-7)
    # scalar logistic has a closed form: z' = z (1 - 2z) with b=2, d=1
    s = np.linspace(0, 3, 31)
    exact = 0.5 / (1 + (0.5 / 0.2 - 1) * np.exp(-s))
    np.testing.assert_allclose(f.z(s)[:, 0], exact, atol=1e-9)


def test_fixed_point_is_constant():
    f = solve_flow(LOG, (0.5,), 2.0)
    assert np.abs(f.table.vals - 0.5).max() <= 1e-12


def test_pure_type_change_conserves_mass():
    f = solve_flow(preset_switch(1, 2, 10), (0.3, 0.4), 3.0)
    np.testing.assert_allclose(f.table.vals.sum(axis=1), 0.7, atol=1e-12)


@settings(max_examples=15)
@given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0, 0.3))
def test_flow_stays_in_simplex(a, b, c):
    assume(a + b + c <= 1)
    f = solve_flow(preset_cycle3(2, 1, 1.5, 10), (a, b, c), 2.0)
    z = f.table.vals
    assert z.min() >= -1e-9 and z.sum(axis=1).max() <= 1 + 1e-9
    assert f.residual() <= 1e-12


def test_flow_leaving_simplex_raises():
    with pytest.raises(FlowError):
        solve_flow(preset_yule(1.0, 10), (0.5,), 2.0)
    with pytest.raises(ModelError):
        solve_flow(LOG, (1.5,), 1.0)


def test_vectorized_rates_match_model():
    ev = RateEval(TWO)
    rng = np.random.default_rng(0)
    for z in rng.random((10, 2)) / 2:
        np.testing.assert_allclose(ev.drift(z), TWO.drift_matrix(z), atol=1e-12)
        np.testing.assert_allclose(ev.intensity(z), TWO.branching_intensity(z), atol=1e-12)
        np.testing.assert_allclose(ev.velocity(z), z @ TWO.drift_matrix(z), atol=1e-12)


def test_characteristic_terminal_and_residual():
    f = solve_flow(TWO, (0.2, 0.1), 1.0)
    u = solve_m_characteristics(TWO, f, 1.0)
    np.testing.assert_array_equal(u(1.0), [1.0, 1.0])
    assert u.residual() <= 1e-9
    assert np.all(u.table.vals > 0)


def test_characteristic_single_type_closed_form():
    # one type: u(0) = exp(int lambda(z(s)) ds) = Lam(t)
    f = solve_flow(LOG, (0.2,), 1.5)
    u = solve_m_characteristics(LOG, f, 1.5)
    assert u.at0()[0] == pytest.approx(math.exp(f.Lam(1.5)[0]), rel=1e-8)


def test_characteristic_pure_type_change_is_one():
    m = preset_switch(1, 2, 10)
    f = solve_flow(m, (0.3, 0.4), 2.0)
    u = solve_m_characteristics(m, f, 2.0)
    assert np.abs(u.table.vals - 1).max() <= 1e-10


def test_limit_spine_trivial_horizon():
    f = solve_flow(TWO, (0.2, 0.1), 1.0)
    u = solve_m_characteristics(TWO, f, 0.0)
    p = simulate_limit_spine(TWO, f, u, "B", 0.0, 3)
    assert list(p.types) == [1]


def test_weighted_path_weight_is_one_without_branching():
    m = preset_switch(1, 2, 10)
    f = solve_flow(m, (0.3, 0.4), 2.0)
    for seed in range(5):
        assert simulate_weighted_hom_limit(m, f, 0, 2.0, seed).weight == 1.0


def test_yule_weight_mean():
    m = preset_yule(1.0, 100)
    f = solve_flow(m, (0.01,), 1.0)
    p = simulate_weighted_hom_limit(m, f, 0, 1.0, 0)
    assert p.weight == pytest.approx(math.e, rel=1e-9)


def test_feynman_kac_two_type():
    f = solve_flow(TWO, (0.2, 0.1), 1.0)
    u = solve_m_characteristics(TWO, f, 1.0)
    for x in (0, 1):
        est = feynman_kac_mean(TWO, f, x, 1.0, 20_000, 5 + x)
        # B never mutates, so its weight is deterministic up to solver error
        assert abs(est.mean - u.at0()[x]) <= 3 * est.se + 1e-9


def test_link_identity_two_type():
    f = solve_flow(TWO, (0.2, 0.1), 1.0)
    u = solve_m_characteristics(TWO, f, 1.0)
    for a, b in link_identity(TWO, f, u, 0, 1.0, [FinalType(1), Occupation(0)], 20_000, 9):
        assert abs(a.mean - b.mean) <= 3 * math.hypot(a.se, b.se)


def test_constant_flow_rates_depend_on_remaining_time():
    # at the fixed point the limit spine rates are functions of t - s only
    m = preset_twotype(2, 2, 1, 0.0, 100)
    z_star = (0.3, 0.2)  # b(1 - |z|) = d on the whole line |z| = 1/2
    f = solve_flow(m, z_star, 3.0)
    assert np.abs(f.table.vals - z_star).max() <= 1e-12
    u3 = solve_m_characteristics(m, f, 3.0)
    u2 = solve_m_characteristics(m, f, 2.0)
    np.testing.assert_allclose(u3(1.0), u2(0.0), rtol=1e-9)


def test_star_spine_mass_and_initial_state():
    p = simulate_hom_spine_star(TWO, 200, (0.2, 0.1), 0, 1.0, 4)
    np.testing.assert_allclose(p.spine_part().sum(axis=1), 1 / 200)
    np.testing.assert_array_equal(p.others[0], [39, 20])
    np.testing.assert_allclose(p.projection()[0], [0.2, 0.1])
    with pytest.raises(ModelError):
        simulate_hom_spine_star(TWO, 5, (0.1, 0.1), 0, 1.0, 0)


def test_star_spine_pure_type_change_conserves_size():
    m = preset_switch(1, 2, 100)
    p = simulate_hom_spine_star(m, 100, (0.3, 0.4), 1, 2.0, 1)
    np.testing.assert_allclose(p.projection().sum(axis=1), 0.7)


def test_coupling_forced_limit_always_equal():
    f = solve_flow(TWO, (0.2, 0.1), 1.0)
    for seed in range(50):
        r = couple_spines(TWO, 50, (0.2, 0.1), 0, 1.0, seed, f, force_limit=True)
        assert r.paths_equal and r.divergence_time is None


def test_coupling_at_time_zero_is_rounding():
    z0 = (0.2037, 0.1011)
    for K in (50, 333):
        r = couple_spines(TWO, K, z0, 0, 0.0, 1)
        assert r.sup_deviation <= 2 / K
        assert r.paths_equal


def test_coupling_large_K_mostly_equal():
    f = solve_flow(TWO, (0.2, 0.1), 0.2)
    b = coupling_experiment(TWO, 100_000, (0.2, 0.1), 0, 0.2, 300, 1, f)
    assert b.equal.mean() >= 0.98


def test_sup_deviation_grows_with_horizon():
    d1, s1 = estimate_sup_deviation(LOG, 400, (0.2,), 0, 1.0, 400, 1)
    d2, s2 = estimate_sup_deviation(LOG, 400, (0.2,), 0, 2.0, 400, 1)
    assert d2 >= d1 - 2 * math.hypot(s1, s2)


def test_lipschitz_ratios_bounded():
    assert flow_lipschitz_check(LOG, (0.2,), (0.2,), 1.0) == 0.0
    assert flow_lipschitz_check(LOG, (0.5,), (0.5,), 1.0) == 0.0
    bound = gronwall_bound(LOG, 1.0)
    for eps in (1e-2, 1e-3, 1e-4):
        r = flow_lipschitz_check(LOG, (0.2,), (0.2 + eps,), 1.0)
        assert 0 < r <= bound
