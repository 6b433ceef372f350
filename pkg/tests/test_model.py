import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinal.model import (ModelError, ModelSpec, OffspringEvent, PsiWeight, RatePolynomial, TypeSpace, build_preset,
                          enumerate_states, eval_rate, load_model, parse_model, preset_cycle3, preset_logistic,
                          preset_switch, preset_toy, render_model, validate)

exps = st.tuples(st.integers(0, 3), st.integers(0, 3))
terms = st.lists(st.tuples(exps, st.floats(-5, 5, allow_nan=False)), max_size=5)
points = st.tuples(st.floats(0, 1), st.floats(0, 1))


@given(terms, points)
def test_polynomial_matches_direct_sum(ts, z):
    p = RatePolynomial.from_terms(ts, 2)
    direct = sum(c * z[0] ** e[0] * z[1] ** e[1] for e, c in ts)
    assert p(z) == pytest.approx(direct, abs=1e-9)


@given(terms, st.lists(points, min_size=1, max_size=6))
def test_polynomial_vectorized_agrees(ts, zs):
    p = RatePolynomial.from_terms(ts, 2)
    z = np.array(zs)
    np.testing.assert_allclose(p.evaluate_many(z), [p(v) for v in zs], atol=1e-9)


@given(terms)
def test_box_upper_dominates(ts):
    p = RatePolynomial.from_terms(ts, 2)
    up = p.box_upper(np.zeros(2), np.ones(2))
    for z in itertools.product(np.linspace(0, 1, 5), repeat=2):
        assert p(z) <= up + 1e-9


def test_canonical_terms_merge_duplicates():
    p = RatePolynomial.from_terms([((1, 0), 2.0), ((1, 0), -2.0), ((0, 0), 1.0)], 2)
    assert p.terms == (((0, 0), 1.0),)


def test_toy_rates_at_counts(toy):
    # the four rates of the two-particle example
    assert eval_rate(toy, "A", (2, 0), (1, 0)) == 1.0
    assert eval_rate(toy, "A", (0, 0), (2, 0)) == 1.0
    assert eval_rate(toy, "A", (0, 1), (2, 0)) == 2.0
    assert eval_rate(toy, "B", (1, 0), (1, 1)) == 2.0
    assert eval_rate(toy, "A", (0, 0), (1, 0)) == 0.0
    assert eval_rate(toy, "A", (0, 1), (1, 1)) == 0.0
    # capacity guard: no birth from a full population
    assert eval_rate(toy, "A", (2, 0), (2, 0)) == 0.0


def test_eval_rate_density_scale_ignores_guard(toy):
    assert eval_rate(toy, "A", (2, 0), (1.0, 0.0), scale="density") == 1.0
    with pytest.raises(ValueError):
        eval_rate(toy, "A", (2, 0), (1, 0), scale="bogus")


def test_eval_rate_absent_event_and_dims(toy):
    assert eval_rate(toy, "B", (0, 0), (1, 1)) == 0.0
    with pytest.raises(ModelError):
        eval_rate(toy, "A", (2,), (1, 0))


def test_toy_state_order(toy):
    idx = enumerate_states(toy)
    assert idx.states == ((0, (1, 0)), (0, (2, 0)), (0, (1, 1)), (1, (1, 1)))


def test_enumeration_covers_lattice_without_init():
    m = preset_cycle3(2, 1, 1, 4)
    idx = enumerate_states(m)
    # one (x, z) pair per type present in each nonempty composition
    expected = sum(sum(1 for v in z if v > 0) for z in itertools.product(range(5), repeat=3) if 0 < sum(z) <= 4)
    assert len(idx) == expected
    for i, (x, z) in enumerate(idx.states):
        assert z[x] >= 1 and sum(z) <= 4
        assert idx.index(x, z) == i


def test_validate_rejects_negative_rate():
    ev = OffspringEvent(0, (0,), RatePolynomial.from_terms([((0,), 1.0), ((1,), -2.0)], 1))
    with pytest.raises(ModelError, match="negative"):
        validate(ModelSpec(TypeSpace(("X",)), (ev,), 10))


def test_validate_rejects_duplicate_event():
    ev = OffspringEvent(0, (2,), RatePolynomial.constant(1.0, 1))
    with pytest.raises(ModelError, match="duplicate"):
        validate(ModelSpec(TypeSpace(("X",)), (ev, ev), 10))


def test_validate_capacity_without_guard():
    ev = OffspringEvent(0, (2,), RatePolynomial.constant(1.0, 1))
    with pytest.raises(ModelError, match="capacity"):
        validate(ModelSpec(TypeSpace(("X",)), (ev,), 10, guard="none"))
    # logistic births vanish at capacity, so no guard is needed
    ok = RatePolynomial.from_terms([((0,), 1.0), ((1,), -1.0)], 1)
    validate(ModelSpec(TypeSpace(("X",)), (OffspringEvent(0, (2,), ok),), 10, guard="none"))


@pytest.mark.parametrize("model", [preset_toy(1, 2), preset_logistic(2, 1, 50), preset_switch(1, 2, 7, 0.5),
                                   preset_cycle3(2, 1, 1.5, 30)])
def test_model_file_roundtrip(model):
    text = render_model(model)
    assert text.startswith("# spinal-model v1")
    assert parse_model(text) == model


def test_model_file_psi_roundtrip():
    m = preset_toy(1, 2).with_psi(PsiWeight((RatePolynomial.from_terms([((0, 0), 1.0), ((1, 0), 1.0)], 2),
                                             RatePolynomial.constant(2.0, 2))))
    m2 = parse_model(render_model(m))
    assert m2.psi(0, (0.5, 0.5)) == pytest.approx(1.5)
    assert m2.psi(1, (0.5, 0.5)) == pytest.approx(2.0)


def test_model_file_errors():
    with pytest.raises(ModelError, match="spinal-model v1"):
        parse_model('[model]\ntypes = ["A"]\nK = 2\n')
    with pytest.raises(ModelError):
        parse_model('# spinal-model v1\n[model]\ntypes = ["A"]\nK = 2\n[[event]]\nparent = "Q"\noffspring = [1]\nterms = []\n')


def test_preset_file_and_spec(tmp_path):
    p = tmp_path / "m.cfg"
    p.write_text('# spinal-model v1\n[preset]\nname = "logistic"\nb = 2\nd = 1\nK = 40\n')
    assert load_model(str(p)) == preset_logistic(2, 1, 40)
    assert load_model("preset:logistic:b=2,d=1,K=40") == preset_logistic(2, 1, 40)
    with pytest.raises(ModelError):
        build_preset("nope", {})


def test_drift_and_intensity_logistic():
    m = preset_logistic(2, 1, 10)
    z = (0.3,)
    # A = b(1-z)(2-1) - d, lambda identical for one type
    assert m.drift_matrix(z)[0, 0] == pytest.approx(2 * 0.7 - 1)
    assert m.branching_intensity(z)[0] == pytest.approx(2 * 0.7 - 1)
