"""Compiled and pure-Python kernels must agree bit for bit on the same seed."""

import numpy as np
import pytest

from spinal import kernels
from spinal.lln import dominating_rates, solve_flow
from spinal.model import preset_cycle3, preset_logistic, preset_toy, preset_twotype
from spinal.spine import spine_channels

pytestmark = pytest.mark.skipif(not kernels.HAS_COMPILED, reason="compiled core not built")

PY = kernels.backends()["python"]
C = kernels.backends().get("compiled")


def _same(a: dict, b: dict):
    assert a.keys() == b.keys()
    for k in a:
        np.testing.assert_array_equal(np.asarray(a[k]), np.asarray(b[k]), err_msg=k)


@pytest.mark.parametrize("model,init,T", [
    (preset_toy(1, 2), (1, 0), 3.0),
    (preset_logistic(2, 1, 200), (40,), 1.0),
    (preset_cycle3(2, 1, 1.5, 20), (3, 2, 1), 1.5),
])
@pytest.mark.parametrize("record", [False, True])
def test_pop_batch_parity(model, init, T, record):
    probes = np.array([T / 3, T / 2, T])
    n = 1 if record else 30
    a = PY.pop_batch(model.compiled, np.array(init), T, probes, n, np.random.default_rng(5), record)
    b = C.pop_batch(model.compiled, np.array(init), T, probes, n, np.random.default_rng(5), record)
    _same(a, b)


@pytest.mark.parametrize("coupled,force", [(False, False), (True, False), (True, True)])
@pytest.mark.parametrize("record", [False, True])
def test_star_batch_parity(coupled, force, record):
    m = preset_twotype(3, 1.5, 1, 1, 60)
    f = solve_flow(m, (0.2, 0.1), 1.0)
    je, jy = spine_channels(m)
    args = (m.compiled, np.array([11, 6]), 0, 1.0, np.array([0.5, 1.0]), 1 if record else 20)
    rest = (je, jy, dominating_rates(m), *f.kernel_arrays(), coupled, force, record)
    a = PY.star_batch(*args, np.random.default_rng(8), *rest)
    b = C.star_batch(*args, np.random.default_rng(8), *rest)
    _same(a, b)


def test_backend_selected():
    assert kernels.BACKEND == "compiled"
    assert kernels.pop_batch is C.pop_batch
