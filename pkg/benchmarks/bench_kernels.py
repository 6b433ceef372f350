"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from spinal import kernels
from spinal.lln import dominating_rates, solve_flow
from spinal.model import preset_cycle3, preset_logistic, preset_twotype
from spinal.spine import spine_channels


def _cases():
    cyc = preset_cycle3(2, 1, 1.5, 50)
    yield "pop_batch cycle3 K=50", lambda mod, rng: mod.pop_batch(
        cyc.compiled, np.array([10, 5, 3]), 1.5, np.array([0.5, 1.5]), 200, rng, False)
    lg = preset_logistic(2, 1, 400)
    yield "pop_batch logistic K=400", lambda mod, rng: mod.pop_batch(
        lg.compiled, np.array([80]), 1.0, np.array([1.0]), 200, rng, False)
    tt = preset_twotype(3, 1.5, 1, 1, 200)
    f = solve_flow(tt, (0.2, 0.1), 1.0)
    je, jy = spine_channels(tt)
    rest = (je, jy, dominating_rates(tt), *f.kernel_arrays())
    yield "star_batch coupled K=200", lambda mod, rng: mod.star_batch(
        tt.compiled, np.array([39, 20]), 0, 1.0, np.array([0.5, 1.0]), 200, rng, *rest, True, False, False)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    mods = kernels.backends()
    if "compiled" not in mods:
        print("compiled core not built; only the Python kernels are available")
    print(f"{'case':28s} " + " ".join(f"{k:>12s}" for k in mods) + "   speedup")
    for name, call in _cases():
        best = {}
        for k, mod in mods.items():
            ts = []
            for r in range(args.repeat):
                t0 = time.perf_counter()
                call(mod, np.random.default_rng(r))
                ts.append(time.perf_counter() - t0)
            best[k] = min(ts)
        sp = f"{best['python'] / best['compiled']:8.1f}x" if "compiled" in best else "       -"
        print(f"{name:28s} " + " ".join(f"{best[k]:11.4f}s" for k in mods) + "  " + sp)


if __name__ == "__main__":
    main()
