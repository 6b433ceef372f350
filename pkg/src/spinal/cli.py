"""Command-line entry point.

Exit codes: 0 pass, 1 tolerance failure, 2 usage or model error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .experiments import ExperimentReport, run_lln_convergence, run_many_to_one, run_scaling_suite
from .lln import FlowError
from .functionals import Constant, FinalType, TypeAtTimes, parse_functional
from .model import ModelError, ModelSpec, load_model
from .msolver import (SolverError, build_generator, dense_m, psi_vector, solve_model, toy_m_closed_form,
                      toy_rho_closed_form)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _write_table(path, meta: dict, columns, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in r) + "\n")


def _model(args) -> ModelSpec:
    if not args.model:
        raise UsageError("--model is required")
    m = load_model(args.model)
    if args.K is not None:
        m = m.with_capacity(args.K, m.init)
    return m


def _vector(text: str | None, model: ModelSpec, kind=float):
    if text is None:
        return None
    vals = [kind(v) for v in text.split(",")]
    if len(vals) != model.D:
        raise UsageError(f"expected {model.D} comma-separated values, got {len(vals)}")
    return vals


def _counts(args, model: ModelSpec):
    z0 = _vector(args.z0, model, int)
    if z0 is None:
        if model.init is None:
            raise UsageError("no initial composition: pass --z0 or declare init in the model file")
        z0 = list(model.init)
    return tuple(z0)


def _densities(args, model: ModelSpec):
    z0 = _vector(args.z0, model, float)
    if z0 is None:
        if model.init is None:
            raise UsageError("no initial density: pass --z0")
        z0 = [v / model.K for v in model.init]
    return np.asarray(z0)


def _x0(args, model: ModelSpec, z0) -> int:
    if args.x0 is not None:
        return model.type_index(args.x0)
    return int(np.flatnonzero(np.asarray(z0) > 0)[0])


def _horizon(args) -> float:
    if args.t is None:
        raise UsageError("--t is required")
    if args.t < 0:
        raise UsageError("--t must be nonnegative")
    return float(args.t)


def _emit(report: ExperimentReport, args) -> int:
    print(report.text())
    if args.out:
        report.write_csv(args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    from .popsim import simulate_population

    model = _model(args)
    t = _horizon(args)
    z0 = _counts(args, model)
    forest, path = simulate_population(model, z0, t, args.seed)
    if args.forest:
        forest.export(args.forest)
    meta = {"command": "simulate", "model": model.name, "K": model.K, "t": t, "seed": args.seed, "z0": list(z0),
            "individuals": len(forest), "jumps": len(path.times) - 1}
    rows = [[path.times[j], *path.comps[j]] for j in range(len(path.times))]
    cols = ["time"] + [f"n_{n}" for n in model.types.names]
    if args.out:
        _write_table(args.out, meta, cols, rows)
    print(f"simulated {len(path.times) - 1} events, {len(forest)} individuals; final composition {tuple(int(v) for v in path.at(t))}")
    return EXIT_OK


def cmd_msolve(args) -> int:
    model = _model(args)
    t = _horizon(args)
    tab = solve_model(model, t, tol=args.tol or 1e-10)
    idx = tab.idx
    meta = {"command": "msolve", "model": model.name, "K": model.K, "t": t, "tol": args.tol or 1e-10,
            "states": len(idx), "steps": len(tab.grid)}
    if args.out:
        rows = []
        for k, tk in enumerate(tab.grid):
            for i, (x, z) in enumerate(idx.states):
                rows.append([i, model.types.names[x], " ".join(map(str, z)), tk, tab.values[k, i]])
        _write_table(args.out, meta, ["state", "type", "counts", "time", "m"], rows)
    show = min(len(idx), 12)
    for i in range(show):
        x, z = idx.state(i)
        print(f"m({model.types.names[x]}, {z}, {t:g}) = {tab.values[-1, i]:.10g}")
    if len(idx) > show:
        print(f"... {len(idx) - show} more states")
    return EXIT_OK


def cmd_spine(args) -> int:
    from .spine import InhomPlan, simulate_inhom_spine

    model = _model(args)
    t = _horizon(args)
    z0 = _counts(args, model)
    x0 = _x0(args, model, z0)
    tab = solve_model(model, t, tol=args.tol or 1e-10)
    path = simulate_inhom_spine(model, tab, x0, z0, t, args.seed)
    if args.out:
        path.export(args.out)
    print(f"spine path with {len(path.times) - 1} jumps; final state "
          f"({model.types.names[path.types[-1]]}, {tuple(path.comps[-1])})")
    if args.svg:
        plan = InhomPlan(tab, t)
        s = np.linspace(0, t, 301)
        i0 = tab.idx.index(x0, z0)
        R = plan.rates(np.full(len(s), i0), s)
        series = []
        for r in range(R.shape[1]):
            j = plan.nbr[i0, r]
            if j == i0 and plan.gv[i0, r] == 0:
                continue
            x, z = tab.idx.state(int(j))
            series.append((f"-> ({model.types.names[x]}, {z})", s, R[:, r]))
        if series:
            from .plot import line_plot_svg

            line_plot_svg(args.svg, series, title=f"spine rates from ({model.types.names[x0]}, {z0}), t = {t:g}",
                          xlabel="s", ylabel="rate")
    return EXIT_OK


def cmd_limit(args) -> int:
    from .lln import feynman_kac_mean, solve_flow, solve_m_characteristics

    model = _model(args)
    t = _horizon(args)
    z0 = _densities(args, model)
    tol = args.tol or 1e-10
    flow = solve_flow(model, z0, t, tol)
    mchar = solve_m_characteristics(model, flow, t, tol)
    if args.out:
        flow.export(args.out, mchar)
    u0 = mchar.at0()
    for x, name in enumerate(model.types.names):
        print(f"limit m({name}, z0, {t:g}) = {u0[x]:.10g}")
    print(f"z({t:g}) = {np.array2string(flow.z(t), precision=8)}")
    code = EXIT_OK
    if args.N:
        x0 = _x0(args, model, z0)
        est = feynman_kac_mean(model, flow, x0, t, args.N, args.seed)
        diff = abs(est.mean - u0[x0])
        g = diff / est.se if est.se > 0 else (0.0 if diff <= 1e-8 * u0[x0] else float("inf"))
        print(f"E[W(t)] = {est.mean:.6g} +- {est.se:.2g}; standardized gap {g:.3g}")
        code = EXIT_OK if g <= 3 else EXIT_FAIL
    if args.svg:
        from .plot import line_plot_svg

        s = np.linspace(0, t, 301)
        z = flow.z(s)
        line_plot_svg(args.svg, [(f"z_{n}", s, z[:, i]) for i, n in enumerate(model.types.names)],
                      title="large-population flow", xlabel="s", ylabel="density")
    return code


def _functionals(args, model: ModelSpec, t: float):
    if args.F:
        return [parse_functional(f, model.type_index) for f in args.F]
    last = model.D - 1
    return [Constant(), FinalType(last), TypeAtTimes([t / 2, t], [0, last])]


def cmd_verify(args) -> int:
    model = _model(args)
    t = _horizon(args)
    if args.what == "many-to-one":
        z0 = _counts(args, model)
        rep = run_many_to_one(model, z0, t, _functionals(args, model, t), args.N or 100_000, args.seed)
    elif args.what == "lln":
        z0 = _densities(args, model)
        Ks = [int(k) for k in (args.Ks or "50,200,800,3200").split(",")]
        fs = [parse_functional(f, model.type_index) for f in args.F] if args.F else [Constant()]
        rep = run_lln_convergence(model, z0, t, fs, Ks, args.N or 4000, args.seed, N_limit=args.N_limit,
                                  x0=args.x0, N_coupling=args.N_coupling)
    else:
        z0 = _densities(args, model)
        Ks = [int(k) for k in (args.Ks or "100,400,1600,6400").split(",")]
        rep = run_scaling_suite(model, z0, _x0(args, model, z0), t, Ks, args.N or 200, args.seed)
    return _emit(rep, args)


def cmd_toy(args) -> int:
    from .model import preset_toy

    b, c = args.b, args.c
    t = _horizon(args)
    tol = args.tol or 1e-8
    model = preset_toy(b, c)
    tab = solve_model(model, t)
    G = build_generator(model)
    times = np.linspace(0, t, 31)
    exact = toy_m_closed_form(b, c, times)
    num = tab.at(times)
    err = float(np.abs(exact - num).max())
    dense_err = float(np.abs(dense_m(G, psi_vector(model, G.idx), t) - exact[-1]).max())
    rows = []
    for k, s in enumerate(times):
        rows.append([s, *exact[k], *num[k], toy_rho_closed_form(b, c, t, s)])
    cols = ["s"] + [f"m_exact_{i}" for i in range(4)] + [f"m_solver_{i}" for i in range(4)] + ["rho_exact"]
    meta = {"command": "toy-closed-form", "b": b, "c": c, "t": t, "max_abs_err": err, "dense_err": dense_err,
            "tol": tol}
    if args.out:
        _write_table(args.out, meta, cols, rows)
    print(f"max |solver - closed form| on [0, {t:g}] = {err:.3e}; dense exponential error {dense_err:.3e}")
    if args.svg:
        from .plot import line_plot_svg

        series = []
        for tt in (1.0, 2.0, 3.0, 5.0):
            s = np.linspace(0, tt, 200)
            series.append((f"t = {tt:g}", s, [toy_rho_closed_form(b, c, tt, v) for v in s]))
        line_plot_svg(args.svg, series, title="birth rate of a lone A spine", xlabel="s", ylabel="rate")
    return EXIT_OK if err <= tol else EXIT_FAIL


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model file or preset:name:k=v,...")
    common.add_argument("--K", type=int, help="override the carrying capacity")
    common.add_argument("--t", type=float, help="time horizon")
    common.add_argument("--N", type=int, default=0, help="Monte Carlo replicas")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file")
    common.add_argument("--tol", type=float, help="solver or pass tolerance")
    common.add_argument("--svg", help="write a line plot here")
    common.add_argument("--z0", help="initial composition, comma separated (counts or densities)")
    common.add_argument("--x0", help="starting spine type")

    p = argparse.ArgumentParser(prog="spinal", description="Spinal constructions for density-dependent branching populations.")
    sub = p.add_subparsers(dest="command", metavar="command")
    s = sub.add_parser("simulate", parents=[common], help="exact population run with genealogy")
    s.add_argument("--forest", help="write the genealogy here")
    s.set_defaults(fn=cmd_simulate)
    sub.add_parser("msolve", parents=[common], help="tabulate m(x, z, t)").set_defaults(fn=cmd_msolve)
    sub.add_parser("spine", parents=[common], help="sample the finite-K spine").set_defaults(fn=cmd_spine)
    sub.add_parser("limit", parents=[common], help="flow and limit m-function").set_defaults(fn=cmd_limit)
    v = sub.add_parser("verify", parents=[common], help="statistical identity and scaling checks")
    v.add_argument("what", choices=["many-to-one", "lln", "scaling"])
    v.add_argument("--F", action="append", help="functional: const, final:B, at:1.5=A,3=B, occ:A, changes:5, comp:A@1.5")
    v.add_argument("--Ks", help="comma-separated K ladder")
    v.add_argument("--N-limit", dest="N_limit", type=int)
    v.add_argument("--N-coupling", dest="N_coupling", type=int, default=0)
    v.set_defaults(fn=cmd_verify)
    toy = sub.add_parser("toy-closed-form", parents=[common], help="toy model solver vs closed form")
    toy.add_argument("--b", type=float, default=1.0)
    toy.add_argument("--c", type=float, default=2.0)
    toy.set_defaults(fn=cmd_toy, t=3.0)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"spinal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, SolverError, FlowError, KeyError, ValueError) as exc:
        print(f"spinal: model error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"spinal: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
