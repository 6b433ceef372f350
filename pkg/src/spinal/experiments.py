"""Experiment orchestration and machine-readable reports."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .functionals import Constant, Functional
from .lln import (coupling_experiment, finite_k_lhs, limit_rhs, solve_flow, solve_m_characteristics)
from .model import ModelSpec, render_model
from .msolver import solve_model
from .popsim import many_to_one_lhs
from .spine import many_to_one_rhs
from .stats import gap, loglog_slope, mean_se, run_blocks

SIGMA = 3.0
SLOPE_WINDOW = 0.15


def model_hash(model: ModelSpec) -> str:
    return hashlib.sha256(render_model(model).encode("utf-8")).hexdigest()[:16]


@dataclass
class ExperimentReport:
    experiment: str
    inputs: dict
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    checks: dict = field(default_factory=dict)  # name -> bool
    summary: dict = field(default_factory=dict)
    wall: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def metadata(self) -> dict:
        return {
            "experiment": self.experiment,
            "inputs": self.inputs,
            "checks": self.checks,
            "summary": self.summary,
            "passed": self.passed,
            "wall_seconds": round(self.wall, 3),
            "backend": kernels.BACKEND,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("# " + json.dumps(self.metadata(), sort_keys=True, default=_jsonable) + "\n")
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_cell(v) for v in r])

    def text(self) -> str:
        width = [max(len(c), 12) for c in self.columns]
        out = [f"{self.experiment}: {'PASS' if self.passed else 'FAIL'} ({self.wall:.1f} s)"]
        out.append("  ".join(c.rjust(w) for c, w in zip(self.columns, width)))
        for r in self.rows:
            out.append("  ".join(_cell(v).rjust(w) for v, w in zip(r, width)))
        for k, v in self.checks.items():
            out.append(f"  check {k}: {'ok' if v else 'FAILED'}")
        for k, v in self.summary.items():
            out.append(f"  {k} = {v}")
        return "\n".join(out)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def read_report(path) -> tuple[dict, list[dict]]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError("missing metadata header")
        meta = json.loads(first[2:])
        rows = list(csv.DictReader(fh))
    return meta, rows


# --------------------------------------------------------------------------


def run_many_to_one(model: ModelSpec, z0, t: float, functionals: Sequence[Functional], N: int, seed: int,
                    table=None) -> ExperimentReport:
    """Population side against spine side for each functional."""
    t0 = time.perf_counter()
    fs = list(functionals) or [Constant()]
    z0 = tuple(int(v) for v in z0)
    tab = table if table is not None else solve_model(model, t)
    lhs = many_to_one_lhs(model, z0, fs, t, N, seed)
    rhs = many_to_one_rhs(model, tab, z0, fs, t, N, seed)
    rep = ExperimentReport(
        "many-to-one",
        {"model": model_hash(model), "name": model.name, "K": model.K, "z0": list(z0), "t": t, "N": N, "seed": seed},
        ["functional", "lhs", "lhs_se", "rhs", "rhs_se", "gap"],
    )
    for F, a, b in zip(fs, lhs, rhs):
        g = gap(a, b)
        rep.rows.append([F.describe(), a.mean, a.se, b.mean, b.se, g])
        rep.checks[f"gap[{F.describe()}]<=3"] = g <= SIGMA
    if any(isinstance(F, Constant) for F in fs):
        i = [isinstance(F, Constant) for F in fs].index(True)
        exact = math.fsum(z0[x] * float(tab.at(t, tab.idx.index(x, z0))) for x in range(model.D) if z0[x] > 0)
        a = lhs[i]
        g = abs(a.mean - exact) / a.se if a.se > 0 else (0.0 if abs(a.mean - exact) < 1e-9 else math.inf)
        rep.summary["sum_z_m"] = exact
        rep.checks["const-vs-m<=3"] = g <= SIGMA
    rep.wall = time.perf_counter() - t0
    return rep


def run_lln_convergence(model: ModelSpec, z0, t: float, functionals: Sequence[Functional], Kladder: Sequence[int],
                        N: int, seed: int, N_limit: int | None = None, x0=None, N_coupling: int = 0) -> ExperimentReport:
    """Finite-K normalized population sums against the limit spine formula."""
    t0 = time.perf_counter()
    fs = list(functionals) or [Constant()]
    Ks = [int(k) for k in Kladder]
    if sorted(Ks) != Ks or len(set(Ks)) != len(Ks):
        raise ValueError("K ladder must be strictly increasing")
    z0 = np.asarray(z0, float)
    flow = solve_flow(model, z0, t)
    mchar = solve_m_characteristics(model, flow, t)
    rhs = limit_rhs(model, z0, fs, t, N_limit or N, seed, flow, mchar)
    rep = ExperimentReport(
        "lln",
        {"model": model_hash(model), "name": model.name, "z0": z0.tolist(), "t": t, "Kladder": Ks, "N": N,
         "N_limit": N_limit or N, "seed": seed},
        ["functional", "K", "lhs", "lhs_se", "rhs", "rhs_se", "error", "error_se"],
    )
    errs = {F.describe(): [] for F in fs}
    for K in Ks:
        lhs = finite_k_lhs(model, K, z0, fs, t, N, seed)
        for F, a, b in zip(fs, lhs, rhs):
            err = abs(a.mean - b.mean)
            se = math.hypot(a.se, b.se)
            errs[F.describe()].append((err, se))
            rep.rows.append([F.describe(), K, a.mean, a.se, b.mean, b.se, err, se])
    for name, seq in errs.items():
        e = np.array([p[0] for p in seq])
        s = np.array([p[1] for p in seq])
        dec = all(e[i + 1] <= e[i] + 2 * math.hypot(s[i], s[i + 1]) for i in range(len(e) - 1))
        c_hat = e[0] * Ks[0] ** 0.25
        env = all(e[i] <= c_hat * Ks[i] ** -0.25 for i in range(len(e)))
        rep.checks[f"decreasing[{name}]"] = bool(dec)
        rep.checks[f"envelope[{name}]"] = bool(env)
        if np.all(e > 0):
            rep.summary[f"slope[{name}]"] = loglog_slope(Ks, e)
    if N_coupling:
        x0 = int(np.argmax(z0)) if x0 is None else model.type_index(x0)
        freq = []
        for K in Ks:
            eq = coupling_experiment(model, K, z0, x0, t, N_coupling, seed, flow).equal_freq
            freq.append(eq)
            rep.summary[f"equal_freq[K={K}]"] = [eq.mean, eq.se]
        rep.checks["coupling-nondecreasing"] = all(
            freq[i + 1].mean >= freq[i].mean - 2 * math.hypot(freq[i].se, freq[i + 1].se) for i in range(len(freq) - 1))
    rep.wall = time.perf_counter() - t0
    return rep


def run_scaling_suite(model: ModelSpec, z0, x0, t: float, Kladder: Sequence[int], N: int, seed: int,
                      target: float = -0.5) -> ExperimentReport:
    """Sup deviation of the spine-augmented composition from the flow, and
    coupling equality frequencies, across K."""
    t0 = time.perf_counter()
    Ks = [int(k) for k in Kladder]
    z0 = np.asarray(z0, float)
    x0 = model.type_index(x0)
    flow = solve_flow(model, z0, t)
    rep = ExperimentReport(
        "scaling",
        {"model": model_hash(model), "name": model.name, "z0": z0.tolist(), "x0": x0, "t": t, "Kladder": Ks,
         "N": N, "seed": seed},
        ["K", "sup_dev", "sup_dev_se", "equal_freq", "equal_se"],
    )
    devs, freqs = [], []
    for K in Ks:
        b = coupling_experiment(model, K, z0, x0, t, N, seed, flow, exp="scaling")
        d, f = b.deviation, b.equal_freq
        devs.append(d)
        freqs.append(f)
        rep.rows.append([K, d.mean, d.se, f.mean, f.se])
    slope = loglog_slope(Ks, [d.mean for d in devs])
    rep.summary["slope"] = slope
    rep.checks["slope-window"] = bool(target - SLOPE_WINDOW <= slope <= target + SLOPE_WINDOW)
    rep.checks["equal-nondecreasing"] = all(
        freqs[i + 1].mean >= freqs[i].mean - 2 * math.hypot(freqs[i].se, freqs[i + 1].se) for i in range(len(Ks) - 1))
    rep.wall = time.perf_counter() - t0
    return rep


def run_reduction(model: ModelSpec, z0, t: float, N: int, seed: int, table=None) -> ExperimentReport:
    """Pure type-change model: the spine's type pattern at ``t/4, t/2, t``
    against the lineage of each designated root in the population."""
    from .popsim import designated_root, simulate_batch
    from .spine import InhomPlan, inhom_summaries

    t0 = time.perf_counter()
    if any(ev.size != 1 for ev in model.events):
        raise ValueError("reduction check needs every event to have exactly one offspring")
    z0 = tuple(int(v) for v in z0)
    tab = table if table is not None else solve_model(model, t)
    probes = np.array([t / 4, t / 2, t])
    D = model.D
    codes = D ** np.arange(3)[::-1]
    rep = ExperimentReport(
        "reduction",
        {"model": model_hash(model), "name": model.name, "K": model.K, "z0": list(z0), "t": t, "N": N, "seed": seed},
        ["start", "statistic", "population", "pop_se", "spine", "spine_se", "gap"],
    )
    m_err = float(np.abs(tab.values - 1.0).max())
    rep.summary["max|m-1|"] = m_err
    rep.checks["m==1"] = m_err <= 1e-10
    plan = InhomPlan(tab, t)
    worst = 0.0
    for x in range(D):
        if z0[x] < 1:
            continue
        root = designated_root(z0, x)

        def pop_block(n, rng, root=root):
            b = simulate_batch(model, z0, t, probes, n, rng)
            sel = b.root == root  # exactly one descendant per root
            s = b.summary.take(sel)
            return s.ptype @ codes, s.pcomp[:, :, 0]

        def spine_block(n, rng, x=x):
            s = inhom_summaries(plan, tab.idx.index(x, z0), probes, n, rng)
            return s.ptype @ codes, s.pcomp[:, :, 0]

        a = run_blocks(pop_block, N, seed, f"reduction-pop:{x}")
        b = run_blocks(spine_block, N, seed, f"reduction-spine:{x}")
        pa, ca = np.concatenate([p for p, _ in a]), np.concatenate([c for _, c in a])
        pb, cb = np.concatenate([p for p, _ in b]), np.concatenate([c for _, c in b])
        stats = [(f"pattern={'/'.join(model.types.names[(c // codes[i]) % D] for i in range(3))}", pa == c, pb == c)
                 for c in range(D ** 3)]
        stats += [(f"z_{model.types.names[0]}@{s:g}", ca[:, i], cb[:, i]) for i, s in enumerate(probes)]
        for name, va, vb in stats:
            ea, eb = mean_se(va.astype(float)), mean_se(vb.astype(float))
            g = gap(ea, eb)
            worst = max(worst, g)
            rep.rows.append([model.types.names[x], name, ea.mean, ea.se, eb.mean, eb.se, g])
    rep.summary["max_gap"] = worst
    rep.checks["gaps<=3"] = worst <= SIGMA
    rep.wall = time.perf_counter() - t0
    return rep


def run_oracle_probes(model: ModelSpec, probes, N: int, seed: int) -> ExperimentReport:
    """Monte Carlo ``m(x, z, t)`` against the tabulated solution at each probe."""
    from .msolver import m_at
    from .popsim import estimate_m_mc

    t0 = time.perf_counter()
    T = max(p[2] for p in probes)
    tab = solve_model(model, T)
    rep = ExperimentReport(
        "m-oracle",
        {"model": model_hash(model), "name": model.name, "K": model.K, "N": N, "seed": seed},
        ["x", "z", "t", "mc", "mc_se", "solver", "gap"],
    )
    worst = 0.0
    for k, (x, z, t) in enumerate(probes):
        mean, se = estimate_m_mc(model, x, z, t, N, seed + k)
        exact = m_at(tab, x, z, t)
        g = abs(mean - exact) / se if se > 0 else (0.0 if abs(mean - exact) < 1e-9 else math.inf)
        worst = max(worst, g)
        rep.rows.append([model.types.names[x], " ".join(map(str, z)), t, mean, se, exact, g])
    rep.summary["max_gap"] = worst
    rep.checks["gaps<=3"] = worst <= SIGMA
    rep.wall = time.perf_counter() - t0
    return rep
