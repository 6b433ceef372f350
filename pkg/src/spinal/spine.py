"""Finite-K spinal processes.

The time-inhomogeneous spine is the Markov chain on the state space with
time-s transition rates ``G_ij m_j(t-s) / m_i(t-s)`` (spine reproduction
and non-spine events alike); it is sampled exactly by thinning against
per-cell bounds built from the tabulated ``m``.  The homogeneous spine
(psi = 1) runs in the compiled kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .functionals import Constant, Functional, LineageSummary, probe_grid, summarize_segments
from .model import ModelError, ModelSpec, eval_rate
from .msolver import M_FLOOR, MTable, SolverError
from .stats import Estimate, mean_se, run_blocks


class ThinningError(RuntimeError):
    """A proposal's exact rate exceeded its dominating bound."""


# --------------------------------------------------------------------------
# rates


@dataclass(frozen=True)
class Channel:
    who: str  # "spine" or "other"
    y: int  # new spine type (spine channels) or reproducing type (others)
    k: tuple[int, ...]
    rate: float
    target: tuple[int, tuple[int, ...]]


@dataclass(frozen=True)
class RateTableK:
    s: float
    state: tuple[int, tuple[int, ...]]
    channels: tuple[Channel, ...]

    def spine(self, y: int, k) -> float:
        k = tuple(k)
        return sum(c.rate for c in self.channels if c.who == "spine" and c.y == y and c.k == k)

    def other(self, y: int, k) -> float:
        k = tuple(k)
        return sum(c.rate for c in self.channels if c.who == "other" and c.y == y and c.k == k)

    def total(self) -> float:
        return math.fsum(c.rate for c in self.channels)

    def by_target(self) -> dict:
        out: dict = {}
        for c in self.channels:
            if c.target != self.state:
                out[c.target] = out.get(c.target, 0.0) + c.rate
        return out


def _m(mtab: MTable, x: int, z, tau: float) -> float:
    i = mtab.idx.get(x, tuple(z))
    if i < 0:
        raise ModelError(f"state ({x}, {tuple(z)}) is not in the table's state space")
    return float(mtab.at(tau, i))


def inhom_spine_rates(model: ModelSpec, mtab: MTable, s: float, state, t: float) -> RateTableK:
    """All channel rates of the inhomogeneous spine at time ``s`` in ``state``.

    Non-spine channels already carry their multiplicity ``z_y - 1{x=y}``.
    """
    if not 0 <= s <= t <= mtab.T * (1 + 1e-12):
        raise SolverError(f"need 0 <= s <= t <= {mtab.T}")
    x, z = state
    x = model.type_index(x)
    z = tuple(int(v) for v in z)
    if z[x] < 1:
        raise ModelError("the spine type must be present in the composition")
    tau = t - s
    mx = _m(mtab, x, z, tau)
    chans = []
    D = model.D
    for ev in model.events:
        r = model.rate_counts(ev, z)
        if r <= 0:
            continue
        y0 = ev.parent
        nz = tuple(z[w] + ev.offspring[w] - (w == y0) for w in range(D))
        if y0 == x:
            for y in range(D):
                if ev.offspring[y]:
                    rho = r * ev.offspring[y] * _m(mtab, y, nz, tau) / mx
                    chans.append(Channel("spine", y, ev.offspring, rho, (y, nz)))
        mult = z[y0] - (1 if y0 == x else 0)
        if mult > 0:
            rho_hat = r * _m(mtab, x, nz, tau) / mx
            chans.append(Channel("other", y0, ev.offspring, mult * rho_hat, (x, nz)))
    return RateTableK(s, (x, z), tuple(chans))


def apply_generator_A(mtab: MTable, s: float, t: float, f: np.ndarray) -> np.ndarray:
    """``A_s f = (G(m f) - (G m) f) / m`` with ``m = m(., t - s)``."""
    m = mtab.at(t - s)
    G = mtab.gen.matrix
    return (G @ (m * f) - (G @ m) * f) / m


# --------------------------------------------------------------------------
# batch thinning sampler


class InhomPlan:
    """Precomputed neighbours and per-cell thinning bounds for horizon ``t``."""

    def __init__(self, mtab: MTable, t: float):
        if t > mtab.T * (1 + 1e-12) or t < 0:
            raise SolverError(f"spine horizon {t} outside the table range [0, {mtab.T}]")
        self.mtab = mtab
        self.t = float(t)
        G = mtab.gen.matrix.tocsr()
        n = G.shape[0]
        off = G.copy()
        off.setdiag(0)
        off.eliminate_zeros()
        counts = np.diff(off.indptr)
        R = max(int(counts.max(initial=0)), 1)
        self.nbr = np.zeros((n, R), dtype=np.int64)
        self.gv = np.zeros((n, R))
        for i in range(n):
            a, b = off.indptr[i], off.indptr[i + 1]
            self.nbr[i, : b - a] = off.indices[a:b]
            self.nbr[i, b - a:] = i
            self.gv[i, : b - a] = off.data[a:b]
        if np.any(self.gv < 0):
            raise ModelError("negative off-diagonal generator entry")
        interp = mtab.interp
        self.interp = interp
        grid = interp.grid
        # cells of tau covering [0, t]
        self.ncell = max(int(np.searchsorted(grid, self.t, side="left")), 1) if len(grid) > 1 else 0
        if self.ncell:
            lo, hi = interp.cell_bounds()
            lo, hi = lo[: self.ncell], hi[: self.ncell]
            # bound[i, c] = sum_j G_ij max m_j / min m_i over cell c
            self.bound = np.einsum("ir,cir->ic", self.gv, np.exp(hi[:, self.nbr] - lo[:, :, None]))
            self.bound *= 1.0 + 1e-9
        else:
            self.bound = np.zeros((n, 0))

    def rates(self, states: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Exact off-diagonal rates ``G_ij m_j / m_i`` at times ``s`` (rows: paths)."""
        tau = np.maximum(self.t - s, 0.0)
        li = self.interp.log_at(tau, states)
        lj = self.interp.log_at(tau[:, None], self.nbr[states])
        if np.any(li < math.log(M_FLOOR)):
            raise SolverError("m fell below 1e-30 along a spine path")
        return self.gv[states] * np.exp(lj - li[:, None])


def run_inhom(plan: InhomPlan, start: np.ndarray, rng: np.random.Generator, s0: float = 0.0,
              s1: float | None = None, record: bool = False):
    """Advance independent spine paths from ``s0`` to ``s1``.

    Returns final state indices, and with ``record`` the segment list
    ``(path, start, state)`` sorted by path then time.
    """
    t = plan.t
    s1 = t if s1 is None else float(s1)
    if not 0 <= s0 <= s1 <= t:
        raise ValueError("need 0 <= s0 <= s1 <= t")
    state = np.array(start, dtype=np.int64)
    n = len(state)
    seg_p = [np.arange(n)]
    seg_s = [np.full(n, s0)]
    seg_x = [state.copy()]
    if s1 == s0 or plan.ncell == 0:
        return (state, (seg_p[0], seg_s[0], seg_x[0])) if record else state
    grid = plan.interp.grid
    c0 = min(max(int(np.searchsorted(grid, t - s0, side="left")) - 1, 0), plan.ncell - 1)
    cell = np.full(n, c0, dtype=np.int64)
    s = np.full(n, float(s0))
    active = np.arange(n)
    while active.size:
        st = state[active]
        c = cell[active]
        B = plan.bound[st, c]
        edge = np.minimum(t - grid[c], s1)
        with np.errstate(divide="ignore"):
            prop = s[active] + rng.standard_exponential(active.size) / B
        crossed = prop >= edge
        # paths reaching a cell edge restart there (memoryless)
        cr = active[crossed]
        s[cr] = edge[crossed]
        cell[cr] -= 1
        fin = cr[(s[cr] >= s1) | (cell[cr] < 0)]
        s[fin] = s1
        cand = active[~crossed]
        if cand.size:
            sp = prop[~crossed]
            s[cand] = sp
            st_c = state[cand]
            r = plan.rates(st_c, sp)
            tot = r.sum(axis=1)
            Bc = B[~crossed]
            if np.any(tot > Bc):
                bad = np.argmax(tot - Bc)
                raise ThinningError(f"thinning bound violated: rate {tot[bad]} > bound {Bc[bad]}")
            u = rng.random(cand.size) * Bc
            acc = u < tot
            if np.any(acc):
                ca = cand[acc]
                cum = np.cumsum(r[acc], axis=1)
                pick = (cum <= u[acc, None]).sum(axis=1)
                pick = np.minimum(pick, r.shape[1] - 1)
                new = plan.nbr[st_c[acc], pick]
                state[ca] = new
                if record:
                    seg_p.append(ca)
                    seg_s.append(sp[acc])
                    seg_x.append(new)
        done = np.zeros(n, dtype=bool)
        done[fin] = True
        active = active[~done[active]]
    if not record:
        return state
    p = np.concatenate(seg_p)
    ss = np.concatenate(seg_s)
    xx = np.concatenate(seg_x)
    order = np.lexsort((ss, p))
    return state, (p[order], ss[order], xx[order])


@dataclass(frozen=True)
class SpinePathK:
    """Jump list of (spine type, composition) on ``[0, t]``."""

    times: np.ndarray
    types: np.ndarray
    comps: np.ndarray  # counts
    K: int
    t: float

    def summary(self, probes) -> LineageSummary:
        n = len(self.times)
        return summarize_segments(self.times, self.types, self.comps / self.K,
                                  np.zeros(n, dtype=np.int64), 1, self.t, probes)

    def export(self, path, star: np.ndarray | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            D = self.comps.shape[1]
            fh.write("time,spine_type," + ",".join(f"z{i}" for i in range(D)) + "\n")
            for k in range(len(self.times)):
                fh.write(f"{self.times[k]!r},{self.types[k]}," + ",".join(str(v) for v in self.comps[k]) + "\n")


def _start_index(mtab: MTable, model: ModelSpec, x0, z0) -> int:
    x0 = model.type_index(x0)
    z0 = tuple(int(v) for v in z0)
    if len(z0) != model.D or z0[x0] < 1:
        raise ModelError(f"({x0}, {z0}) is not a valid spine state")
    i = mtab.idx.get(x0, z0)
    if i < 0:
        raise ModelError(f"({x0}, {z0}) is not in the table's state space")
    return i


def simulate_inhom_spine(model: ModelSpec, mtab: MTable, x0, z0, t: float, seed) -> SpinePathK:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    i0 = _start_index(mtab, model, x0, z0)
    plan = InhomPlan(mtab, t)
    _, (p, s, x) = run_inhom(plan, np.array([i0]), rng, record=True)
    idx = mtab.idx
    return SpinePathK(s, idx.types[x], idx.comps[x], model.K, float(t))


def inhom_summaries(plan: InhomPlan, i0: int, probes, n: int, rng) -> LineageSummary:
    _, (p, s, x) = run_inhom(plan, np.full(n, i0), rng, record=True)
    idx = plan.mtab.idx
    return summarize_segments(s, idx.types[x], idx.comps[x] / plan.mtab.K, p, n, plan.t, probes)


def many_to_one_rhs(model: ModelSpec, mtab: MTable, z0, functionals: Sequence[Functional] | Functional,
                    t: float, N: int, seed: int, exp: str = "m2o-rhs"):
    """``sum_x z0_x m(x, z0, t) E_{x,z0}[F(Y, zeta)]`` with N spine paths per starting type.

    Returns one :class:`Estimate` per functional (a single one if a single
    functional was passed).
    """
    single = isinstance(functionals, Functional)
    fs = [functionals] if single else list(functionals) or [Constant()]
    z0 = tuple(int(v) for v in z0)
    probes = probe_grid(fs, t)
    plan = InhomPlan(mtab, t)
    means = np.zeros(len(fs))
    var = np.zeros(len(fs))
    for x in range(model.D):
        if z0[x] < 1:
            continue
        i0 = _start_index(mtab, model, x, z0)
        w = z0[x] * float(mtab.at(t, i0))

        def block(n, rng, i0=i0):
            summ = inhom_summaries(plan, i0, probes, n, rng)
            return np.stack([F.on_summary(summ, t) for F in fs])

        vals = np.concatenate(run_blocks(block, N, seed, f"{exp}:{x}"), axis=1)
        for q in range(len(fs)):
            e = mean_se(vals[q])
            means[q] += w * e.mean
            var[q] += (w * e.se) ** 2
    out = [Estimate(float(means[q]), float(math.sqrt(var[q])), N) for q in range(len(fs))]
    return out[0] if single else out


@dataclass
class GeneratorReport:
    s: float
    dt: float
    N: int
    state: tuple
    targets: list  # (state, expected probability, observed frequency, z-score)
    stay_expected: float
    stay_observed: float
    allowance: float
    max_z: float
    conservativity: float

    @property
    def passed(self) -> bool:
        return self.max_z <= 3.0 + self.allowance and self.conservativity == 0.0


def generator_check(model: ModelSpec, mtab: MTable, s: float, state, t: float, dt: float, N: int,
                    seed: int) -> GeneratorReport:
    """Empirical one-step transition frequencies over ``[s, s+dt]`` against ``A_s 1_j * dt``."""
    if s + dt > t:
        raise ValueError("need s + dt <= t")
    x, z = state
    i0 = _start_index(mtab, model, x, z)
    plan = InhomPlan(mtab, t)
    n = mtab.gen.n

    def block(nb, rng):
        fin = run_inhom(plan, np.full(nb, i0), rng, s0=s, s1=s + dt)
        return np.bincount(fin, minlength=n)

    counts = np.sum(run_blocks(block, N, seed, "generator-check", block=200_000), axis=0)
    e_i = np.zeros(n)
    e_i[i0] = 1.0
    rates = np.zeros(n)
    for j in np.flatnonzero(mtab.gen.matrix[i0].toarray().ravel()):
        if j != i0:
            e_j = np.zeros(n)
            e_j[j] = 1.0
            rates[j] = apply_generator_A(mtab, s, t, e_j)[i0]
    # second-order allowance: rate variation over [s, s+dt] and two-jump paths
    sgrid = np.linspace(s, s + dt, 5)
    rr = plan.rates(np.full(5, i0), sgrid)
    lam_bar = float(plan.bound[i0].max()) if plan.ncell else 0.0
    drift = float(np.abs(np.diff(rr.sum(axis=1))).sum() / dt) if dt > 0 else 0.0
    extra = dt * dt * (lam_bar * lam_bar + drift)
    targets = []
    max_z = 0.0
    allowance = 0.0
    for j in np.flatnonzero(rates):
        p = rates[j] * dt
        obs = counts[j] / N
        sd = math.sqrt(max(p * (1 - p), 1e-300) / N)
        zsc = abs(obs - p) / sd
        allowance = max(allowance, extra / sd)
        targets.append((mtab.idx.state(int(j)), p, obs, zsc))
        max_z = max(max_z, zsc)
    conserv = float(np.max(np.abs(apply_generator_A(mtab, s, t, np.ones(n)))))
    return GeneratorReport(s, dt, N, (x, tuple(z)), targets, 1.0 - rates.sum() * dt, counts[i0] / N,
                           allowance, max_z, conserv)


# --------------------------------------------------------------------------
# homogeneous spine (psi = 1) over {0,1} x types


def spine_channels(model: ModelSpec):
    """``J* = {(x, k, y): k_y > 0}`` as parallel arrays (event index, new spine type)."""
    ev, ys = [], []
    for e, event in enumerate(model.events):
        for y in range(model.D):
            if event.offspring[y] > 0:
                ev.append(e)
                ys.append(y)
    return np.asarray(ev, dtype=np.int64), np.asarray(ys, dtype=np.int64)


@dataclass(frozen=True)
class HomSpinePathK:
    times: np.ndarray
    spine_type: np.ndarray
    others: np.ndarray  # non-spine counts
    K: int
    t: float
    log_weight: float  # integral of lambda along the path

    @property
    def comps(self) -> np.ndarray:
        c = self.others.copy()
        c[np.arange(len(c)), self.spine_type] += 1
        return c


def _star_run(model, c0, y0, t, probes, n, rng, record=False, flow=None, coupled=False, force_limit=False,
              theta=None):
    js_e, js_y = spine_channels(model)
    if theta is None:
        theta = np.zeros(len(js_e))
    if flow is None:
        fl_h, fl_z, fl_dz = 0.0, np.zeros((2, model.D)), np.zeros((2, model.D))
    else:
        fl_h, fl_z, fl_dz = flow
    return kernels.star_batch(model.compiled, np.asarray(c0, np.int64), int(y0), float(t),
                              np.asarray(probes, float), int(n), rng, js_e, js_y, np.asarray(theta, float),
                              float(fl_h), fl_z, fl_dz, bool(coupled), bool(force_limit), bool(record))


def simulate_hom_spine_k(model: ModelSpec, x0, z0, t: float, seed) -> HomSpinePathK:
    """Homogeneous spine with one spine individual of type ``x0`` inside counts ``z0``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x0 = model.type_index(x0)
    z0 = np.asarray(z0, dtype=np.int64)
    if z0.shape != (model.D,) or z0[x0] < 1 or np.any(z0 < 0) or z0.sum() > model.K:
        raise ModelError("invalid initial state: need exactly one spine among z0 with z0[x0] >= 1")
    c0 = z0.copy()
    c0[x0] -= 1
    out = _star_run(model, c0, x0, t, [t], 1, rng, record=True)
    return HomSpinePathK(out["r_t"], out["r_y"], out["r_c"], model.K, float(t), float(out["lam"][0]))


def hom_spine_k_rate(model: ModelSpec, x, k, y, z) -> float:
    """Spine channel rate ``k_y tau_k(x, z)`` (counts, guarded)."""
    return k[y] * eval_rate(model, x, k, z, "counts")
