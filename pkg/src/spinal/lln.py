"""Large-population limit: the flow, the limit m-function along it, limit
spines, and the coupled finite-K experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .functionals import Functional, LineageSummary, probe_grid, summarize_segments
from .model import ModelError, ModelSpec
from .spine import ThinningError, _star_run, spine_channels
from .stats import Estimate, mean_se, run_blocks

FLOW_H = 2e-3  # spacing of the uniform tables handed to samplers and kernels


class FlowError(RuntimeError):
    pass


class RateEval:
    """Vectorized ``tau_k(x, z)`` in normalized coordinates for all events."""

    def __init__(self, model: ModelSpec):
        cm = model.compiled
        self.model = model
        self.D, self.E = cm.D, cm.E
        self.exp = cm.term_exp.astype(float)
        self.coef = cm.term_coef
        owner = np.repeat(np.arange(cm.E), np.diff(cm.term_ptr))
        self.own = np.zeros((len(self.coef), cm.E))
        self.own[np.arange(len(self.coef)), owner] = 1.0
        self.parent = np.zeros((cm.E, cm.D))
        self.parent[np.arange(cm.E), cm.ev_parent] = 1.0
        self.kdiff = cm.ev_k - self.parent
        self.size = cm.ev_size.astype(float)

    def rates(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        mono = np.prod(z[..., None, :] ** self.exp, axis=-1) * self.coef
        return mono @ self.own

    def drift(self, z) -> np.ndarray:
        """``A(z)`` with shape ``(..., D, D)``."""
        r = self.rates(z)
        return np.einsum("...e,ex,ey->...xy", r, self.parent, self.kdiff)

    def velocity(self, z) -> np.ndarray:
        """``z A(z)``."""
        r = self.rates(z)
        zp = np.asarray(z, float) @ self.parent.T  # z of each event's parent
        return (r * zp) @ self.kdiff

    def intensity(self, z) -> np.ndarray:
        """``lambda(x, z) = sum_k (|k| - 1) tau_k(x, z)``."""
        return (self.rates(z) * (self.size - 1.0)) @ self.parent

    def lipschitz(self) -> float:
        """Bound on the l1 Lipschitz constant of ``z -> z A(z)`` over the unit box."""
        cm = self.model.compiled
        L = 0.0
        for e in range(self.E):
            a, b = cm.term_ptr[e], cm.term_ptr[e + 1]
            deg = cm.term_exp[a:b].sum(axis=1) + 1
            L += np.abs(self.kdiff[e]).sum() * float(np.sum(np.abs(cm.term_coef[a:b]) * deg))
        return L


class HermiteGrid:
    """Cubic Hermite interpolation on the uniform grid ``s_j = j h``."""

    def __init__(self, h: float, vals: np.ndarray, ders: np.ndarray):
        self.h = float(h)
        self.vals = np.ascontiguousarray(vals, dtype=float)
        self.ders = np.ascontiguousarray(ders, dtype=float)
        self.M = self.vals.shape[0] - 1

    @property
    def T(self) -> float:
        return self.h * self.M

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        c = np.clip((s / self.h).astype(np.int64), 0, max(self.M - 1, 0))
        if self.M == 0:
            return np.broadcast_to(self.vals[0], s.shape + self.vals.shape[1:]).copy()
        th = ((s - c * self.h) / self.h)[..., None]
        th2 = th * th
        th3 = th2 * th
        return ((2 * th3 - 3 * th2 + 1) * self.vals[c] + (th3 - 2 * th2 + th) * self.h * self.ders[c]
                + (-2 * th3 + 3 * th2) * self.vals[c + 1] + (th3 - th2) * self.h * self.ders[c + 1])


def _uniform_nodes(T: float, h: float = FLOW_H) -> np.ndarray:
    M = max(int(math.ceil(T / h - 1e-9)), 1)
    return np.linspace(0.0, T, M + 1)


@dataclass(frozen=True)
class FlowBundle:
    """Solution of ``z' = z A(z)`` with the integrated intensities
    ``Lam_x(s) = int_0^s lambda(x, z(r)) dr``."""

    model: ModelSpec
    z0: np.ndarray
    T: float
    tol: float
    grid: np.ndarray  # accepted solver steps
    values: np.ndarray  # (n, D) z at the accepted steps
    table: HermiteGrid  # z on a uniform grid
    lam_table: HermiteGrid  # Lam on the same grid
    rates: RateEval

    def z(self, s) -> np.ndarray:
        return self.table(s)

    def Lam(self, s) -> np.ndarray:
        return self.lam_table(s)

    def A(self, s) -> np.ndarray:
        return self.rates.drift(self.z(s))

    def residual(self) -> float:
        """Max l1 mismatch of the tabulated derivative against ``z A(z)``."""
        tb = self.table
        return float(np.abs(tb.ders - self.rates.velocity(tb.vals)).sum(axis=1).max())

    def kernel_arrays(self):
        tb = self.table
        return tb.h, tb.vals, tb.ders

    def export(self, path, mchar: "MCharacteristic | None" = None) -> None:
        s = np.linspace(0.0, self.T, self.table.M + 1)
        z = self.table.vals
        cols = [f"z{i}" for i in range(z.shape[1])]
        u = None
        if mchar is not None:
            u = mchar(np.minimum(s, mchar.t))
            cols += [f"u{i}" for i in range(u.shape[1])]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("s," + ",".join(cols) + "\n")
            for j in range(len(s)):
                row = list(z[j]) + ([] if u is None else list(u[j]))
                fh.write(f"{s[j]!r}," + ",".join(repr(float(v)) for v in row) + "\n")


def solve_flow(model: ModelSpec, z0, T: float, tol: float = 1e-10, h: float = FLOW_H) -> FlowBundle:
    z0 = np.asarray(z0, dtype=float)
    D = model.D
    if z0.shape != (D,) or np.any(z0 < 0) or z0.sum() > 1 + 1e-12:
        raise ModelError(f"initial density {tuple(z0)} is not in the unit simplex")
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    ev = RateEval(model)

    def rhs(_s, y):
        z = y[:D]
        return np.concatenate([ev.velocity(z), ev.intensity(z)])

    y0 = np.concatenate([z0, np.zeros(D)])
    nodes = _uniform_nodes(T, h) if T > 0 else np.zeros(1)
    if T > 0:
        sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=tol, atol=tol * 1e-2, t_eval=nodes,
                        dense_output=False)
        if not sol.success:
            raise FlowError(sol.message)
        Y = sol.y.T
    else:
        Y = y0[None, :]
    z = Y[:, :D]
    slack = max(10 * tol, 1e-9)
    if np.any(z < -slack) or np.any(z.sum(axis=1) > 1 + slack):
        raise FlowError("the flow leaves the unit simplex; rates do not keep densities bounded")
    dz = ev.velocity(z)
    lam = ev.intensity(z)
    hh = nodes[1] - nodes[0] if len(nodes) > 1 else 1.0
    return FlowBundle(model, z0, float(T), tol, nodes, z.copy(), HermiteGrid(hh, z, dz),
                      HermiteGrid(hh, Y[:, D:], lam), ev)


@dataclass(frozen=True)
class MCharacteristic:
    """``u(x, s) = m(x, z(s), t - s)`` for the limit, on a uniform grid in s."""

    t: float
    table: HermiteGrid
    flow: FlowBundle

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if np.any(s < -1e-12) or np.any(s > self.t * (1 + 1e-12)):
            raise ValueError(f"s outside [0, {self.t}]")
        return self.table(np.clip(s, 0.0, self.t))

    def at0(self) -> np.ndarray:
        return self.table.vals[0].copy()

    def residual(self) -> float:
        """Max abs mismatch of the tabulated derivative against ``-A(z(s)) u``."""
        tb = self.table
        s = np.linspace(0.0, self.t, tb.M + 1)
        A = self.flow.A(s)
        return float(np.abs(tb.ders + np.einsum("nxy,ny->nx", A, tb.vals)).max())


def _require_psi_one(model: ModelSpec):
    if not model.psi.is_one:
        raise ModelError("large-population objects are defined for psi = 1")


def solve_m_characteristics(model: ModelSpec, flow: FlowBundle, t: float, tol: float = 1e-10,
                            h: float = FLOW_H) -> MCharacteristic:
    """Integrate ``du/ds = -A(z(s)) u`` backward from ``u(t) = 1``."""
    _require_psi_one(model)
    if t > flow.T * (1 + 1e-12) or t < 0:
        raise ValueError(f"t={t} outside the flow horizon [0, {flow.T}]")
    D = model.D
    nodes = _uniform_nodes(t, h) if t > 0 else np.zeros(1)
    if t > 0:
        rhs = lambda s, u: -flow.A(s) @ u  # noqa: E731
        sol = solve_ivp(rhs, (t, 0.0), np.ones(D), method="DOP853", rtol=tol, atol=tol * 1e-2,
                        t_eval=nodes[::-1])
        if not sol.success:
            raise FlowError(sol.message)
        u = sol.y.T[::-1].copy()
        u[-1] = 1.0
    else:
        u = np.ones((1, D))
    if np.any(u <= 0):
        raise FlowError("nonpositive limit m value")
    du = -np.einsum("nxy,ny->nx", flow.A(nodes), u)
    hh = nodes[1] - nodes[0] if len(nodes) > 1 else 1.0
    return MCharacteristic(float(t), HermiteGrid(hh, u, du), flow)


# --------------------------------------------------------------------------
# limit spines: type chains driven by the deterministic flow


def _offdiag(A: np.ndarray) -> np.ndarray:
    D = A.shape[-1]
    out = A.copy()
    out[..., np.arange(D), np.arange(D)] = 0.0
    return np.maximum(out, 0.0)


class _LimitChain:
    """Type-change rates ``q_xy(s)`` of a limit spine on ``[0, t]``."""

    def __init__(self, flow: FlowBundle, t: float, mchar: MCharacteristic | None):
        self.flow = flow
        self.t = float(t)
        self.mchar = mchar
        self.h = min(flow.table.h, self.t) if self.t > 0 else 1.0
        self.M = max(int(math.ceil(self.t / self.h - 1e-9)), 1) if self.t > 0 else 0
        if self.M:
            self.h = self.t / self.M
            pts = np.linspace(0, self.t, 4 * self.M + 1)
            tot = self.q(pts).sum(axis=2)  # (P, D)
            cells = np.maximum(np.maximum(tot[:-1:4], tot[4::4]),
                               np.maximum(np.maximum(tot[1::4], tot[2::4]), tot[3::4]))
            self.bound = 1.1 * cells + 1e-12 * (cells > 0)

    def q(self, s) -> np.ndarray:
        Q = _offdiag(self.flow.A(s))
        if self.mchar is not None:
            u = self.mchar(s)
            Q = Q * u[..., None, :] / u[..., :, None]
        return Q

    def run(self, x0: np.ndarray, rng, record: bool = False):
        n = len(x0)
        state = np.array(x0, dtype=np.int64)
        seg = [(np.arange(n), np.zeros(n), state.copy())]
        if self.M == 0:
            return state, seg
        cell = np.zeros(n, dtype=np.int64)
        s = np.zeros(n)
        active = np.arange(n)
        while active.size:
            st = state[active]
            c = cell[active]
            B = self.bound[c, st]
            edge = (c + 1) * self.h
            with np.errstate(divide="ignore"):
                prop = s[active] + rng.standard_exponential(active.size) / B
            crossed = prop >= edge
            cr = active[crossed]
            s[cr] = edge[crossed]
            cell[cr] += 1
            cand = active[~crossed]
            if cand.size:
                sp = prop[~crossed]
                s[cand] = sp
                Q = self.q(sp)[np.arange(cand.size), state[cand]]  # (n, D)
                tot = Q.sum(axis=1)
                Bc = B[~crossed]
                if np.any(tot > Bc):
                    raise ThinningError("limit spine rate exceeded its cell bound")
                u = rng.random(cand.size) * Bc
                acc = u < tot
                if np.any(acc):
                    ca = cand[acc]
                    pick = (np.cumsum(Q[acc], axis=1) <= u[acc, None]).sum(axis=1)
                    new = np.minimum(pick, Q.shape[1] - 1)
                    state[ca] = new
                    if record:
                        seg.append((ca, sp[acc], new))
            done = cell >= self.M
            active = active[~done[active]]
        return state, seg


def _segments_summary(seg, n, t, flow: FlowBundle, probes, lam=False):
    p = np.concatenate([a for a, _, _ in seg])
    s = np.concatenate([b for _, b, _ in seg])
    x = np.concatenate([c for _, _, c in seg])
    order = np.lexsort((s, p))
    p, s, x = p[order], s[order], x[order]
    comps = flow.z(s)
    summ = summarize_segments(s, x, comps, p, n, t, probes)
    # the limit composition at a probe is the flow itself
    summ.pcomp[:] = flow.z(np.asarray(probes))[None]
    if not lam:
        return summ, None
    ends = np.empty_like(s)
    ends[:-1] = s[1:]
    last = np.ones(len(s), dtype=bool)
    last[:-1] = p[1:] != p[:-1]
    ends[last] = t
    L = flow.Lam(np.stack([s, ends]))  # (2, S, D)
    inc = L[1, np.arange(len(s)), x] - L[0, np.arange(len(s)), x]
    return summ, np.bincount(p, weights=inc, minlength=n)


@dataclass(frozen=True)
class LimitPath:
    times: np.ndarray
    types: np.ndarray
    t: float
    log_weight: float = 0.0

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


def _single_path(chain: _LimitChain, x0: int, rng, flow, t, lam):
    _, seg = chain.run(np.array([x0]), rng, record=True)
    times = np.concatenate([b for _, b, _ in seg])
    types = np.concatenate([c for _, _, c in seg])
    lw = 0.0
    if lam:
        ends = np.append(times[1:], t)
        L0, L1 = flow.Lam(times), flow.Lam(ends)
        lw = float(np.sum(L1[np.arange(len(times)), types] - L0[np.arange(len(times)), types]))
    return LimitPath(times, types, float(t), lw)


def _check_x0(model: ModelSpec, x0) -> int:
    try:
        return model.type_index(x0)
    except (KeyError, IndexError, ValueError) as exc:
        raise ModelError(f"unknown type {x0!r}") from exc


def simulate_limit_spine(model: ModelSpec, flow: FlowBundle, mchar: MCharacteristic, x0, t: float, seed) -> LimitPath:
    """One path of the limit inhomogeneous spine (type changes at ``A_xy u_y / u_x``)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if abs(t - mchar.t) > 1e-12:
        raise ValueError("characteristic was solved for a different horizon")
    return _single_path(_LimitChain(flow, t, mchar), _check_x0(model, x0), rng, flow, t, False)


def simulate_weighted_hom_limit(model: ModelSpec, flow: FlowBundle, x0, t: float, seed) -> LimitPath:
    """One path of the homogeneous limit spine with its log-weight ``int lambda``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if t > flow.T * (1 + 1e-12):
        raise ValueError("t beyond the flow horizon")
    return _single_path(_LimitChain(flow, t, None), _check_x0(model, x0), rng, flow, t, True)


def limit_spine_batch(flow: FlowBundle, mchar: MCharacteristic | None, x0: int, t: float, probes, n: int, rng):
    """Summaries (and weights for the homogeneous chain) of ``n`` limit paths."""
    chain = _LimitChain(flow, t, mchar)
    _, seg = chain.run(np.full(n, x0), rng, record=True)
    summ, lw = _segments_summary(seg, n, t, flow, probes, lam=mchar is None)
    return summ, lw


def feynman_kac_mean(model: ModelSpec, flow: FlowBundle, x0, t: float, N: int, seed: int) -> Estimate:
    """Monte Carlo ``E[W(t)]`` along the homogeneous limit spine."""
    x0 = _check_x0(model, x0)
    probes = np.array([t])

    def block(n, rng):
        _, lw = limit_spine_batch(flow, None, x0, t, probes, n, rng)
        return np.exp(lw)

    return mean_se(np.concatenate(run_blocks(block, N, seed, f"fk:{x0}:{t}")))


def link_identity(model: ModelSpec, flow: FlowBundle, mchar: MCharacteristic, x0, t: float,
                  functionals: Sequence[Functional], N: int, seed: int):
    """``E[W(t) F(Y)]`` on the homogeneous chain against ``m * E[F(Y^(t))]``.

    Returns a list of ``(weighted, scaled)`` estimate pairs.
    """
    x0 = _check_x0(model, x0)
    probes = probe_grid(functionals, t)

    def hom(n, rng):
        summ, lw = limit_spine_batch(flow, None, x0, t, probes, n, rng)
        w = np.exp(lw)
        return np.stack([w * F.on_summary(summ, t) for F in functionals])

    def inhom(n, rng):
        summ, _ = limit_spine_batch(flow, mchar, x0, t, probes, n, rng)
        return np.stack([F.on_summary(summ, t) for F in functionals])

    a = np.concatenate(run_blocks(hom, N, seed, f"link-hom:{x0}"), axis=1)
    b = np.concatenate(run_blocks(inhom, N, seed, f"link-inhom:{x0}"), axis=1)
    m = float(mchar.at0()[x0])
    out = []
    for q in range(len(functionals)):
        ea, eb = mean_se(a[q]), mean_se(b[q])
        out.append((ea, Estimate(m * eb.mean, m * eb.se, eb.n)))
    return out


def limit_rhs(model: ModelSpec, z0, functionals: Sequence[Functional], t: float, N: int, seed: int,
              flow: FlowBundle | None = None, mchar: MCharacteristic | None = None) -> list[Estimate]:
    """``sum_x z0_x m(x, z0, t) E[F(Y^(t)_x, z)]`` with N limit paths per type."""
    z0 = np.asarray(z0, dtype=float)
    flow = flow or solve_flow(model, z0, t)
    mchar = mchar or solve_m_characteristics(model, flow, t)
    probes = probe_grid(functionals, t)
    u0 = mchar.at0()
    means = np.zeros(len(functionals))
    var = np.zeros(len(functionals))
    for x in range(model.D):
        if z0[x] <= 0:
            continue

        def block(n, rng, x=x):
            summ, _ = limit_spine_batch(flow, mchar, x, t, probes, n, rng)
            return np.stack([F.on_summary(summ, t) for F in functionals])

        vals = np.concatenate(run_blocks(block, N, seed, f"limit-rhs:{x}"), axis=1)
        w = z0[x] * u0[x]
        for q in range(len(functionals)):
            e = mean_se(vals[q])
            means[q] += w * e.mean
            var[q] += (w * e.se) ** 2
    return [Estimate(float(means[q]), float(math.sqrt(var[q])), N) for q in range(len(functionals))]


# --------------------------------------------------------------------------
# finite-K homogeneous spine over {0,1} x types, and its coupling to the limit


def _star_init(model: ModelSpec, K: int, z0, x0):
    x0 = _check_x0(model, x0)
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (model.D,) or np.any(z0 < 0) or z0.sum() > 1 + 1e-12:
        raise ModelError("initial density must lie in the unit simplex")
    counts = np.floor(K * z0 + 1e-9).astype(np.int64)
    if counts[x0] < 1:
        raise ModelError(f"floor(K z0) has no individual of type {x0} to carry the spine")
    c0 = counts.copy()
    c0[x0] -= 1
    return model.with_capacity(K), c0, x0


def dominating_rates(model: ModelSpec) -> np.ndarray:
    """``Theta_j = k_y * (sum of positive coefficients of tau_k(x, .))`` per spine channel."""
    cm = model.compiled
    js_e, js_y = spine_channels(model)
    pos = np.zeros(cm.E)
    for e in range(cm.E):
        a, b = cm.term_ptr[e], cm.term_ptr[e + 1]
        pos[e] = np.maximum(cm.term_coef[a:b], 0.0).sum()
    return cm.ev_k[js_e, js_y] * pos[js_e]


@dataclass(frozen=True)
class StarPath:
    times: np.ndarray
    spine_type: np.ndarray
    others: np.ndarray  # non-spine counts
    K: int
    t: float

    def spine_part(self) -> np.ndarray:
        """Normalized spine coordinates ``zeta_{1,x}``."""
        out = np.zeros(self.others.shape)
        out[np.arange(len(out)), self.spine_type] = 1.0 / self.K
        return out

    def projection(self) -> np.ndarray:
        return self.others / self.K + self.spine_part()


def simulate_hom_spine_star(model: ModelSpec, K: int, z0, x0, t: float, seed) -> StarPath:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mk, c0, x0 = _star_init(model, K, z0, x0)
    out = _star_run(mk, c0, x0, t, [t], 1, rng, record=True)
    return StarPath(out["r_t"], out["r_y"], out["r_c"], int(K), float(t))


@dataclass(frozen=True)
class CouplingResult:
    paths_equal: bool
    sup_deviation: float
    divergence_time: float | None


@dataclass
class CouplingBatch:
    equal: np.ndarray
    sup: np.ndarray
    tdiv: np.ndarray

    @property
    def equal_freq(self) -> Estimate:
        return mean_se(self.equal)

    @property
    def deviation(self) -> Estimate:
        return mean_se(self.sup)


def coupling_batch(model: ModelSpec, K: int, z0, x0, t: float, n: int, rng, flow: FlowBundle | None = None,
                   force_limit: bool = False) -> CouplingBatch:
    mk, c0, x0 = _star_init(model, K, z0, x0)
    if flow is None:
        flow = solve_flow(model, np.asarray(z0, float), t)
    out = _star_run(mk, c0, x0, t, [t], n, rng, flow=flow.kernel_arrays(), coupled=True,
                    force_limit=force_limit, theta=dominating_rates(mk))
    td = out["tdiv"]
    return CouplingBatch(out["equal"].astype(bool), out["sup"], np.where(td < 0, np.nan, td))


def couple_spines(model: ModelSpec, K: int, z0, x0, t: float, seed, flow: FlowBundle | None = None,
                  force_limit: bool = False) -> CouplingResult:
    """Finite-K spine and limit spine driven by the same dominating Poisson marks."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    b = coupling_batch(model, K, z0, x0, t, 1, rng, flow, force_limit)
    td = float(b.tdiv[0])
    return CouplingResult(bool(b.equal[0]), float(b.sup[0]), None if math.isnan(td) else td)


def coupling_experiment(model: ModelSpec, K: int, z0, x0, t: float, N: int, seed: int,
                        flow: FlowBundle | None = None, exp: str = "coupling") -> CouplingBatch:
    flow = flow or solve_flow(model, np.asarray(z0, float), t)
    parts = run_blocks(lambda n, rng: coupling_batch(model, K, z0, x0, t, n, rng, flow), N, seed,
                       f"{exp}:{K}", block=max(1, min(2000, 2_000_000 // max(K, 1))))
    return CouplingBatch(np.concatenate([p.equal for p in parts]), np.concatenate([p.sup for p in parts]),
                         np.concatenate([p.tdiv for p in parts]))


def estimate_sup_deviation(model: ModelSpec, K: int, z0, x0, t: float, N: int, seed: int,
                           flow: FlowBundle | None = None) -> tuple[float, float]:
    """Monte Carlo ``E[sup_s |proj(zeta^K)(s) - z(s)|_1]``; returns (mean, se)."""
    b = coupling_experiment(model, K, z0, x0, t, N, seed, flow, exp="sup-deviation")
    e = b.deviation
    return e.mean, e.se


def flow_lipschitz_check(model: ModelSpec, z1, z2, t: float, tol: float = 1e-11) -> float:
    """``sup_s |phi(s, z1) - phi(s, z2)|_1 / |z1 - z2|_1`` (0 when z1 = z2)."""
    z1 = np.asarray(z1, float)
    z2 = np.asarray(z2, float)
    d0 = float(np.abs(z1 - z2).sum())
    if d0 == 0:
        return 0.0
    f1 = solve_flow(model, z1, t, tol)
    f2 = solve_flow(model, z2, t, tol)
    return float(np.abs(f1.table.vals - f2.table.vals).sum(axis=1).max() / d0)


def gronwall_bound(model: ModelSpec, t: float) -> float:
    return math.exp(RateEval(model).lipschitz() * t)


def finite_k_lhs(model: ModelSpec, K: int, z0, functionals: Sequence[Functional], t: float, N: int, seed: int):
    """``(1/K) E[sum_u F(x_u, Z/K)]`` from ``floor(K z0)``."""
    from .popsim import many_to_one_lhs

    mk = model.with_capacity(K)
    counts = np.floor(K * np.asarray(z0, float) + 1e-9).astype(np.int64)
    est = many_to_one_lhs(mk, counts, functionals, t, N, seed, exp=f"lln-lhs:{K}")
    return [Estimate(e.mean / K, e.se / K, e.n) for e in est]
