"""Generator on the spine state space and the m-function ``m(t) = exp(G t) psi``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .interp import LogHermiteTable
from .model import ModelError, ModelSpec, StateIndex, enumerate_states

DENSE_MAX = 512
M_FLOOR = 1e-30


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorMatrix:
    matrix: sp.csr_matrix
    idx: StateIndex

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def build_generator(model: ModelSpec, idx: StateIndex | None = None) -> GeneratorMatrix:
    """Assemble G: for every state (x, z) and event (y, k), the spine line
    (y = x) jumps to each offspring type w at rate ``k_w tau_k(x, z)``; every
    other individual of type y moves the population to ``z + k - e(y)``
    at rate ``(z_y - 1{x=y}) tau_k(y, z)``.
    """
    if idx is None:
        idx = enumerate_states(model)
    D = model.D
    rows, cols, vals = [], [], []
    diag = np.zeros(len(idx))
    for i, (x, z) in enumerate(idx.states):
        for ev in model.events:
            r = model.rate_counts(ev, z)
            if r <= 0.0:
                continue
            y = ev.parent
            nz = tuple(z[w] + ev.offspring[w] - (w == y) for w in range(D))
            if y == x:
                # the spine itself reproduces: follow each offspring type
                diag[i] -= r
                for w in range(D):
                    if ev.offspring[w]:
                        j = idx.get(w, nz)
                        if j < 0:
                            raise ModelError(f"target state ({w}, {nz}) missing from the state index")
                        rows.append(i)
                        cols.append(j)
                        vals.append(ev.offspring[w] * r)
            mult = z[y] - (1 if y == x else 0)
            if mult > 0:
                j = idx.get(x, nz)
                if j < 0:
                    raise ModelError(f"target state ({x}, {nz}) missing from the state index")
                diag[i] -= mult * r
                rows.append(i)
                cols.append(j)
                vals.append(mult * r)
    n = len(idx)
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(diag)
    G = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    G.sum_duplicates()
    return GeneratorMatrix(G, idx)


def psi_vector(model: ModelSpec, idx: StateIndex) -> np.ndarray:
    if model.psi.is_one:
        return np.ones(len(idx))
    return model.psi.evaluate_many(idx.types, idx.comps / model.K)


@dataclass
class MTable:
    """``m(., t)`` on a time grid, with the generator used to build it."""

    grid: np.ndarray
    values: np.ndarray  # (M+1, n)
    psi: np.ndarray
    gen: GeneratorMatrix
    K: int = 0
    dense: object = field(default=None, repr=False)  # solver's continuous extension
    refine: int = 4
    _interp: LogHermiteTable | None = field(default=None, repr=False)

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    @property
    def idx(self) -> StateIndex:
        return self.gen.idx

    @property
    def interp(self) -> LogHermiteTable:
        if self._interp is None:
            grid, values = self.grid, self.values
            if self.dense is not None and self.refine > 1 and len(grid) > 1:
                # sub-nodes from the continuous extension tighten the interpolant
                frac = np.arange(self.refine) / self.refine
                grid = np.append((grid[:-1, None] + np.diff(grid)[:, None] * frac).ravel(), grid[-1])
                values = self.dense(grid).T
                values[:: self.refine] = self.values
                if np.any(values <= 0):
                    raise SolverError("nonpositive m value in the continuous extension")
            derivs = (self.gen.matrix @ values.T).T
            self._interp = LogHermiteTable(grid, values, derivs)
        return self._interp

    def at(self, t, states=None) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.T * (1 + 1e-12) + 1e-15):
            raise SolverError(f"time outside the table range [0, {self.T}]")
        t = np.minimum(t, self.T)
        if self.dense is not None and len(self.grid) > 1:
            v = self.dense(t.ravel()).T.reshape(t.shape + (self.values.shape[1],))
            if states is not None:
                v = v[..., states] if t.ndim == 0 else np.take_along_axis(
                    v, np.broadcast_to(np.asarray(states), t.shape)[..., None], axis=-1)[..., 0]
        else:
            v = self.interp.at(t, states)
        if np.any(v < M_FLOOR):
            raise SolverError("interpolated m fell below 1e-30; horizon or tolerance misconfigured")
        return v


def solve_m(G: GeneratorMatrix, psi, T: float, tol: float = 1e-10, max_step: float | None = None) -> MTable:
    """Integrate ``m' = G m`` from ``m(0) = psi`` with an adaptive explicit
    8th-order Runge-Kutta scheme; the table grid is the accepted steps.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (G.n,):
        raise ValueError(f"psi has shape {psi.shape}, expected ({G.n},)")
    if np.any(psi <= 0):
        raise SolverError("psi must be strictly positive")
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    if T == 0:
        return MTable(np.zeros(1), psi[None, :].copy(), psi, G)
    if max_step is None:
        max_step = 1e-2 * T
    A = G.matrix
    sol = solve_ivp(
        lambda _t, m: A @ m,
        (0.0, T),
        psi,
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        max_step=max_step,
        dense_output=True,
    )
    if not sol.success:
        raise SolverError(sol.message)
    vals = sol.y.T.copy()
    if np.any(vals <= 0):
        raise SolverError("nonpositive m value encountered; tolerance too loose or invalid model")
    return MTable(sol.t.copy(), vals, psi, G, dense=sol.sol)


def solve_model(model: ModelSpec, T: float, tol: float = 1e-10, max_step: float | None = None) -> MTable:
    idx = enumerate_states(model)
    G = build_generator(model, idx)
    tab = solve_m(G, psi_vector(model, idx), T, tol, max_step)
    tab.K = model.K
    return tab


def m_at(table: MTable, x: int, z, t: float) -> float:
    """``m(x, z, t)`` from the table (log-space Hermite interpolation in time)."""
    if not 0 <= t <= table.T:
        raise SolverError(f"t={t} outside [0, {table.T}]")
    i = table.idx.index(x, z)
    k = np.searchsorted(table.grid, t)
    if k < len(table.grid) and table.grid[k] == t:
        return float(table.values[k, i])
    return float(table.at(t, i))


def dense_m(G: GeneratorMatrix, psi, T: float) -> np.ndarray:
    """``exp(G T) psi`` by Pade scaling and squaring (n <= 512)."""
    if G.n > DENSE_MAX:
        raise SolverError(f"dense fallback limited to n <= {DENSE_MAX}")
    return scipy.linalg.expm(G.dense() * T) @ np.asarray(psi, dtype=float)


# --------------------------------------------------------------------------
# toy model closed forms


@dataclass(frozen=True)
class ToyClosedForm:
    b: float
    c: float

    def __post_init__(self):
        if not (self.b > 0 and self.c > 0):
            raise ValueError("b and c must be positive")

    @property
    def delta(self) -> float:
        b, c = self.b, self.c
        return 9 * b * b + 9 * c * c - 2 * b * c

    @property
    def lambdas(self) -> tuple[float, float]:
        r = math.sqrt(self.delta)
        s = 3 * self.b + 3 * self.c
        return s + r, s - r

    def components(self):
        """Constant vector and the two decaying modes ``(coef, rate, vector)``."""
        b, c = self.b, self.c
        r = math.sqrt(self.delta)
        lp, lm = self.lambdas
        const = 0.8 * np.array([2.0, 1.0, 1.0, 1.0])
        vp = np.array([-(-3 * b + 3 * c - r) / (2 * c), -(3 * b + c + r) / (2 * c), 1.0, 1.0])
        vm = np.array([-(-3 * b + 3 * c + r) / (2 * c), -(3 * b + c - r) / (2 * c), 1.0, 1.0])
        return const, (-lm / (10 * r), lp / 2, vp), (lp / (10 * r), lm / 2, vm)

    def m(self, t) -> np.ndarray:
        const, (ap, kp, vp), (am, km, vm) = self.components()
        t = np.asarray(t, dtype=float)
        return const + (ap * np.exp(-kp * t))[..., None] * vp + (am * np.exp(-km * t))[..., None] * vm

    def rho(self, t: float, s: float) -> float:
        """Birth rate of a lone type-A spine, ``2b m(A,2,0,t-s) / m(A,1,0,t-s)``."""
        b, c = self.b, self.c
        r = math.sqrt(self.delta)
        lp, lm = self.lambdas
        u = t - s
        ep, em = math.exp(-lp * u / 2), math.exp(-lm * u / 2)
        num = 16 * c * r + lm * (3 * b + c + r) * ep - lp * (3 * b + c - r) * em
        den = 32 * c * r + lm * (-3 * b + 3 * c - r) * ep - lp * (-3 * b + 3 * c + r) * em
        return 2 * b * num / den


def toy_m_closed_form(b: float, c: float, t):
    return ToyClosedForm(b, c).m(t)


def toy_rho_closed_form(b: float, c: float, t: float, s: float) -> float:
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    return ToyClosedForm(b, c).rho(t, s)


def export_mtable(table: MTable, path) -> None:
    """Tabular text: state index, time, value."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("state,time,value\n")
        for k, tk in enumerate(table.grid):
            for i in range(table.values.shape[1]):
                fh.write(f"{i},{tk!r},{table.values[k, i]!r}\n")
