"""Exact simulation of the finite-K population with its genealogy."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import kernels
from .functionals import Constant, Functional, LineageSummary, probe_grid
from .model import ModelError, ModelSpec
from .stats import Estimate, mean_se, run_blocks


@dataclass(frozen=True)
class Individual:
    label: tuple[int, ...]
    type: int
    birth: float
    death: float | None
    parent: tuple[int, ...] | None


class GenealogyForest:
    """Append-only arena of individuals; Ulam-Harris labels are built on demand.

    Roots are labelled ``(1,) ... (n,)`` grouped by type; the r-th child of
    ``u`` is ``u + (r,)``.
    """

    def __init__(self, types, birth, death, parent, rank):
        self.types = np.asarray(types, dtype=np.int64)
        self.birth = np.asarray(birth, dtype=float)
        self.death = np.asarray(death, dtype=float)
        self.parent = np.asarray(parent, dtype=np.int64)
        self.rank = np.asarray(rank, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.types)

    @cached_property
    def roots(self) -> np.ndarray:
        return np.flatnonzero(self.parent < 0)

    @cached_property
    def _labels(self) -> list[tuple[int, ...]]:
        out: list[tuple[int, ...]] = [()] * len(self)
        for h in range(len(self)):  # parents always precede children
            p = self.parent[h]
            out[h] = (int(self.rank[h]) + 1,) if p < 0 else out[p] + (int(self.rank[h]) + 1,)
        return out

    @cached_property
    def _by_label(self) -> dict:
        return {lab: h for h, lab in enumerate(self._labels)}

    def label(self, h: int) -> tuple[int, ...]:
        return self._labels[h]

    def handle(self, label: Sequence[int]) -> int:
        try:
            return self._by_label[tuple(label)]
        except KeyError:
            raise KeyError(f"no individual with label {tuple(label)}") from None

    def individual(self, h: int) -> Individual:
        d = self.death[h]
        p = self.parent[h]
        return Individual(self.label(h), int(self.types[h]), float(self.birth[h]),
                          None if np.isnan(d) else float(d), None if p < 0 else self.label(p))

    def alive_at(self, t: float) -> np.ndarray:
        """Handles alive at ``t`` (born at or before, dying strictly after)."""
        dead_after = np.isnan(self.death) | (self.death > t)
        return np.flatnonzero((self.birth <= t) & dead_after)

    def ancestry(self, h: int) -> list[int]:
        """Handles from the root down to ``h``."""
        chain = [h]
        while self.parent[chain[-1]] >= 0:
            chain.append(int(self.parent[chain[-1]]))
        return chain[::-1]

    def export(self, path) -> None:
        """Newline-delimited records: label, type, birth, death, parent."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("label\ttype\tbirth\tdeath\tparent\n")
            for h in range(len(self)):
                ind = self.individual(h)
                lab = ".".join(map(str, ind.label))
                par = ".".join(map(str, ind.parent)) if ind.parent else ""
                death = "" if ind.death is None else repr(ind.death)
                fh.write(f"{lab}\t{ind.type}\t{ind.birth!r}\t{death}\t{par}\n")


@dataclass(frozen=True)
class PopulationPath:
    times: np.ndarray  # (J,) jump times, first entry 0
    comps: np.ndarray  # (J, D) composition after each jump (counts)
    T: float
    K: int

    def at(self, s: float) -> np.ndarray:
        k = np.searchsorted(self.times, s, side="right") - 1
        return self.comps[max(k, 0)]


@dataclass(frozen=True)
class LineagePath:
    """Piecewise-constant ``(x_u(s), Z(s))`` on ``[0, t]`` as a jump list."""

    times: np.ndarray
    types: np.ndarray
    comps: np.ndarray  # counts
    K: int
    t: float

    def summary(self, probes) -> LineageSummary:
        from .functionals import summarize_segments

        n = len(self.times)
        return summarize_segments(self.times, self.types, self.comps / self.K,
                                  np.zeros(n, dtype=np.int64), 1, self.t, probes)


def _check_init(model: ModelSpec, init) -> np.ndarray:
    init = np.asarray(init, dtype=np.int64)
    if init.shape != (model.D,) or np.any(init < 0) or init.sum() > model.K:
        raise ModelError(f"initial composition {tuple(init)} is not in Z_K")
    return init


def simulate_population(model: ModelSpec, init, T: float, seed) -> tuple[GenealogyForest, PopulationPath]:
    """One exact Gillespie run with full genealogy."""
    init = _check_init(model, init)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = kernels.pop_batch(model.compiled, init, float(T), np.zeros(0), 1, rng, True)
    forest = GenealogyForest(out["a_type"], out["a_birth"], out["a_death"], out["a_parent"], out["a_rank"])
    return forest, PopulationPath(out["j_t"], out["j_z"], float(T), model.K)


def extract_lineage(forest: GenealogyForest, path: PopulationPath, u, t: float) -> LineagePath:
    """Ancestral type ``x_u(s)`` merged with the composition jumps on ``[0, t]``."""
    h = forest.handle(u) if not isinstance(u, (int, np.integer)) else int(u)
    if not (forest.birth[h] <= t and (np.isnan(forest.death[h]) or forest.death[h] > t)):
        raise ValueError(f"individual {forest.label(h)} is not alive at t={t}")
    chain = forest.ancestry(h)
    births = forest.birth[chain]
    keep = path.times <= t
    times = np.union1d(path.times[keep], births)
    # ancestor alive at s: last in the chain born at or before s
    k = np.searchsorted(births, times, side="right") - 1
    types = forest.types[np.asarray(chain)[k]]
    jz = np.searchsorted(path.times, times, side="right") - 1
    comps = path.comps[jz]
    # drop repeated states
    same = np.zeros(len(times), dtype=bool)
    same[1:] = (types[1:] == types[:-1]) & np.all(comps[1:] == comps[:-1], axis=1)
    sel = ~same
    return LineagePath(times[sel], types[sel], comps[sel], path.K, t)


def lineage_functional_sum(forest: GenealogyForest, path: PopulationPath, F: Functional, psi, t: float) -> float:
    """``sum_{u alive at t} psi(x_u(t), Z(t)/K) F(lineage of u)``."""
    total = 0.0
    zt = path.at(t) / path.K
    for h in forest.alive_at(t):
        lin = extract_lineage(forest, path, int(h), t)
        total += psi(int(forest.types[h]), zt) * F.evaluate(lin, t)
    return total


# --------------------------------------------------------------------------
# batched Monte Carlo


@dataclass
class PopulationBatch:
    """Individuals alive at ``t`` over ``n`` independent populations."""

    n: int
    rep: np.ndarray
    root: np.ndarray
    summary: LineageSummary
    zfinal: np.ndarray  # (n, D) counts at t

    def per_replica(self, weights) -> np.ndarray:
        return np.bincount(self.rep, weights=weights, minlength=self.n)


def simulate_batch(model: ModelSpec, init, t: float, probes, n: int, rng) -> PopulationBatch:
    init = _check_init(model, init)
    probes = np.asarray(probes, dtype=float)
    if probes.size == 0 or probes[-1] != t:
        probes = np.append(probes, t)
    out = kernels.pop_batch(model.compiled, init, float(t), probes, int(n), rng, False)
    zp = out["zprobe"]
    pcomp = zp[out["rep"]] / model.K
    summ = LineageSummary(probes, out["ptype"], pcomp, out["occ"], out["nchg"])
    return PopulationBatch(int(n), out["rep"], out["root"], summ, zp[:, -1, :])


def _psi_weights(model: ModelSpec, batch: PopulationBatch) -> np.ndarray:
    if model.psi.is_one:
        return np.ones(len(batch.rep))
    return model.psi.evaluate_many(batch.summary.final_type, batch.zfinal[batch.rep] / model.K)


def designated_root(init, x: int) -> int:
    """Root index of ``u_x``: the lowest label among initial individuals of type x."""
    init = list(init)
    if init[x] < 1:
        raise ModelError(f"no initial individual of type {x}")
    return int(sum(init[:x]))


def estimate_m_mc(model: ModelSpec, x: int, z, t: float, N: int, seed: int, *, per_replica: bool = False):
    """Monte Carlo ``m(x, z, t)``: mean over N runs of the psi-weighted count of
    time-t descendants of ``u_x``."""
    z = _check_init(model, z)
    x = model.type_index(x)
    root = designated_root(z, x)

    def block(n, rng):
        b = simulate_batch(model, z, t, [t], n, rng)
        w = _psi_weights(model, b) * (b.root == root)
        return b.per_replica(w)

    vals = np.concatenate(run_blocks(block, N, seed, f"m-mc:{x}:{tuple(z)}:{t}")) if N else np.zeros(0)
    est = mean_se(vals)
    return (est, vals) if per_replica else (est.mean, est.se)


def many_to_one_lhs(model: ModelSpec, z0, functionals: Sequence[Functional], t: float, N: int, seed: int,
                    exp: str = "m2o-lhs") -> list[Estimate]:
    """Monte Carlo ``E[sum_{u alive at t} psi(x_u(t), Z(t)) F(x_u, Z)]`` for each F."""
    z0 = _check_init(model, z0)
    functionals = list(functionals) or [Constant()]
    probes = probe_grid(functionals, t)

    def block(n, rng):
        b = simulate_batch(model, z0, t, probes, n, rng)
        w = _psi_weights(model, b)
        return np.stack([b.per_replica(w * F.on_summary(b.summary, t)) for F in functionals])

    vals = np.concatenate(run_blocks(block, N, seed, exp), axis=1)
    return [mean_se(v) for v in vals]
