"""Built-in path functionals of a lineage ``(x(s), z(s))_{s <= t}``.

Every simulator reduces its paths to a :class:`LineageSummary` at a common
set of probe times; functionals are evaluated on summaries, so one batch of
paths serves many functionals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class LineageSummary:
    """Per-path statistics at probe times (last probe is the horizon)."""

    probes: np.ndarray  # (P,)
    ptype: np.ndarray  # (N, P) lineage type at each probe
    pcomp: np.ndarray  # (N, P, D) normalized composition at each probe
    occ: np.ndarray  # (N, D) time spent in each type on [0, t]
    nchg: np.ndarray  # (N,) number of type changes

    def __len__(self) -> int:
        return self.ptype.shape[0]

    def probe_index(self, s: float) -> int:
        k = int(np.searchsorted(self.probes, s))
        if k >= len(self.probes) or not np.isclose(self.probes[k], s, rtol=0, atol=1e-12):
            raise KeyError(f"time {s} is not a probe time")
        return k

    @property
    def final_type(self) -> np.ndarray:
        return self.ptype[:, -1]

    def take(self, sel) -> "LineageSummary":
        return LineageSummary(self.probes, self.ptype[sel], self.pcomp[sel], self.occ[sel], self.nchg[sel])


def probe_grid(functionals: Sequence["Functional"], t: float) -> np.ndarray:
    times = {float(t)}
    for f in functionals:
        times.update(float(s) for s in f.probe_times(t))
    bad = [s for s in times if not 0 <= s <= t]
    if bad:
        raise ValueError(f"probe times {bad} outside [0, {t}]")
    return np.array(sorted(times))


def summarize_segments(starts, types, comps, path_id, n_paths, t, probes) -> LineageSummary:
    """Summaries of piecewise-constant paths given as segment lists.

    Segments are sorted by ``(path_id, start)``; ``comps`` are normalized.
    """
    starts = np.asarray(starts, dtype=float)
    types = np.asarray(types)
    comps = np.asarray(comps, dtype=float)
    path_id = np.asarray(path_id)
    ends = np.empty_like(starts)
    ends[:-1] = starts[1:]
    last = np.ones(len(starts), dtype=bool)
    last[:-1] = path_id[1:] != path_id[:-1]
    ends[last] = t
    D = comps.shape[1]
    occ = np.zeros((n_paths, D))
    np.add.at(occ, (path_id, types), ends - starts)
    first = np.ones(len(starts), dtype=bool)
    first[1:] = path_id[1:] != path_id[:-1]
    change = ~first & (types != np.roll(types, 1))
    nchg = np.bincount(path_id[change], minlength=n_paths)
    # segment holding each probe: last start <= s within the path
    offs = np.searchsorted(path_id, np.arange(n_paths))
    P = len(probes)
    ptype = np.empty((n_paths, P), dtype=np.int64)
    pcomp = np.empty((n_paths, P, D))
    for q, s in enumerate(probes):
        n_le = np.bincount(path_id, weights=starts <= s, minlength=n_paths).astype(np.int64)
        pos = offs + np.maximum(n_le, 1) - 1
        ptype[:, q] = types[pos]
        pcomp[:, q] = comps[pos]
    return LineageSummary(np.asarray(probes, float), ptype, pcomp, occ, nchg)


class Functional:
    kind = "abstract"
    lipschitz = 0.0

    def probe_times(self, t: float) -> list[float]:
        return []

    def bound(self, t: float) -> float:
        return 1.0

    def on_summary(self, summ: LineageSummary, t: float) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, path, t: float) -> float:
        """Value on a single :class:`LineagePath`."""
        probes = probe_grid([self], t)
        summ = path.summary(probes)
        return float(self.on_summary(summ, t)[0])

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.describe()})"

    def describe(self) -> str:
        return self.kind


class Constant(Functional):
    kind = "const"

    def on_summary(self, summ, t):
        return np.ones(len(summ))


class FinalType(Functional):
    kind = "final"

    def __init__(self, target: int):
        self.target = int(target)

    def on_summary(self, summ, t):
        return (summ.final_type == self.target).astype(float)

    def describe(self):
        return f"final:{self.target}"


class TypeAtTimes(Functional):
    """Indicator that the lineage has type ``targets[i]`` at ``times[i]`` for all i."""

    kind = "at"

    def __init__(self, times: Sequence[float], targets: Sequence[int]):
        if len(times) != len(targets) or not times:
            raise ValueError("need matching, nonempty times and targets")
        self.times = [float(s) for s in times]
        self.targets = [int(x) for x in targets]

    def probe_times(self, t):
        return list(self.times)

    def on_summary(self, summ, t):
        ok = np.ones(len(summ), dtype=bool)
        for s, x in zip(self.times, self.targets):
            ok &= summ.ptype[:, summ.probe_index(s)] == x
        return ok.astype(float)

    def describe(self):
        return "at:" + ",".join(f"{s:g}={x}" for s, x in zip(self.times, self.targets))


class Occupation(Functional):
    """Time the lineage spends in ``target`` on ``[0, t]``."""

    kind = "occ"

    def __init__(self, target: int):
        self.target = int(target)

    def bound(self, t):
        return float(t)

    def on_summary(self, summ, t):
        return summ.occ[:, self.target].copy()

    def describe(self):
        return f"occ:{self.target}"


class TypeChanges(Functional):
    """Number of type changes along the lineage, truncated at ``cap``."""

    kind = "changes"

    def __init__(self, cap: int = 10):
        self.cap = int(cap)

    def bound(self, t):
        return float(self.cap)

    def on_summary(self, summ, t):
        return np.minimum(summ.nchg, self.cap).astype(float)

    def describe(self):
        return f"changes:{self.cap}"


class CompositionProbe(Functional):
    """Normalized population coordinate ``z_coord(time)``."""

    kind = "comp"
    lipschitz = 1.0

    def __init__(self, coord: int, time: float):
        self.coord = int(coord)
        self.time = float(time)

    def probe_times(self, t):
        return [self.time]

    def on_summary(self, summ, t):
        return summ.pcomp[:, summ.probe_index(self.time), self.coord].copy()

    def describe(self):
        return f"comp:{self.coord}@{self.time:g}"


def parse_functional(text: str, type_index) -> Functional:
    """``const``, ``final:B``, ``at:1.5=A,3=B``, ``occ:A``, ``changes:5``, ``comp:A@1.5``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind in ("const", "constant", "1"):
        return Constant()
    if kind == "final":
        return FinalType(type_index(arg.strip()))
    if kind == "occ":
        return Occupation(type_index(arg.strip()))
    if kind == "changes":
        return TypeChanges(int(arg) if arg else 10)
    if kind == "comp":
        coord, _, s = arg.partition("@")
        return CompositionProbe(type_index(coord.strip()), float(s))
    if kind == "at":
        times, targets = [], []
        for item in arg.split(","):
            s, _, x = item.partition("=")
            times.append(float(s))
            targets.append(type_index(x.strip()))
        return TypeAtTimes(times, targets)
    raise ValueError(f"unknown functional {text!r}")
