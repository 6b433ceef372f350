"""Seeded block-parallel Monte Carlo and standard errors."""

from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

BLOCK = 2000


def experiment_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def block_rng(seed: int, exp_id: int, block: int) -> np.random.Generator:
    """Independent stream for one block of replicas, fixed by (seed, experiment, block)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(exp_id), int(block)]))


def n_workers() -> int:
    env = os.environ.get("SPINAL_THREADS")
    cpu = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpu))
        except ValueError:
            pass
    return cpu


def run_blocks(fn: Callable[[int, np.random.Generator], object], N: int, seed: int, exp: str | int,
               block: int = BLOCK, workers: int | None = None) -> list:
    """Run ``fn(n, rng)`` on consecutive blocks of ``N`` replicas.

    Results come back in block order whatever the scheduling, so any
    reduction over them is a pure function of ``(N, seed, exp, block)``.
    """
    exp_id = experiment_id(exp) if isinstance(exp, str) else int(exp)
    sizes = [block] * (N // block) + ([N % block] if N % block else [])
    jobs = [(n, block_rng(seed, exp_id, b)) for b, n in enumerate(sizes)]
    workers = min(workers or n_workers(), len(jobs)) if jobs else 1
    if workers <= 1:
        return [fn(n, rng) for n, rng in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float
    n: int

    def __iter__(self):
        yield self.mean
        yield self.se


def mean_se(values) -> Estimate:
    """Sample mean with compensated summation, and its standard error."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n == 0:
        return Estimate(math.nan, math.nan, 0)
    m = math.fsum(v) / n
    if n < 2:
        return Estimate(m, 0.0, n)
    var = math.fsum((v - m) ** 2) / (n - 1)
    return Estimate(m, math.sqrt(var / n), n)


def batch_means_se(values, batch: int = 20) -> float:
    """Standard error of the mean recomputed from non-overlapping batch means."""
    v = np.asarray(values, dtype=float).ravel()
    nb = v.size // batch
    if nb < 2:
        raise ValueError("need at least two batches")
    means = v[: nb * batch].reshape(nb, batch).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(nb))


def gap(a: Estimate, b: Estimate) -> float:
    """Standardized difference ``|a - b| / sqrt(se_a^2 + se_b^2)``."""
    se = math.hypot(a.se, b.se)
    d = abs(a.mean - b.mean)
    if se == 0:
        return 0.0 if d <= 1e-12 * max(1.0, abs(a.mean)) else math.inf
    return d / se


def loglog_slope(x, y) -> float:
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])
