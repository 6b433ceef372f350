"""Positive interpolation in time for tabulated ODE solutions."""

from __future__ import annotations

import numpy as np


class LogHermiteTable:
    """Piecewise cubic Hermite interpolant of ``log v`` on a time grid.

    ``values[k]`` and ``derivs[k]`` hold ``v(t_k)`` and ``v'(t_k)`` for every
    component.  The interpolant is exact at grid points, positive, and exact
    for pure exponentials; its local error is fourth order in the step.
    """

    def __init__(self, grid: np.ndarray, values: np.ndarray, derivs: np.ndarray):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
            derivs = np.asarray(derivs, dtype=float)[:, None]
        if np.any(values <= 0):
            raise ValueError("log interpolation needs strictly positive values")
        self.grid = grid
        self.values = values
        self.logv = np.log(values)
        self.dlogv = np.asarray(derivs, dtype=float) / values
        self.n = values.shape[1]

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    def cell(self, t) -> np.ndarray:
        """Index ``c`` of the cell ``[t_c, t_{c+1}]`` containing ``t``."""
        c = np.searchsorted(self.grid, t, side="right") - 1
        return np.clip(c, 0, max(len(self.grid) - 2, 0))

    def log_at(self, t, idx=None) -> np.ndarray:
        """``log v`` at times ``t`` for components ``idx`` (broadcast together)."""
        t = np.asarray(t, dtype=float)
        if idx is None:
            idx = np.arange(self.n)
            t_b = t[..., None]
        else:
            idx = np.asarray(idx)
            t_b = t
        t_b, idx = np.broadcast_arrays(t_b, idx)
        if len(self.grid) == 1:
            return self.logv[0, idx]
        c = self.cell(t_b)
        t0 = self.grid[c]
        h = self.grid[c + 1] - t0
        th = (t_b - t0) / h
        th2 = th * th
        th3 = th2 * th
        h00 = 2 * th3 - 3 * th2 + 1
        h10 = th3 - 2 * th2 + th
        h01 = -2 * th3 + 3 * th2
        h11 = th3 - th2
        return (
            h00 * self.logv[c, idx]
            + h10 * h * self.dlogv[c, idx]
            + h01 * self.logv[c + 1, idx]
            + h11 * h * self.dlogv[c + 1, idx]
        )

    def at(self, t, idx=None) -> np.ndarray:
        return np.exp(self.log_at(t, idx))

    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact min and max of the log interpolant on every cell, shape ``(M, n)``."""
        L0, L1 = self.logv[:-1], self.logv[1:]
        h = np.diff(self.grid)[:, None]
        d0, d1 = h * self.dlogv[:-1], h * self.dlogv[1:]
        # p(th) = a th^3 + b th^2 + c th + d on [0, 1]
        a = 2 * L0 + d0 - 2 * L1 + d1
        b = -3 * L0 - 2 * d0 + 3 * L1 - d1
        c = d0
        lo = np.minimum(L0, L1)
        hi = np.maximum(L0, L1)
        # critical points solve 3a th^2 + 2b th + c = 0
        A, B, C = 3 * a, 2 * b, c
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = B * B - 4 * A * C
            sq = np.sqrt(np.where(disc >= 0, disc, 0.0))
            roots = [
                np.where(np.abs(A) > 1e-300, (-B + sq) / (2 * A), np.where(B != 0, -C / B, -1.0)),
                np.where(np.abs(A) > 1e-300, (-B - sq) / (2 * A), -1.0),
            ]
        for r in roots:
            ok = (disc >= 0) & (r > 0) & (r < 1)
            r = np.where(ok, r, 0.0)
            val = ((a * r + b) * r + c) * r + L0
            lo = np.where(ok, np.minimum(lo, val), lo)
            hi = np.where(ok, np.maximum(hi, val), hi)
        return lo, hi
