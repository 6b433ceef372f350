"""Density-dependent multi-type population models.

A model is a finite type space, a finite list of offspring events
``(parent, k)`` each carrying a polynomial rate in the population
composition, a capacity ``K`` and a positive sampling weight ``psi``.

Rates are stored once, as polynomials in *normalized* coordinates
``z / K``.  The finite-K process evaluates them at ``counts / K`` and
multiplies by the capacity guard; the large-population limit evaluates the
raw polynomial on ``[0, 1]^D``.
"""

from __future__ import annotations

import itertools
import math
import sys
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

HEADER = "spinal-model v1"
STATE_CAP = 500_000
GUARD_MODES = ("indicator", "none")

# number of lattice points beyond which validation falls back to a strided grid
_VALIDATION_POINTS = 200_000


class ModelError(ValueError):
    """Raised for malformed or inconsistent model definitions."""


# --------------------------------------------------------------------------
# rate polynomials


@dataclass(frozen=True)
class RatePolynomial:
    """Real polynomial in the D composition coordinates.

    ``terms`` is a tuple of ``(exponents, coefficient)`` pairs, kept in a
    canonical order with zero coefficients dropped, so that equality of two
    polynomials is structural.
    """

    terms: tuple[tuple[tuple[int, ...], float], ...]
    dim: int

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[Sequence[int], float]], dim: int) -> "RatePolynomial":
        acc: dict[tuple[int, ...], float] = {}
        for exps, coef in terms:
            exps = tuple(int(a) for a in exps)
            if len(exps) != dim:
                raise ModelError(f"multi-index {exps} has length {len(exps)}, expected {dim}")
            if any(a < 0 for a in exps):
                raise ModelError(f"negative exponent in {exps}")
            acc[exps] = acc.get(exps, 0.0) + float(coef)
        items = tuple(sorted((e, c) for e, c in acc.items() if c != 0.0))
        return cls(items, dim)

    @classmethod
    def constant(cls, value: float, dim: int) -> "RatePolynomial":
        return cls.from_terms([((0,) * dim, value)], dim)

    @property
    def max_degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def __call__(self, z: Sequence[float]) -> float:
        # repeated multiplication, same operation order as the compiled kernels
        total = 0.0
        for exps, coef in self.terms:
            v = coef
            for zi, a in zip(z, exps):
                for _ in range(a):
                    v *= zi
            total += v
        return total

    def evaluate_many(self, z: np.ndarray) -> np.ndarray:
        """Evaluate at each row of an ``(n, D)`` array."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.zeros(z.shape[0])
        for exps, coef in self.terms:
            v = np.full(z.shape[0], coef)
            for i, a in enumerate(exps):
                if a:
                    v = v * z[:, i] ** a
            out += v
        return out

    def box_upper(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Upper bound over the boxes ``[lo, hi]`` (rows), assuming ``lo >= 0``.

        Every monomial is nondecreasing in each nonnegative coordinate, so
        each term is bounded at the corner favoured by its sign.
        """
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        out = np.zeros(lo.shape[0])
        for exps, coef in self.terms:
            corner = hi if coef > 0 else lo
            v = np.full(lo.shape[0], coef)
            for i, a in enumerate(exps):
                if a:
                    v = v * corner[:, i] ** a
            out += v
        return out

    def sup_abs(self) -> float:
        """Bound on ``|p|`` over ``[0, 1]^D``."""
        return sum(abs(c) for _, c in self.terms)

    def grad_bound(self) -> float:
        """Bound on ``max_i |dp/dz_i|`` over ``[0, 1]^D`` (Lipschitz constant for the l1 norm)."""
        if not self.terms:
            return 0.0
        return max(sum(abs(c) * e[i] for e, c in self.terms) for i in range(self.dim))

    def pairs(self) -> list[list]:
        return [[list(e), c] for e, c in self.terms]


# --------------------------------------------------------------------------
# model pieces


@dataclass(frozen=True)
class TypeSpace:
    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise ModelError("type space must be nonempty")
        if any(not isinstance(n, str) or not n for n in self.names):
            raise ModelError("type names must be nonempty strings")
        if len(set(self.names)) != len(self.names):
            raise ModelError("type names must be unique")

    @property
    def D(self) -> int:
        return len(self.names)

    def index(self, x) -> int:
        if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
            if 0 <= x < self.D:
                return int(x)
            raise ModelError(f"unknown type index {x}")
        try:
            return self.names.index(x)
        except ValueError:
            raise ModelError(f"unknown type {x!r}") from None


@dataclass(frozen=True)
class OffspringEvent:
    parent: int
    offspring: tuple[int, ...]
    rate: RatePolynomial

    @property
    def size(self) -> int:
        return sum(self.offspring)


@dataclass(frozen=True)
class PsiWeight:
    """Per-type polynomial sampling weight; ``polys=None`` is the constant 1."""

    polys: tuple[RatePolynomial, ...] | None = None

    @property
    def is_one(self) -> bool:
        return self.polys is None

    def __call__(self, x: int, z_norm: Sequence[float]) -> float:
        if self.polys is None:
            return 1.0
        return self.polys[x](z_norm)

    def evaluate_many(self, types: np.ndarray, z_norm: np.ndarray) -> np.ndarray:
        types = np.asarray(types)
        if self.polys is None:
            return np.ones(types.shape[0])
        z_norm = np.atleast_2d(z_norm)
        if z_norm.shape[0] == 1 and types.shape[0] != 1:
            z_norm = np.repeat(z_norm, types.shape[0], axis=0)
        out = np.empty(types.shape[0])
        for x, p in enumerate(self.polys):
            sel = types == x
            if sel.any():
                out[sel] = p.evaluate_many(z_norm[sel])
        return out


@dataclass(frozen=True)
class CompiledModel:
    """Flat array form of a model consumed by the simulation kernels."""

    D: int
    K: int
    guard: int
    ev_parent: np.ndarray  # (E,) int64
    ev_k: np.ndarray  # (E, D) int64
    ev_size: np.ndarray  # (E,) int64
    term_ptr: np.ndarray  # (E+1,) int64
    term_coef: np.ndarray  # (T,) float64
    term_exp: np.ndarray  # (T, D) int64

    @property
    def E(self) -> int:
        return self.ev_parent.shape[0]


@dataclass(frozen=True)
class ModelSpec:
    types: TypeSpace
    events: tuple[OffspringEvent, ...]
    K: int
    psi: PsiWeight = field(default_factory=PsiWeight)
    guard: str = "indicator"
    init: tuple[int, ...] | None = None
    name: str = ""

    @property
    def D(self) -> int:
        return self.types.D

    def type_index(self, x) -> int:
        return self.types.index(x)

    def event(self, x, k: Sequence[int]) -> OffspringEvent | None:
        xi = self.type_index(x)
        k = tuple(int(v) for v in k)
        for ev in self.events:
            if ev.parent == xi and ev.offspring == k:
                return ev
        return None

    def with_capacity(self, K: int, init: tuple[int, ...] | None = None) -> "ModelSpec":
        return ModelSpec(self.types, self.events, int(K), self.psi, self.guard, init, self.name)

    def with_psi(self, psi: PsiWeight) -> "ModelSpec":
        return ModelSpec(self.types, self.events, self.K, psi, self.guard, self.init, self.name)

    @cached_property
    def compiled(self) -> CompiledModel:
        D = self.D
        parents, ks, sizes, ptr, coefs, exps = [], [], [], [0], [], []
        for ev in self.events:
            parents.append(ev.parent)
            ks.append(ev.offspring)
            sizes.append(ev.size)
            for e, c in ev.rate.terms:
                coefs.append(c)
                exps.append(e)
            ptr.append(len(coefs))
        return CompiledModel(
            D=D,
            K=self.K,
            guard=1 if self.guard == "indicator" else 0,
            ev_parent=np.asarray(parents, dtype=np.int64),
            ev_k=np.asarray(ks, dtype=np.int64).reshape(len(parents), D),
            ev_size=np.asarray(sizes, dtype=np.int64),
            term_ptr=np.asarray(ptr, dtype=np.int64),
            term_coef=np.asarray(coefs, dtype=np.float64),
            term_exp=np.asarray(exps, dtype=np.int64).reshape(len(coefs), D),
        )

    # -- finite-K rates -------------------------------------------------

    def rate_counts(self, ev: OffspringEvent, z: Sequence[int]) -> float:
        """``tau_k(x, z/K)`` times the capacity guard, for integer counts ``z``."""
        if self.guard == "indicator" and sum(z) + ev.size - 1 > self.K:
            return 0.0
        K = self.K
        return ev.rate([zi / K for zi in z])

    def total_rate_counts(self, x: int, z: Sequence[int]) -> float:
        return sum(self.rate_counts(ev, z) for ev in self.events if ev.parent == x)

    # -- limit rates ----------------------------------------------------

    def drift_matrix(self, z: Sequence[float]) -> np.ndarray:
        """``A_{xy}(z) = sum_k (k_y - 1{x=y}) tau_k(x, z)`` in normalized coordinates."""
        D = self.D
        A = np.zeros((D, D))
        for ev in self.events:
            r = ev.rate(z)
            A[ev.parent] += r * np.asarray(ev.offspring, dtype=float)
            A[ev.parent, ev.parent] -= r
        return A

    def branching_intensity(self, z: Sequence[float]) -> np.ndarray:
        """``lambda(x, z) = sum_k (|k| - 1) tau_k(x, z)`` for every type ``x``."""
        lam = np.zeros(self.D)
        for ev in self.events:
            lam[ev.parent] += (ev.size - 1) * ev.rate(z)
        return lam


# --------------------------------------------------------------------------
# evaluation and enumeration


def eval_rate(model: ModelSpec, x, k: Sequence[int], z: Sequence[float], scale: str = "counts") -> float:
    """Rate ``tau_k(x, z)``.

    ``scale="counts"`` takes integer counts in ``Z_K`` and applies the
    capacity guard; ``scale="density"`` takes normalized coordinates in
    ``Z`` (large-population use).  Absent events have rate 0.
    """
    xi = model.type_index(x)
    if len(k) != model.D or len(z) != model.D:
        raise ModelError(f"dimension mismatch: expected vectors of length {model.D}")
    ev = model.event(xi, k)
    if ev is None:
        return 0.0
    if scale == "counts":
        return model.rate_counts(ev, z)
    if scale == "density":
        return ev.rate(z)
    raise ValueError(f"unknown scale {scale!r}")


@dataclass(frozen=True)
class StateIndex:
    """Dense indexing of (a closed subset of) ``S_K = {(x, z): z_x >= 1}``."""

    states: tuple[tuple[int, tuple[int, ...]], ...]

    @cached_property
    def _lookup(self) -> dict:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def types(self) -> np.ndarray:
        return np.fromiter((s[0] for s in self.states), dtype=np.int64, count=len(self.states))

    @cached_property
    def comps(self) -> np.ndarray:
        return np.asarray([s[1] for s in self.states], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.states)

    def index(self, x: int, z: Sequence[int]) -> int:
        try:
            return self._lookup[(int(x), tuple(int(v) for v in z))]
        except KeyError:
            raise ModelError(f"state ({x}, {tuple(z)}) is not in the state index") from None

    def get(self, x: int, z: Sequence[int], default: int = -1) -> int:
        return self._lookup.get((x, tuple(z)), default)

    def state(self, i: int) -> tuple[int, tuple[int, ...]]:
        return self.states[i]


def _state_key(s):
    x, z = s
    return (x, sum(z), tuple(-v for v in z))


def _compositions(D: int, total_max: int):
    """All ``z`` in ``N^D`` with ``|z| <= total_max``."""
    if D == 1:
        for v in range(total_max + 1):
            yield (v,)
        return
    for v in range(total_max + 1):
        for rest in _compositions(D - 1, total_max - v):
            yield (v,) + rest


def reachable_compositions(model: ModelSpec, init: Sequence[int]) -> set[tuple[int, ...]]:
    init = tuple(int(v) for v in init)
    seen = {init}
    stack = [init]
    while stack:
        z = stack.pop()
        for ev in model.events:
            if z[ev.parent] == 0 or model.rate_counts(ev, z) <= 0.0:
                continue
            nz = tuple(z[i] + ev.offspring[i] - (i == ev.parent) for i in range(model.D))
            if nz not in seen:
                seen.add(nz)
                stack.append(nz)
    return seen


def enumerate_states(model: ModelSpec, cap: int = STATE_CAP) -> StateIndex:
    """Enumerate the spine state space.

    Without ``model.init`` this is the whole ``S_K``.  With an initial
    composition it is the subset whose compositions are reachable from it,
    which is closed under the generator.  States are ordered by spine type,
    then population size, then composition in decreasing lexicographic order.
    """
    D, K = model.D, model.K
    if model.init is None:
        n = D * math.comb(K - 1 + D, D)
        if n > cap:
            raise ModelError(f"state space has {n} states, above the cap {cap}")
        comps: Iterable[tuple[int, ...]] = _compositions(D, K)
    else:
        comps = reachable_compositions(model, model.init)
    states = [(x, z) for z in comps for x in range(D) if z[x] >= 1]
    if len(states) > cap:
        raise ModelError(f"state space has {len(states)} states, above the cap {cap}")
    states.sort(key=_state_key)
    return StateIndex(tuple(states))


# --------------------------------------------------------------------------
# validation


def _lattice(D: int, K: int, limit: int = _VALIDATION_POINTS) -> np.ndarray:
    """Points of ``Z_K`` (all of them, or a strided subset when there are too many)."""
    stride = 1
    while math.comb(K // stride + D, D) > limit:
        stride += 1
    grid = range(0, K + 1, stride)
    pts = [z for z in itertools.product(grid, repeat=D) if sum(z) <= K]
    if stride > 1:
        # the capacity shell matters for the guard check; add its axis points
        pts.extend(tuple(K - j if i == d else 0 for i in range(D)) for d in range(D) for j in range(4) if K - j >= 0)
    return np.unique(np.asarray(pts, dtype=np.int64), axis=0)


def validate(model: ModelSpec) -> ModelSpec:
    """Check the invariants of a model; returns it unchanged."""
    D, K = model.D, model.K
    if not isinstance(K, int) or K < 1:
        raise ModelError("capacity K must be a positive integer")
    if model.guard not in GUARD_MODES:
        raise ModelError(f"guard must be one of {GUARD_MODES}")
    seen = set()
    for ev in model.events:
        if not 0 <= ev.parent < D:
            raise ModelError(f"event parent {ev.parent} out of range")
        if len(ev.offspring) != D or any(v < 0 for v in ev.offspring):
            raise ModelError(f"offspring vector {ev.offspring} must have {D} nonnegative entries")
        if ev.rate.dim != D:
            raise ModelError("rate polynomial dimension mismatch")
        key = (ev.parent, ev.offspring)
        if key in seen:
            raise ModelError(f"duplicate event (parent={model.types.names[ev.parent]}, k={ev.offspring})")
        seen.add(key)
    if model.init is not None:
        if len(model.init) != D or any(v < 0 for v in model.init) or sum(model.init) > K:
            raise ModelError(f"init {model.init} is not a composition in Z_K")
    if model.psi.polys is not None and len(model.psi.polys) != D:
        raise ModelError("psi needs one polynomial per type")

    pts = _lattice(D, K)
    zn = pts / K
    tot = pts.sum(axis=1)
    for ev in model.events:
        present = pts[:, ev.parent] >= 1
        vals = ev.rate.evaluate_many(zn)
        over = tot + ev.size - 1 > K
        if model.guard == "none" and np.any(present & over & (np.abs(vals) > 0)):
            raise ModelError(
                f"capacity guard violated: event (parent={model.types.names[ev.parent]}, k={ev.offspring}) "
                f"has nonzero rate where the population would exceed K={K}"
            )
        active = present & ~over
        if np.any(vals[active] < -1e-12):
            raise ModelError(
                f"negative rate for event (parent={model.types.names[ev.parent]}, k={ev.offspring})"
            )
    if model.psi.polys is not None:
        for x, p in enumerate(model.psi.polys):
            vals = p.evaluate_many(zn[pts[:, x] >= 1])
            if np.any(vals <= 0):
                raise ModelError(f"psi must be positive (type {model.types.names[x]})")
    return model


def check_limit_rates(model: ModelSpec, points_per_axis: int | None = None) -> None:
    """Nonnegativity of the raw polynomials on a grid of the continuum ``Z``.

    Finite-K validation only inspects lattice states; large-population
    routines call this before using the rates on ``[0, 1]^D``.
    """
    D = model.D
    if points_per_axis is None:
        points_per_axis = max(3, int(round(_VALIDATION_POINTS ** (1.0 / D))) // 2)
    g = np.linspace(0.0, 1.0, points_per_axis + 1)
    pts = np.asarray([z for z in itertools.product(g, repeat=D) if sum(z) <= 1.0 + 1e-12])
    for ev in model.events:
        present = pts[:, ev.parent] > 0
        if np.any(ev.rate.evaluate_many(pts[present]) < -1e-12):
            raise ModelError(
                f"negative limit rate for event (parent={model.types.names[ev.parent]}, k={ev.offspring}); "
                "this model is only meaningful at finite K"
            )


# --------------------------------------------------------------------------
# presets


def _poly(dim: int, *terms) -> RatePolynomial:
    return RatePolynomial.from_terms(terms, dim)


def _unit(D: int, i: int, scale: int = 1) -> tuple[int, ...]:
    return tuple(scale if j == i else 0 for j in range(D))


def preset_toy(b: float = 1.0, c: float = 2.0) -> ModelSpec:
    """Two particles at most, types A and B.

    A lone A gives birth to a second A at rate b; with two A's each dies at
    rate b or switches to B at rate c; a B switches back to A at rate c.
    Rates vanishing on the wrong states are written as factors
    ``2 z_A - 1`` (normalized), i.e. ``count_A - 1``.
    """
    if not (b > 0 and c > 0):
        raise ModelError("toy model needs b > 0 and c > 0")
    D = 2
    two_a_minus_one = lambda r: _poly(D, ((1, 0), 2.0 * r), ((0, 0), -r))  # noqa: E731
    events = (
        OffspringEvent(0, (2, 0), _poly(D, ((0, 0), b))),
        OffspringEvent(0, (0, 0), two_a_minus_one(b)),
        OffspringEvent(0, (0, 1), two_a_minus_one(c)),
        OffspringEvent(1, (1, 0), _poly(D, ((0, 0), c))),
    )
    return validate(ModelSpec(TypeSpace(("A", "B")), events, 2, PsiWeight(), "indicator", (1, 0), "toy"))


def preset_logistic(b: float = 2.0, d: float = 1.0, K: int = 100) -> ModelSpec:
    """One type, birth at ``b (1 - z)`` and death at ``d``; equilibrium ``1 - d/b``."""
    if b <= 0 or d < 0:
        raise ModelError("logistic preset needs b > 0 and d >= 0")
    events = (
        OffspringEvent(0, (2,), _poly(1, ((0,), b), ((1,), -b))),
        OffspringEvent(0, (0,), _poly(1, ((0,), d))),
    )
    return validate(ModelSpec(TypeSpace(("X",)), events, int(K), name="logistic"))


def preset_yule(beta: float = 1.0, K: int = 100) -> ModelSpec:
    """Pure binary birth at constant rate ``beta`` (capacity-guarded at finite K)."""
    if beta <= 0:
        raise ModelError("yule preset needs beta > 0")
    events = (OffspringEvent(0, (2,), _poly(1, ((0,), beta))),)
    return validate(ModelSpec(TypeSpace(("X",)), events, int(K), name="yule"))


def preset_switch(a: float = 1.0, c: float = 2.0, K: int = 10, density: float = 1.0) -> ModelSpec:
    """Pure type change between A and B, every event has ``|k| = 1``.

    A turns into B at rate ``a (1 + density * z_B)``, B into A at rate ``c``.
    ``density=0`` gives constant rates.
    """
    if a <= 0 or c <= 0 or density < 0:
        raise ModelError("switch preset needs a, c > 0 and density >= 0")
    D = 2
    events = (
        OffspringEvent(0, (0, 1), _poly(D, ((0, 0), a), ((0, 1), a * density))),
        OffspringEvent(1, (1, 0), _poly(D, ((0, 0), c))),
    )
    return validate(ModelSpec(TypeSpace(("A", "B")), events, int(K), name="switch"))


def preset_cycle3(b: float = 2.0, d: float = 1.0, c: float = 1.5, K: int = 20) -> ModelSpec:
    """Three types on a cycle with logistic birth, death and contact conversion.

    Type i gives birth at ``b (1 - |z|)``, dies at ``d`` and converts to
    type i+1 at ``c z_{i+1}``.
    """
    if b <= 0 or d < 0 or c < 0:
        raise ModelError("cycle3 preset needs b > 0, d >= 0, c >= 0")
    D = 3
    events = []
    for i in range(D):
        j = (i + 1) % D
        events.append(OffspringEvent(i, _unit(D, i, 2), _poly(D, ((0, 0, 0), b), *[(_unit(D, m), -b) for m in range(D)])))
        events.append(OffspringEvent(i, (0,) * D, _poly(D, ((0, 0, 0), d))))
        if c > 0:
            events.append(OffspringEvent(i, _unit(D, j), _poly(D, (_unit(D, j), c))))
    return validate(ModelSpec(TypeSpace(("X", "Y", "Z")), tuple(events), int(K), name="cycle3"))


def preset_twotype(ba: float = 3.0, bb: float = 1.5, d: float = 1.0, mu: float = 1.0, K: int = 100) -> ModelSpec:
    """Types A and B with logistic births at ``ba`` and ``bb``, death ``d`` and
    mutation A -> B at rate ``mu``; the branching intensity depends on type."""
    if ba <= 0 or bb <= 0 or d < 0 or mu < 0:
        raise ModelError("twotype preset needs ba, bb > 0 and d, mu >= 0")
    D = 2
    crowd = lambda b: _poly(D, ((0, 0), b), ((1, 0), -b), ((0, 1), -b))  # noqa: E731
    events = [
        OffspringEvent(0, (2, 0), crowd(ba)),
        OffspringEvent(0, (0, 0), _poly(D, ((0, 0), d))),
        OffspringEvent(1, (0, 2), crowd(bb)),
        OffspringEvent(1, (0, 0), _poly(D, ((0, 0), d))),
    ]
    if mu > 0:
        events.append(OffspringEvent(0, (0, 1), _poly(D, ((0, 0), mu))))
    return validate(ModelSpec(TypeSpace(("A", "B")), tuple(events), int(K), name="twotype"))


PRESETS = {
    "toy": (preset_toy, ("b", "c")),
    "logistic": (preset_logistic, ("b", "d", "K")),
    "yule": (preset_yule, ("beta", "K")),
    "switch": (preset_switch, ("a", "c", "K", "density")),
    "cycle3": (preset_cycle3, ("b", "d", "c", "K")),
    "twotype": (preset_twotype, ("ba", "bb", "d", "mu", "K")),
}


def build_preset(name: str, params: Mapping) -> ModelSpec:
    try:
        fn, names = PRESETS[name]
    except KeyError:
        raise ModelError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    unknown = set(params) - set(names) - {"name"}
    if unknown:
        raise ModelError(f"unknown parameters for preset {name!r}: {sorted(unknown)}")
    kwargs = {k: (int(v) if k == "K" else float(v)) for k, v in params.items() if k != "name"}
    try:
        return fn(**kwargs)
    except TypeError as exc:
        raise ModelError(f"bad parameters for preset {name!r}: {exc}") from None


# --------------------------------------------------------------------------
# model files


def _terms(raw, D: int, where: str) -> RatePolynomial:
    if isinstance(raw, (int, float)):
        return RatePolynomial.constant(float(raw), D)
    if not isinstance(raw, list):
        raise ModelError(f"{where}: terms must be a list of [multi-index, coefficient] pairs")
    pairs = []
    for item in raw:
        if not (isinstance(item, list) and len(item) == 2 and isinstance(item[0], list)):
            raise ModelError(f"{where}: bad term {item!r}")
        pairs.append((item[0], float(item[1])))
    return RatePolynomial.from_terms(pairs, D)


def parse_model(text: str) -> ModelSpec:
    """Parse a ``spinal-model v1`` file (TOML body after a header line)."""
    first = next((ln.strip() for ln in text.splitlines() if ln.strip()), "")
    if first.lstrip("#").strip() != HEADER:
        raise ModelError(f"schema: first line must be '# {HEADER}'")
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ModelError(f"schema: {exc}") from None

    if "preset" in doc:
        preset = dict(doc["preset"])
        name = preset.pop("name", None)
        if name is None:
            raise ModelError("schema: [preset] needs a name")
        model = build_preset(name, preset)
        extra = doc.get("model", {})
        if "K" in extra and int(extra["K"]) != model.K:
            model = validate(model.with_capacity(int(extra["K"])))
        return model

    try:
        meta = doc["model"]
        names = tuple(meta["types"])
        K = meta["K"]
    except (KeyError, TypeError):
        raise ModelError("schema: [model] with 'types' and 'K' is required") from None
    if not isinstance(K, int):
        raise ModelError("schema: K must be an integer")
    types = TypeSpace(names)
    D = types.D
    events = []
    for i, raw in enumerate(doc.get("event", [])):
        where = f"event {i}"
        try:
            parent = types.index(raw["parent"])
            k = tuple(int(v) for v in raw["offspring"])
            terms = raw["terms"]
        except KeyError as exc:
            raise ModelError(f"schema: {where} is missing {exc}") from None
        if len(k) != D:
            raise ModelError(f"schema: {where} offspring has length {len(k)}, expected {D}")
        events.append(OffspringEvent(parent, k, _terms(terms, D, where)))
    psi = PsiWeight()
    if "psi" in doc:
        polys = []
        for name in names:
            if name not in doc["psi"]:
                raise ModelError(f"schema: psi is missing type {name!r}")
            polys.append(_terms(doc["psi"][name], D, f"psi[{name}]"))
        psi = PsiWeight(tuple(polys))
    init = meta.get("init")
    model = ModelSpec(
        types,
        tuple(events),
        K,
        psi,
        meta.get("guard", "indicator"),
        tuple(int(v) for v in init) if init is not None else None,
        meta.get("name", ""),
    )
    return validate(model)


def _fmt(v: float) -> str:
    return repr(float(v))


def _fmt_terms(p: RatePolynomial) -> str:
    inner = ", ".join(f"[[{', '.join(str(a) for a in e)}], {_fmt(c)}]" for e, c in p.terms)
    return f"[{inner}]"


def render_model(model: ModelSpec) -> str:
    """Write a model file that :func:`parse_model` reads back to an equal model."""
    lines = [f"# {HEADER}", "[model]"]
    if model.name:
        lines.append(f'name = "{model.name}"')
    lines.append("types = [" + ", ".join(f'"{n}"' for n in model.types.names) + "]")
    lines.append(f"K = {model.K}")
    lines.append(f'guard = "{model.guard}"')
    if model.init is not None:
        lines.append("init = [" + ", ".join(str(v) for v in model.init) + "]")
    for ev in model.events:
        lines += [
            "",
            "[[event]]",
            f'parent = "{model.types.names[ev.parent]}"',
            "offspring = [" + ", ".join(str(v) for v in ev.offspring) + "]",
            f"terms = {_fmt_terms(ev.rate)}",
        ]
    if model.psi.polys is not None:
        lines += ["", "[psi]"]
        for name, p in zip(model.types.names, model.psi.polys):
            lines.append(f'"{name}" = {_fmt_terms(p)}')
    return "\n".join(lines) + "\n"


def load_model(path: str) -> ModelSpec:
    """Read a model file, or build a preset from ``preset:name[:k=v,...]``."""
    if path.startswith("preset:"):
        parts = path.split(":", 2)
        params = {}
        if len(parts) == 3 and parts[2]:
            for kv in parts[2].split(","):
                k, _, v = kv.partition("=")
                params[k.strip()] = v.strip()
        return build_preset(parts[1], params)
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())
