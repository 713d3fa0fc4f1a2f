"""Subset-lattice calculus for coverage processes.

Subsets of a universe of ``k`` elements are bit masks: element ``i``
(0-based) is bit ``i``. Under the recursive canonical ordering (all
subsets of the first ``k-1`` elements, then ``{k}``, then each earlier
subset joined with ``{k}``) the non-empty subset with mask ``m`` sits at
position ``m - 1``, so vectors over non-empty subsets are simply
``values[1:]`` of a mask-indexed array.

An activation function ``f`` is a coverage function when there is a
distribution ``q`` over in-neighbour sets ``T`` with
``f(S) = P(T intersects S)``. ``q`` is recovered from ``f`` with the
closed-form inverse ``B`` of the intersection matrix ``A``.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_DENSE_K = 12
DEFAULT_TOL = 1e-9


class NotCoverageError(ValueError):
    """The recovered in-edge distribution has a negative entry."""


def popcount(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.uint64)
    out = np.zeros(m.shape, dtype=np.int64)
    while m.any():
        out += (m & np.uint64(1)).astype(np.int64)
        m = m >> np.uint64(1)
    return out


def canonical_index(k: int, subset) -> int:
    """Position of a non-empty ``subset`` of ``{1..k}`` in canonical order."""
    subset = frozenset(subset)
    if not subset:
        raise ValueError("canonical order covers non-empty subsets only")
    if min(subset) < 1 or max(subset) > k:
        raise ValueError(f"subset {sorted(subset)} not within 1..{k}")
    if k not in subset:
        return canonical_index(k - 1, subset)
    half = (1 << (k - 1)) - 1
    if subset == {k}:
        return half
    return half + 1 + canonical_index(k - 1, subset - {k})


def canonical_subset(k: int, position: int) -> frozenset:
    """Inverse of :func:`canonical_index`."""
    size = (1 << k) - 1
    if not 0 <= position < size:
        raise ValueError(f"position {position} out of range for k={k}")
    half = (1 << (k - 1)) - 1
    if position < half:
        return canonical_subset(k - 1, position)
    if position == half:
        return frozenset({k})
    return canonical_subset(k - 1, position - half - 1) | {k}


def _check_dense(k: int) -> int:
    if not 1 <= k <= MAX_DENSE_K:
        raise OverflowError(f"dense lattice matrices need 1 <= k <= {MAX_DENSE_K}, got {k}")
    return (1 << k) - 1


def incidence_matrix(k: int) -> np.ndarray:
    """``A[S, T] = 1`` iff ``S`` and ``T`` intersect, rows/cols in canonical order."""
    size = _check_dense(k)
    m = np.arange(1, size + 1)
    return ((m[:, None] & m[None, :]) != 0).astype(np.int64)


def inverse_incidence(k: int) -> np.ndarray:
    """Closed-form inverse of :func:`incidence_matrix`.

    ``B[S, T]`` is 0 unless ``S | T`` is the whole universe, in which case
    it is ``(-1) ** (|S & T| + 1)``.
    """
    size = _check_dense(k)
    m = np.arange(1, size + 1)
    union = m[:, None] | m[None, :]
    sign = np.where(popcount(m[:, None] & m[None, :]) % 2 == 0, -1, 1)
    return np.where(union == size, sign, 0).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SubsetFunction:
    """Real values over every subset of ``universe``, indexed by bit mask."""

    universe: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "universe", tuple(self.universe))
        if vals.shape != (1 << len(self.universe),):
            raise ValueError(f"expected {1 << len(self.universe)} values, got {vals.shape}")
        if not np.isfinite(vals).all():
            raise ValueError("subset function values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, universe: Sequence, fn) -> SubsetFunction:
        universe = tuple(universe)
        vals = [fn(frozenset(x for i, x in enumerate(universe) if m >> i & 1))
                for m in range(1 << len(universe))]
        return cls(universe, np.array(vals, dtype=float))

    @property
    def k(self) -> int:
        return len(self.universe)

    @property
    def full(self) -> int:
        return (1 << self.k) - 1

    def mask(self, subset) -> int:
        pos = {x: i for i, x in enumerate(self.universe)}
        m = 0
        for x in subset:
            m |= 1 << pos[x]
        return m

    def members(self, mask: int) -> frozenset:
        return frozenset(x for i, x in enumerate(self.universe) if mask >> i & 1)

    def __call__(self, subset) -> float:
        return float(self.values[self.mask(subset)])

    def nonempty(self) -> np.ndarray:
        """Values over non-empty subsets in canonical order."""
        return self.values[1:]


def discrete_derivative(f: SubsetFunction, T: int, W: int) -> float:
    """Signed inclusion-exclusion sum over subsets ``S`` of ``T`` of ``f(W | S)``."""
    total = 0.0
    S = T
    while True:
        sign = -1.0 if (bin(T).count("1") - bin(S).count("1")) % 2 else 1.0
        total += sign * f.values[W | S]
        if S == 0:
            return total
        S = (S - 1) & T


def discrete_derivative_recursive(f: SubsetFunction, T: int, W: int) -> float:
    """Derivative by peeling one element off ``T`` at a time."""
    if T == 0:
        return float(f.values[W])
    v = T & -T
    R = T ^ v
    return discrete_derivative_recursive(f, R, W | v) - discrete_derivative_recursive(f, R, W)


def complement_derivatives(f: SubsetFunction) -> np.ndarray:
    """``D[T] = d_T f(complement of T)`` for every mask ``T``, in O(k 2^k).

    Expanding the derivative gives a signed sum of ``f(W)`` over supersets
    ``W`` of the complement, so one superset-sum pass computes all of them.
    """
    k = f.k
    m = np.arange(1 << k)
    acc = np.where((k - popcount(m)) % 2 == 0, 1.0, -1.0) * f.values
    for i in range(k):
        bit = 1 << i
        lo = m[(m & bit) == 0]
        acc[lo] += acc[lo | bit]
    return acc[f.full ^ m]


@dataclass
class CoverageReport:
    passed: bool
    violations: list = field(default_factory=list)

    @property
    def signs_ok(self) -> bool:
        """True when only the ``f(empty) = 0`` condition is breached (or nothing)."""
        return all(v[2] == "spontaneous" for v in self.violations)

    def summary(self) -> str:
        if self.passed:
            return "pass"
        kinds = sorted({v[2] for v in self.violations})
        return f"fail ({len(self.violations)} violations: {', '.join(kinds)})"


def check_coverage_conditions(f: SubsetFunction, tolerance: float = DEFAULT_TOL) -> CoverageReport:
    """Test the derivative sign pattern that characterises coverage functions.

    For every ``T``: ``d_T f(complement T)`` must be >= 0 when ``|T|`` is odd
    or ``T`` is empty, and <= 0 when ``|T|`` is even and positive. A
    non-zero ``f(empty)`` is reported separately as ``"spontaneous"``.
    Violations are ``(T_mask, value, kind)`` tuples.
    """
    D = complement_derivatives(f)
    sizes = popcount(np.arange(1 << f.k))
    violations = []
    if abs(f.values[0]) > tolerance:
        violations.append((0, float(f.values[0]), "spontaneous"))
    for T in range(1 << f.k):
        val = float(D[T])
        if T == 0 or sizes[T] % 2:
            if val < -tolerance:
                violations.append((T, val, "odd-negative" if T else "empty-negative"))
        elif val > tolerance:
            violations.append((T, val, "even-positive"))
    return CoverageReport(not violations, violations)


@dataclass(frozen=True, eq=False)
class EdgeDistribution:
    """Probability ``q[T]`` that the in-neighbour set is exactly ``T`` (mask over universe)."""

    universe: tuple
    q: np.ndarray

    @property
    def k(self) -> int:
        return len(self.universe)

    def global_masks(self) -> np.ndarray:
        """Mask over global node ids for every local mask."""
        m = np.arange(1 << self.k)
        out = np.zeros(1 << self.k, dtype=np.int64)
        for i, node in enumerate(self.universe):
            out[(m >> i) & 1 == 1] |= 1 << int(node)
        return out

    def support(self):
        """``(global_mask, probability)`` pairs with positive probability."""
        g = self.global_masks()
        return [(int(g[m]), float(p)) for m, p in enumerate(self.q) if p > 0]


def edge_distribution(f: SubsetFunction, tolerance: float = DEFAULT_TOL) -> EdgeDistribution:
    """Solve ``A q = f`` over non-empty subsets with the closed-form ``B``.

    ``q[empty]`` takes the remaining mass ``1 - f(full)``. Entries smaller
    than ``tolerance`` in magnitude are clamped to 0.
    """
    if f.k == 0:
        return EdgeDistribution((), np.array([1.0]))
    q = np.empty(1 << f.k)
    q[1:] = inverse_incidence(f.k) @ f.nonempty()
    q[0] = 1.0 - f.values[f.full]
    q[np.abs(q) < tolerance] = 0.0
    if (q < 0).any():
        worst = int(np.argmin(q))
        raise NotCoverageError(f"q[{sorted(f.members(worst))}] = {q[worst]:.3g} < 0: not a coverage process")
    return EdgeDistribution(f.universe, q)


def sample_graph(dists: Sequence[EdgeDistribution | None], rng: np.random.Generator) -> list[frozenset]:
    """Draw each node's in-neighbour set independently; ``None`` means no in-edges."""
    graph = []
    for dist in dists:
        if dist is None:
            graph.append(frozenset())
            continue
        m = int(rng.choice(len(dist.q), p=dist.q / dist.q.sum()))
        graph.append(frozenset(x for i, x in enumerate(dist.universe) if m >> i & 1))
    return graph


def sample_in_masks(dists: Sequence[EdgeDistribution | None], size: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`sample_graph`: (size, n) array of global in-neighbour masks."""
    n = len(dists)
    out = np.zeros((size, n), dtype=np.int64)
    for u, dist in enumerate(dists):
        if dist is None:
            continue
        cdf = np.cumsum(dist.q)
        cdf /= cdf[-1]
        local = np.searchsorted(cdf, rng.random(size), side="right")
        out[:, u] = dist.global_masks()[np.minimum(local, len(cdf) - 1)]
    return out


def reachable(graph: Sequence[frozenset], S) -> frozenset:
    """Breadth-first closure of ``S`` along edges ``src -> u`` for ``src`` in ``graph[u]``."""
    out_edges = [[] for _ in graph]
    for u, sources in enumerate(graph):
        for src in sources:
            out_edges[src].append(u)
    seen = set(S)
    queue = deque(seen)
    while queue:
        x = queue.popleft()
        for y in out_edges[x]:
            if y not in seen:
                seen.add(y)
                queue.append(y)
    return frozenset(seen)


def reachable_masks(in_masks: np.ndarray, seed_mask: int) -> np.ndarray:
    """Reachable set (as a mask) for each row of sampled in-neighbour masks."""
    size, n = in_masks.shape
    reached = np.full(size, seed_mask, dtype=np.int64)
    while True:
        hit = (in_masks & reached[:, None]) != 0
        new = reached | (hit.astype(np.int64) << np.arange(n, dtype=np.int64)).sum(axis=1)
        if (new == reached).all():
            return reached
        reached = new


def _closure(in_masks: Sequence[int], seed: int) -> int:
    reached = seed
    while True:
        new = reached
        for u, m in enumerate(in_masks):
            if m & reached:
                new |= 1 << u
        if new == reached:
            return reached
        reached = new


def mask_to_set(mask: int) -> frozenset:
    return frozenset(i for i in range(mask.bit_length()) if mask >> i & 1)


def exact_final_distribution(dists: Sequence[EdgeDistribution | None], S,
                             cap: int = 10**7) -> dict[frozenset, float]:
    """Brute-force distribution of the reachable set over all in-edge configurations."""
    supports = [[(0, 1.0)] if d is None else d.support() for d in dists]
    configs = 1
    for s in supports:
        configs *= len(s)
    if configs > cap:
        raise OverflowError(f"{configs} configurations exceed cap {cap}; use Monte Carlo sampling")
    seed = 0
    for s in S:
        seed |= 1 << int(s)
    acc: dict[int, float] = {}
    for combo in itertools.product(*supports):
        prob = 1.0
        for _, p in combo:
            prob *= p
        final = _closure([m for m, _ in combo], seed)
        acc[final] = acc.get(final, 0.0) + prob
    return {mask_to_set(m): p for m, p in acc.items()}
