"""Seed Set Model: threshold recasting, spread estimation, greedy seeding, hardness gadget.

With the offer fixed at ``pi_u = C_u`` a node's payment value is uniform on
``[0, C_u]``, so writing ``theta_u = 1 - pay_u / C_u`` the node joins the
sharer set ``S`` exactly when ``theta_u < f_u(S)``, where ``f_u(S)`` is one
minus the node's perceived cost as a fraction of ``C_u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple, Sequence

import numpy as np

from . import coverage
from .coverage import EdgeDistribution, SubsetFunction
from .process import BehaviorModel, batch_costs, run_batch, run_to_fixpoint
from .topology import MAX_NODES, Topology, node_derived
from .welfare import WelfareFunction, evaluate_batch

MAX_TABLE_K = 20


class DegenerateNodeError(ValueError):
    """Node has ``C_u = 0``: it faces no demand and shares for any positive payment."""


@dataclass(frozen=True, eq=False)
class SeedActivation:
    node: int
    C: float
    f: SubsetFunction

    def threshold(self, pay: float) -> float:
        return 1.0 - pay / self.C


def activation_function(T: Topology, u: int) -> SeedActivation:
    """Tabulate ``f_u`` over all subsets of the other nodes."""
    C = float(node_derived(T).c_total[u])
    if C <= 0:
        raise DegenerateNodeError(f"node {u} has C_u = 0")
    universe = tuple(x for x in range(T.n) if x != u)
    k = len(universe)
    if k > MAX_TABLE_K:
        raise OverflowError(f"activation table over {k} nodes exceeds limit {MAX_TABLE_K}")
    m = np.arange(1 << k)
    bits = ((m[:, None] >> np.arange(k)) & 1).astype(float)
    Pu = T.P[:, list(universe)]
    denom = bits @ Pu.T + T.P[:, u]
    num = T.d * T.P[:, u]
    terms = np.divide(num, denom, out=np.zeros_like(denom), where=num > 0)
    values = 1.0 - T.c[u] / C * terms.sum(axis=1)
    return SeedActivation(u, C, SubsetFunction(universe, values))


def activation_table(T: Topology) -> np.ndarray:
    """``F[u, G]`` = probability that ``u`` joins when exactly mask ``G`` shares.

    Computed straight from the process cost; Empty and ``C_u = 0`` nodes
    never join (their payment value is 0).
    """
    n = T.n
    if n > MAX_TABLE_K:
        raise OverflowError(f"{n} nodes exceeds exact-table limit {MAX_TABLE_K}")
    C = node_derived(T).c_total
    F = np.zeros((n, 1 << n))
    ok = (C > 0) & ~T.empty
    step = 1 << 12
    for lo in range(0, 1 << n, step):
        G = np.arange(lo, min(1 << n, lo + step))
        masks = (G[:, None] >> np.arange(n)) & 1 == 1
        cost = batch_costs(BehaviorModel.DEMAND, T, masks)
        F[ok, lo:lo + len(G)] = 1.0 - cost[:, ok].T / C[ok, None]
    return np.clip(F, 0.0, 1.0)


def _mask(nodes) -> int:
    m = 0
    for x in nodes:
        m |= 1 << int(x)
    return m


def exact_seed_distribution(T: Topology, S, table: np.ndarray | None = None) -> dict[frozenset, float]:
    """Exact law of the final sharer set from seeds ``S``, by dynamic programming over subsets.

    The final set is ``F`` exactly when every node of ``F`` gets reached
    using sharers inside ``F`` and every node outside ``F`` stays out given
    ``F``. Writing ``R(F)`` for the first probability,
    ``sum over S <= G <= F of R(G) * prod_{u in F-G} (1 - f_u(G)) = 1``,
    which determines ``R`` recursively. Needs only independent uniform
    thresholds, not the coverage property, so it checks the graph-based
    engine independently. Cost O(3^n).
    """
    F_tab = activation_table(T) if table is None else table
    n = T.n
    seed = _mask(S)
    free = [u for u in range(n) if not seed >> u & 1]
    miss = 1.0 - F_tab
    R: dict[int, float] = {}
    out: dict[frozenset, float] = {}
    # supersets of the seed in order of increasing size
    for size in range(len(free) + 1):
        for extra in combinations(free, size):
            Fm = seed | _mask(extra)
            r = 1.0
            sub = _mask(extra)
            while sub:
                sub = (sub - 1) & _mask(extra)
                G = seed | sub
                stay = 1.0
                for u in extra:
                    if not G >> u & 1:
                        stay *= miss[u, G]
                r -= R[G] * stay
            R[Fm] = r
            outside = 1.0
            for u in free:
                if not Fm >> u & 1:
                    outside *= miss[u, Fm]
            p = r * outside
            if p > 0:
                out[coverage.mask_to_set(Fm)] = p
    return out


def exact_expected_welfare(T: Topology, S, welfare="active", table=None) -> float:
    dist = exact_seed_distribution(T, S, table)
    w = WelfareFunction.parse(welfare)
    sets = list(dist)
    masks = np.zeros((len(sets), T.n), dtype=bool)
    for i, F in enumerate(sets):
        masks[i, list(F)] = True
    return float(np.dot([dist[F] for F in sets], evaluate_batch(w, T, masks)))


def seed_edge_distributions(T: Topology, tolerance: float = coverage.DEFAULT_TOL) -> list[EdgeDistribution | None]:
    """In-edge distribution of every node for the equivalent random-graph model.

    Nodes that can never join (``C_u = 0`` or Empty) get ``None``.
    """
    dists = []
    C = node_derived(T).c_total
    for u in range(T.n):
        if C[u] <= 0 or T.empty[u]:
            dists.append(None)
            continue
        f = activation_function(T, u).f
        if abs(f.values[0]) > tolerance:
            raise coverage.NotCoverageError(
                f"node {u} activates spontaneously (f_u(empty) = {f.values[0]:.3g}); "
                "some downloader with demand cannot reach it")
        dists.append(coverage.edge_distribution(f, tolerance))
    return dists


def seed_payments(T: Topology) -> np.ndarray:
    return node_derived(T).c_total.copy()


def simulate_seedset(T: Topology, S, rng: np.random.Generator) -> frozenset:
    """One run of the Seed Set process; seeds are active from the start."""
    theta = rng.random(T.n)
    active, _ = run_to_fixpoint(BehaviorModel.DEMAND, T, seed_payments(T), 1.0 - theta, initial=S)
    return active


def threshold_batch(T: Topology, S, theta: np.ndarray) -> np.ndarray:
    """Final sharer masks for a (R, n) stack of thresholds."""
    theta = np.atleast_2d(theta)
    init = np.zeros(theta.shape, dtype=bool)
    init[:, list(S)] = True
    active, _ = run_batch(BehaviorModel.DEMAND, T, seed_payments(T) * (1.0 - theta), initial=init)
    return active


def coverage_batch(T: Topology, S, size: int, rng: np.random.Generator, dists=None) -> np.ndarray:
    """Final sharer masks drawn through random in-edge sets and reachability."""
    dists = seed_edge_distributions(T) if dists is None else dists
    reached = coverage.reachable_masks(coverage.sample_in_masks(dists, size, rng), _mask(S))
    return ((reached[:, None] >> np.arange(T.n)) & 1).astype(bool)


class Estimate(NamedTuple):
    mean: float
    stderr: float


def _estimate(values: np.ndarray) -> Estimate:
    se = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return Estimate(float(values.mean()), se)


def expected_welfare_estimate(T: Topology, S, welfare="active", samples: int = 1000,
                              rng: np.random.Generator | None = None, engine: str = "threshold") -> Estimate:
    """Monte Carlo mean and standard error of welfare of the final sharer set."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    if engine == "threshold":
        finals = threshold_batch(T, S, rng.random((samples, T.n)))
    elif engine == "coverage":
        finals = coverage_batch(T, S, samples, rng)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return _estimate(evaluate_batch(welfare, T, finals))


def greedy_seed(T: Topology, k: int, welfare="active", samples: int = 1000, seed: int = 0,
                estimator: str = "mc") -> list[int]:
    """Pick ``k`` seeds one at a time by largest estimated marginal gain.

    With ``estimator="mc"`` each round draws one threshold matrix and scores
    every candidate on it (common random numbers). ``"exact"`` uses
    :func:`exact_expected_welfare`. Ties go to the lowest node id.
    """
    if not 0 <= k <= T.n:
        raise ValueError(f"k must be in [0, {T.n}]")
    rng = np.random.default_rng(seed)
    table = activation_table(T) if estimator == "exact" else None
    chosen: list[int] = []
    for _ in range(k):
        theta = rng.random((samples, T.n)) if estimator == "mc" else None
        best, best_val = None, -np.inf
        for x in range(T.n):
            if x in chosen:
                continue
            cand = chosen + [x]
            if estimator == "exact":
                val = exact_expected_welfare(T, cand, welfare, table)
            else:
                val = float(evaluate_batch(welfare, T, threshold_batch(T, cand, theta)).mean())
            if val > best_val:
                best, best_val = x, val
        chosen.append(best)
    return chosen


class InitialActivation(NamedTuple):
    probability: float
    in_regime: bool


def initial_activation_probability(C_u: float, pi_u: float) -> InitialActivation:
    """Probability that a node joins with no sharers around, ``1 - C_u / pi_u``.

    Offers below ``C_u`` are outside the modelled regime and give 0.
    """
    if C_u <= 0:
        raise ValueError("C_u must be positive")
    if pi_u < C_u:
        return InitialActivation(0.0, False)
    return InitialActivation(1.0 - C_u / pi_u, True)


# Vertex-cover hardness gadget ---------------------------------------------

GADGET_PAY = {"node": 0.0, "primary": 3.5, "secondary": 0.0}
GADGET_DEMAND = {"node": 0.0, "primary": 2.0, "secondary": 2.0, "bulk": 0.0}


@dataclass(frozen=True, eq=False)
class GadgetInstance:
    topology: Topology
    pay: np.ndarray
    labels: list
    layers: dict
    edges: list
    N: int
    M: int
    r: int

    def node_seed(self, vertices) -> list[int]:
        return [self.layers["node"][v] for v in vertices]


def read_edge_list(source) -> list[tuple[int, int]]:
    """Lines ``u v`` with 0-based ids; blank lines and ``#`` comments skipped."""
    with open(source) as fh:
        text = fh.read()
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'u v', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return edges


def vertex_cover_gadget(edges: Sequence[tuple[int, int]], r: int, n_vertices: int | None = None) -> GadgetInstance:
    """Best-seed instance whose good seed sets correspond to vertex covers of ``edges``.

    Layers: one node ``w_u`` per vertex, ``x_e`` and ``x'_e`` per edge, and
    ``M**r`` bulk nodes. ``x'_e`` downloads from ``x_e`` and every bulk
    node, ``x_e`` downloads from itself and the ``w`` of its endpoints. All
    other qualities are 0, including the remaining diagonal. Costs are 1;
    payments are fixed (no tradeoff draw).
    """
    edges = [tuple(sorted((int(a), int(b)))) for a, b in edges]
    if any(a == b for a, b in edges) or len(set(edges)) != len(edges):
        raise ValueError("source graph must be simple")
    if r < 1:
        raise ValueError("r must be >= 1")
    N = n_vertices if n_vertices is not None else (max(max(e) for e in edges) + 1 if edges else 0)
    M = len(edges)
    used = {x for e in edges for x in e}
    if N == 0 or used != set(range(N)):
        raise ValueError("source graph must be non-empty with no isolated vertices")
    if M < N / 2:
        raise ValueError("need M >= N/2")
    bulk = M ** r
    n = N + 2 * M + bulk
    if n > MAX_NODES:
        raise OverflowError(f"gadget with {n} nodes exceeds limit {MAX_NODES}")
    layers = {
        "node": list(range(N)),
        "primary": list(range(N, N + M)),
        "secondary": list(range(N + M, N + 2 * M)),
        "bulk": list(range(N + 2 * M, n)),
    }
    P = np.zeros((n, n))
    for i, (a, b) in enumerate(edges):
        x, xs = layers["primary"][i], layers["secondary"][i]
        P[x, x] = 1.0
        P[xs, layers["bulk"]] = 1.0
        P[xs, x] = 1.0
        P[x, layers["node"][a]] = 1.0
        P[x, layers["node"][b]] = 1.0
    d = np.zeros(n)
    pay = np.zeros(n)
    for name, ids in layers.items():
        d[ids] = GADGET_DEMAND[name]
        pay[ids] = GADGET_PAY.get(name, M + 0.5)
    labels = ([f"w{u}" for u in range(N)] + [f"x{a}-{b}" for a, b in edges]
              + [f"x'{a}-{b}" for a, b in edges] + [f"y{i}" for i in range(bulk)])
    T = Topology(P, d, np.ones(n))
    return GadgetInstance(T, pay, labels, layers, edges, N, M, r)


@dataclass
class GadgetTrace:
    seeds: list
    rounds: list = field(default_factory=list)
    final: frozenset = frozenset()

    @property
    def final_count(self) -> int:
        return len(self.final)


def run_gadget(g: GadgetInstance, seeds) -> GadgetTrace:
    """Deterministic activation from ``seeds`` (global ids) with the fixed payments."""
    history: list = []
    final, _ = run_to_fixpoint(BehaviorModel.DEMAND, g.topology, g.pay, np.ones(g.topology.n),
                               initial=seeds, history=history)
    trace = GadgetTrace(sorted(seeds), final=final)
    prev = frozenset(seeds)
    for act in history:
        trace.rounds.append(sorted(act - prev))
        prev = act
    return trace


def is_vertex_cover(edges, vertices) -> bool:
    vs = set(vertices)
    return all(a in vs or b in vs for a, b in edges)
