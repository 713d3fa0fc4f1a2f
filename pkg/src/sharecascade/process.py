"""Iterated simultaneous best-response sharing process.

Every round each inactive, non-Empty node ``u`` compares its private
payment value ``pay[u] = lambda[u] * pi[u]`` with the cost it would
perceive if it joined the current sharers; it starts sharing when the
difference is strictly positive. Sharers never stop, so the active set
grows until a fixpoint.

Two engines are provided. :func:`step` / :func:`run_to_fixpoint` work on a
single run and keep the round structure explicit; :func:`run_batch`
advances many independent replicas at once over the non-zero entries of
``P`` and is what the Monte Carlo code uses.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .topology import Topology


class BehaviorModel(enum.Enum):
    DEMAND = "demand"
    ONE_HOP = "onehop"
    NO_NETWORK = "nonetwork"

    @classmethod
    def parse(cls, name: str | BehaviorModel) -> BehaviorModel:
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("-", "").replace("_", "")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown model {name!r}; expected demand, onehop or nonetwork")


def perceived_utility(model: BehaviorModel, T: Topology, active, u: int, pay_u: float) -> float:
    """Utility of ``u`` for sharing, assuming it joins ``active``.

    Straight transcription of the per-model formulas; terms with zero
    numerator contribute nothing.
    """
    model = BehaviorModel.parse(model)
    P, d = T.P, T.d
    sharers = set(active) | {u}
    cost = 0.0
    for v in range(T.n):
        num = d[v] * P[v, u]
        if num == 0:
            continue
        if model is BehaviorModel.NO_NETWORK:
            cost += num
            continue
        if model is BehaviorModel.ONE_HOP and v != u:
            pool = [w for w in (u, v) if w in sharers]
        else:
            pool = sharers
        cost += num / sum(P[v, w] for w in pool)
    return pay_u - T.c[u] * cost


def perceived_costs(model: BehaviorModel, T: Topology, active: np.ndarray) -> np.ndarray:
    """Perceived sharing cost of every node ``u``, with ``u`` added to ``active``.

    ``active`` is a boolean mask of length n. Vectorised over ``u``.
    """
    model = BehaviorModel.parse(model)
    P, d = T.P, T.d
    a = np.asarray(active, dtype=bool)
    num = d[:, None] * P
    if model is BehaviorModel.NO_NETWORK:
        return T.c * num.sum(axis=0)
    if model is BehaviorModel.DEMAND:
        denom = (P @ a)[:, None] + (~a)[None, :] * P
    else:
        # downloader v != u splits only between u and (if sharing) itself
        denom = P + (a * np.diag(P))[:, None]
        own = P @ a + (~a) * np.diag(P)
        np.fill_diagonal(denom, own)
    terms = np.divide(num, denom, out=np.zeros_like(num), where=num > 0)
    return T.c * terms.sum(axis=0)


@dataclass(frozen=True)
class SharingState:
    active: frozenset
    lam: np.ndarray
    pay: np.ndarray
    round: int = 0

    @classmethod
    def start(cls, pi, lam, active=()) -> SharingState:
        lam = np.asarray(lam, dtype=float)
        if ((lam < 0) | (lam > 1)).any():
            raise ValueError("tradeoff draws must lie in [0, 1]")
        return cls(frozenset(active), lam, lam * np.asarray(pi, dtype=float), 0)


def step(model: BehaviorModel, T: Topology, state: SharingState) -> SharingState:
    mask = np.zeros(T.n, dtype=bool)
    mask[list(state.active)] = True
    cost = perceived_costs(model, T, mask)
    joins = ~T.empty & ~mask & (state.pay > cost)
    active = state.active | frozenset(np.flatnonzero(joins).tolist())
    return replace(state, active=active, round=state.round + 1)


def run_to_fixpoint(model, T: Topology, pi, lam, initial=(), history: list | None = None):
    """Step until the active set stops changing.

    Returns ``(active, rounds)``; ``rounds`` counts every step taken,
    including the final one that confirmed the fixpoint. If ``history`` is
    given, the active set after each round is appended to it.
    """
    state = SharingState.start(pi, lam, initial)
    while True:
        nxt = step(model, T, state)
        if history is not None:
            history.append(nxt.active)
        if nxt.active == state.active:
            return nxt.active, nxt.round
        state = nxt


def sample_run(model, T: Topology, scheme, seed: int) -> frozenset:
    """One replica: lambda ~ U[0,1]^n from ``seed``, payments from ``scheme``."""
    rng = np.random.default_rng(seed)
    lam = rng.random(T.n)
    active, _ = run_to_fixpoint(model, T, scheme.payments(T), lam)
    return active


@lru_cache(maxsize=32)
def _entries(T: Topology):
    v, u = np.nonzero(T.P)
    p = T.P[v, u]
    n, E = T.n, len(p)
    # (n x E) incidence of entry -> sharer, used to sum terms per u
    to_u = sp.csr_matrix((np.ones(E), (u, np.arange(E))), shape=(n, E))
    return v, u, p, T.d[v] * p, to_u, sp.csr_matrix(T.P)


def batch_costs(model: BehaviorModel, T: Topology, a: np.ndarray) -> np.ndarray:
    """:func:`perceived_costs` for a stack of active masks of shape (R, n)."""
    model = BehaviorModel.parse(model)
    if model is BehaviorModel.NO_NETWORK:
        return np.broadcast_to(T.c * (T.d @ T.P), a.shape)
    v, u, p, num, to_u, Psp = _entries(T)
    af = a.astype(float)
    if model is BehaviorModel.DEMAND:
        D = (Psp @ af.T).T
        denom = D[:, v] + (1.0 - af[:, u]) * p
    else:
        diag = np.diag(T.P)
        denom = p + af[:, v] * diag[v]
        own = v == u
        D = (Psp @ af.T).T
        denom[:, own] = D[:, v[own]] + (1.0 - af[:, u[own]]) * p[own]
    terms = num / denom
    return (to_u @ terms.T).T * T.c


def run_batch(model, T: Topology, pay: np.ndarray, empty: np.ndarray | None = None,
              initial: np.ndarray | None = None, chunk_entries: int = 4_000_000):
    """Run R independent replicas to their fixpoints.

    ``pay`` has shape (R, n). ``empty`` (R, n) overrides ``T.empty`` per
    replica; ``initial`` (R, n) marks nodes active from the start (seeds).
    Returns ``(active, rounds)`` with the same round convention as
    :func:`run_to_fixpoint`.
    """
    pay = np.atleast_2d(np.asarray(pay, dtype=float))
    R, n = pay.shape
    empty = np.broadcast_to(T.empty, (R, n)) if empty is None else np.asarray(empty, dtype=bool)
    active = np.zeros((R, n), dtype=bool) if initial is None else np.array(initial, dtype=bool)
    rounds = np.zeros(R, dtype=np.int64)
    per = max(1, chunk_entries // max(1, np.count_nonzero(T.P)))
    for lo in range(0, R, per):
        sl = slice(lo, min(R, lo + per))
        a, r = active[sl], rounds[sl]
        running = np.arange(a.shape[0])
        while running.size:
            cur = a[running]
            cost = batch_costs(model, T, cur)
            joins = ~empty[sl][running] & ~cur & (pay[sl][running] > cost)
            r[running] += 1
            changed = joins.any(axis=1)
            a[running] = cur | joins
            running = running[changed]
    return active, rounds
