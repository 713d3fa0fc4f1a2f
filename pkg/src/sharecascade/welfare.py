"""Social-welfare functions of the final sharing set, and exhaustive submodularity checks."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .coverage import SubsetFunction
from .topology import Topology


class WelfareFunction(enum.Enum):
    ACTIVE = "active"
    SERVICED = "serviced"
    SUM = "sum"
    MAX = "max"

    @classmethod
    def parse(cls, name) -> WelfareFunction:
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(f"unknown welfare {name!r}; expected active, serviced, sum or max") from None


def evaluate(w, active, T: Topology) -> float:
    """Welfare of the sharer set ``active``.

    Serviced nodes are downloaders ``v`` with some sharer ``u`` such that
    ``P[v, u] > 0`` (a sharer services itself through the diagonal).
    """
    w = WelfareFunction.parse(w)
    idx = sorted(active)
    if w is WelfareFunction.ACTIVE:
        return float(len(idx))
    if not idx:
        return 0.0
    sub = T.P[:, idx]
    if w is WelfareFunction.SERVICED:
        return float((sub > 0).any(axis=1).sum())
    if w is WelfareFunction.SUM:
        return float(sub.sum())
    return float(sub.max(axis=1).sum())


@lru_cache(maxsize=32)
def _layout(T: Topology):
    Psp = sp.csr_matrix(T.P)
    Psp.sort_indices()
    reach = sp.csr_matrix((T.P > 0).astype(float))
    starts = Psp.indptr[:-1][np.diff(Psp.indptr) > 0]
    return Psp, reach, starts, T.P.sum(axis=0)


def evaluate_batch(w, T: Topology, active: np.ndarray, chunk_entries: int = 4_000_000) -> np.ndarray:
    """:func:`evaluate` over a stack of boolean masks of shape (R, n)."""
    w = WelfareFunction.parse(w)
    a = np.atleast_2d(np.asarray(active, dtype=bool))
    if w is WelfareFunction.ACTIVE:
        return a.sum(axis=1).astype(float)
    Psp, reach, starts, colsum = _layout(T)
    af = a.astype(float)
    if w is WelfareFunction.SUM:
        return af @ colsum
    if w is WelfareFunction.SERVICED:
        return ((reach @ af.T) > 0).sum(axis=0).astype(float)
    out = np.zeros(a.shape[0])
    E = Psp.nnz
    if E == 0:
        return out
    per = max(1, chunk_entries // E)
    for lo in range(0, a.shape[0], per):
        vals = af[lo:lo + per][:, Psp.indices] * Psp.data
        out[lo:lo + per] = np.maximum.reduceat(vals, starts, axis=1).sum(axis=1)
    return out


def set_function(w, T: Topology) -> SubsetFunction:
    """Welfare lifted to a function on all subsets of the node set."""
    return SubsetFunction.from_callable(range(T.n), lambda S: evaluate(w, S, T))


@dataclass
class SubmodularityReport:
    monotone: bool
    submodular: bool
    monotone_violations: list = field(default_factory=list)
    submodular_violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.monotone and self.submodular


def is_monotone_submodular(f: SubsetFunction, tolerance: float = 1e-12) -> SubmodularityReport:
    """Exhaustive check over the subset lattice.

    Monotonicity is tested on every covering pair ``S < S+v``. For
    submodularity the marginal gain of each ``v`` must not increase from
    ``S`` to ``S+w``; chaining these covering steps yields the inequality for
    every ``S`` contained in ``T``. Violations are reported as
    ``(S, T, v, excess)`` with sets given as frozensets of universe labels.
    """
    vals = f.values
    k = f.k
    masks = np.arange(1 << k)
    mono, sub = [], []
    for i in range(k):
        bi = 1 << i
        base = masks[(masks & bi) == 0]
        drop = vals[base] - vals[base | bi]
        for S in base[drop > tolerance]:
            mono.append((f.members(int(S)), f.members(int(S | bi)), f.universe[i], float(vals[S] - vals[S | bi])))
        gain = vals[masks | bi] - vals[masks]
        for j in range(k):
            if j == i:
                continue
            bj = 1 << j
            S = masks[((masks & bi) == 0) & ((masks & bj) == 0)]
            excess = gain[S | bj] - gain[S]
            for s in S[excess > tolerance]:
                sub.append((f.members(int(s)), f.members(int(s | bj)), f.universe[i],
                            float(gain[s | bj] - gain[s])))
    return SubmodularityReport(not mono, not sub, mono, sub)
