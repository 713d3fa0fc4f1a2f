"""Network instances: latency ingestion, grid generation and the quality matrix.

A :class:`Topology` carries the download-quality matrix ``P`` where
``P[v, u]`` is the weight with which downloader ``v`` directs demand to
sharer ``u``, plus per-node demands, costs and Empty flags.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np

NO_LINK = math.inf
MAX_NODES = 20_000


class LatencyFormatError(ValueError):
    """Raised when a latency matrix file is malformed."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class LatencyMatrix:
    """Square latency matrix in milliseconds; ``l[v, u]`` is latency v -> u.

    Missing pairs are stored as ``NO_LINK`` (+inf).
    """

    l: np.ndarray

    def __post_init__(self):
        l = np.asarray(self.l, dtype=float)
        if l.ndim != 2 or l.shape[0] != l.shape[1] or l.shape[0] < 1:
            raise ValueError(f"latency matrix must be square and non-empty, got shape {l.shape}")
        if np.isnan(l).any():
            raise ValueError("latency matrix contains NaN")
        if (l < 0).any():
            raise ValueError("negative latency; use NO_LINK for missing pairs")
        if (np.diag(l) != 0).any():
            bad = int(np.flatnonzero(np.diag(l) != 0)[0])
            raise ValueError(f"diagonal entry {bad} is not 0")
        object.__setattr__(self, "l", _frozen(l))

    @property
    def n(self) -> int:
        return self.l.shape[0]


def _parse_row(tokens: list[str], row: int, n: int) -> list[float]:
    if len(tokens) != n:
        raise LatencyFormatError(f"row {row}: expected {n} entries, found {len(tokens)}")
    values = []
    for col, tok in enumerate(tokens):
        try:
            x = float(tok)
        except ValueError:
            raise LatencyFormatError(f"row {row}, column {col}: not a number: {tok!r}") from None
        if math.isnan(x) or math.isinf(x):
            raise LatencyFormatError(f"row {row}, column {col}: non-finite value {tok!r}")
        if x < 0:
            x = NO_LINK
        if row == col and x != 0:
            raise LatencyFormatError(f"row {row}, column {col}: diagonal must be 0, found {tok!r}")
        values.append(x)
    return values


def load_latency_matrix(source: str | Path | bytes | IO) -> LatencyMatrix:
    """Parse the plain-text matrix format.

    First non-blank line is the node count ``n``; the next ``n`` lines hold
    ``n`` whitespace-separated latencies each. Any negative entry means
    "no link". ``source`` may be a path, raw bytes or an open stream.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return load_latency_matrix(fh)
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    raw = source.read()
    text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise LatencyFormatError("empty input: missing header")
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise LatencyFormatError(f"header: expected integer node count, found {lines[0].strip()!r}") from None
    if n < 1:
        raise LatencyFormatError(f"header: node count must be >= 1, found {n}")
    if n > MAX_NODES:
        raise LatencyFormatError(f"header: node count {n} exceeds limit {MAX_NODES}")
    body = lines[1:]
    if len(body) != n:
        raise LatencyFormatError(f"body: expected {n} rows, found {len(body)}")
    rows = [_parse_row(ln.split(), r, n) for r, ln in enumerate(body)]
    return LatencyMatrix(np.array(rows, dtype=float))


def grid_latency(rows: int, cols: int) -> LatencyMatrix:
    """Manhattan-distance latencies on a ``rows x cols`` lattice (row-major ids)."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if rows * cols > MAX_NODES:
        raise OverflowError(f"grid of {rows * cols} nodes exceeds limit {MAX_NODES}")
    r, c = np.divmod(np.arange(rows * cols), cols)
    l = np.abs(r[:, None] - r[None, :]) + np.abs(c[:, None] - c[None, :])
    return LatencyMatrix(l.astype(float))


def random_latency(n: int, rng: np.random.Generator, scale: float = 10.0) -> LatencyMatrix:
    """Symmetric latencies from uniformly scattered points in a square of side ``scale``."""
    pts = rng.uniform(0.0, scale, size=(n, 2))
    l = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    np.fill_diagonal(l, 0.0)
    return LatencyMatrix(l)


@dataclass(frozen=True, eq=False)
class Topology:
    P: np.ndarray
    d: np.ndarray
    c: np.ndarray
    empty: np.ndarray = field(default=None)
    gamma: float | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        n = P.shape[0]
        if P.ndim != 2 or P.shape != (n, n) or n < 1:
            raise ValueError(f"P must be square, got shape {P.shape}")
        if not ((P >= 0) & (P <= 1)).all():
            raise ValueError("P entries must lie in [0, 1]")
        d = np.broadcast_to(np.asarray(self.d, dtype=float), (n,))
        c = np.broadcast_to(np.asarray(self.c, dtype=float), (n,))
        if (d < 0).any() or (c < 0).any():
            raise ValueError("demands and costs must be non-negative")
        empty = np.zeros(n, dtype=bool) if self.empty is None else np.asarray(self.empty, dtype=bool)
        if empty.shape != (n,):
            raise ValueError("empty flags must have length n")
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "d", _frozen(d))
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "empty", _frozen(empty))

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def with_empty(self, empty) -> Topology:
        return Topology(self.P, self.d, self.c, empty, self.gamma)


def derive_quality(
    L: LatencyMatrix,
    gamma: float,
    demands: Sequence[float] | float | None = None,
    costs: Sequence[float] | float | None = None,
    empty_flags: Sequence[bool] | None = None,
) -> Topology:
    """Threshold latencies at ``gamma`` ms: quality falls linearly to 0 at ``gamma``.

    ``P[v, u]`` uses the latency of the transfer path, i.e. from sharer ``u``
    to downloader ``v`` (``L.l[u, v]``). Demands and costs default to 1.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    with np.errstate(invalid="ignore"):
        P = np.maximum(0.0, 1.0 - L.l.T / gamma)
    P[~np.isfinite(L.l.T)] = 0.0
    np.fill_diagonal(P, 1.0)
    n = L.n
    d = np.ones(n) if demands is None else demands
    c = np.ones(n) if costs is None else costs
    if np.ndim(d) and len(d) != n or np.ndim(c) and len(c) != n:
        raise ValueError("demands and costs must have length n")
    return Topology(P, d, c, empty_flags, float(gamma))


@dataclass(frozen=True)
class NodeDerived:
    degree: np.ndarray
    c_total: np.ndarray


def node_derived(T: Topology) -> NodeDerived:
    """In-quality degree (downloaders able to use ``u``) and worst-case cost ``C_u``."""
    off = (T.P > 0) & ~np.eye(T.n, dtype=bool)
    degree = off.sum(axis=0)
    return NodeDerived(_frozen(degree), _frozen(T.c * T.d.sum()))
