"""Payment-scheme sweeps, model comparisons and latency-threshold studies.

Random draws come in fixed-size blocks of replicas, each block seeded by
``(master seed, block index)``. The same replica therefore sees the same
tradeoff factors and Empty nodes in every cell, model and threshold of an
experiment (common random numbers), and results do not depend on how
blocks are spread over workers.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .process import BehaviorModel, run_batch
from .topology import LatencyMatrix, Topology, derive_quality, grid_latency, load_latency_matrix, node_derived
from .welfare import WelfareFunction, evaluate_batch

BLOCK = 1024


@dataclass(frozen=True)
class DegreePower:
    """Offer ``alpha * degree ** beta`` (with ``0 ** 0 == 1``)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")

    def payments(self, T: Topology) -> np.ndarray:
        deg = node_derived(T).degree.astype(float)
        return self.alpha * deg ** self.beta


@dataclass(frozen=True)
class Explicit:
    pi: tuple

    def payments(self, T: Topology) -> np.ndarray:
        pi = np.asarray(self.pi, dtype=float)
        if pi.shape != (T.n,) or (pi < 0).any():
            raise ValueError("explicit payments must be n non-negative values")
        return pi


PaymentScheme = DegreePower | Explicit


@dataclass
class ExperimentConfig:
    topology: str = "grid"
    rows: int = 10
    cols: int = 10
    latency: str | None = None
    gamma: float = 2.0
    model: str = "demand"
    alpha: list = field(default_factory=lambda: [1.0])
    beta: list = field(default_factory=lambda: [1.0])
    replicas: int = 1000
    seed: int = 0
    empty_fraction: float = 0.0
    welfare: list = field(default_factory=lambda: ["active", "serviced", "sum", "max"])
    demands: list | float | None = None
    costs: list | float | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.topology not in ("grid", "file"):
            raise ValueError(f"topology must be 'grid' or 'file', got {self.topology!r}")
        if self.topology == "file" and not self.latency:
            raise ValueError("topology 'file' needs a latency path")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if not 0.0 <= self.empty_fraction <= 1.0:
            raise ValueError("empty_fraction must lie in [0, 1]")
        BehaviorModel.parse(self.model)
        for w in self.welfare:
            WelfareFunction.parse(w)
        self.alpha = [float(a) for a in np.atleast_1d(self.alpha)]
        self.beta = [float(b) for b in np.atleast_1d(self.beta)]

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def latency_matrix(self) -> LatencyMatrix:
        if self.topology == "file":
            return load_latency_matrix(self.latency)
        return grid_latency(self.rows, self.cols)

    def build(self, gamma: float | None = None, L: LatencyMatrix | None = None) -> Topology:
        L = self.latency_matrix() if L is None else L
        return derive_quality(L, self.gamma if gamma is None else gamma, self.demands, self.costs)


@dataclass
class ExperimentRecord:
    gamma: float
    model: str
    alpha: float
    beta: float
    replicas: int
    frac_active: float
    frac_active_se: float
    frac_serviced: float
    frac_serviced_se: float
    total_payment: float
    payment_per_active: float
    payment_per_serviced: float
    sum_welfare: float
    max_welfare: float
    empty_fraction: float
    degenerate_flag: int


COLUMNS = [f.name for f in fields(ExperimentRecord)]


def draw_block(seed: int, block: int, size: int, n: int, empty_fraction: float):
    """Empty-node masks and tradeoff factors for one block of replicas."""
    rng = np.random.default_rng([seed, block])
    m = int(round(empty_fraction * n))
    empty = np.zeros((size, n), dtype=bool)
    if m:
        order = np.argsort(rng.random((size, n)), axis=1)[:, :m]
        np.put_along_axis(empty, order, True, axis=1)
    lam = rng.random((size, n))
    return empty, lam


def _block_metrics(args):
    T, model, pi, seed, block, size, empty_fraction = args
    empty, lam = draw_block(seed, block, size, T.n, empty_fraction)
    active, rounds = run_batch(model, T, lam * pi, empty=empty)
    return {
        "active": evaluate_batch(WelfareFunction.ACTIVE, T, active),
        "serviced": evaluate_batch(WelfareFunction.SERVICED, T, active),
        "sum": evaluate_batch(WelfareFunction.SUM, T, active),
        "max": evaluate_batch(WelfareFunction.MAX, T, active),
        "payment": active.astype(float) @ pi,
        "rounds": rounds,
    }


def replica_metrics(T: Topology, model, pi, replicas: int, seed: int = 0,
                    empty_fraction: float = 0.0, workers: int | None = None) -> dict[str, np.ndarray]:
    """Per-replica metric arrays (welfare values, payment, rounds) in replica order."""
    model = BehaviorModel.parse(model)
    pi = np.asarray(pi, dtype=float)
    jobs = [(T, model, pi, seed, b, min(BLOCK, replicas - b * BLOCK), empty_fraction)
            for b in range(-(-replicas // BLOCK))]
    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block_metrics, jobs))
    else:
        parts = [_block_metrics(j) for j in jobs]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if len(x) < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


def _ratio(total: np.ndarray, count: np.ndarray) -> tuple[float, bool]:
    ok = count > 0
    if not ok.any():
        return 0.0, True
    return float((total[ok] / count[ok]).mean()), False


def summarize(metrics: dict, T: Topology, *, gamma, model, alpha, beta, empty_fraction) -> ExperimentRecord:
    n = T.n
    fa, fa_se = _mean_se(metrics["active"] / n)
    fs, fs_se = _mean_se(metrics["serviced"] / n)
    per_active, none_active = _ratio(metrics["payment"], metrics["active"])
    per_serviced, _ = _ratio(metrics["payment"], metrics["serviced"])
    return ExperimentRecord(
        gamma=float(gamma), model=BehaviorModel.parse(model).value, alpha=float(alpha), beta=float(beta),
        replicas=len(metrics["active"]), frac_active=fa, frac_active_se=fa_se,
        frac_serviced=fs, frac_serviced_se=fs_se, total_payment=float(metrics["payment"].mean()),
        payment_per_active=per_active, payment_per_serviced=per_serviced,
        sum_welfare=float(metrics["sum"].mean()), max_welfare=float(metrics["max"].mean()),
        empty_fraction=float(empty_fraction), degenerate_flag=int(none_active),
    )


def run_cell(config: ExperimentConfig, alpha: float, beta: float, T: Topology | None = None,
             model=None) -> ExperimentRecord:
    T = config.build() if T is None else T
    model = config.model if model is None else model
    pi = DegreePower(alpha, beta).payments(T)
    metrics = replica_metrics(T, model, pi, config.replicas, config.seed, config.empty_fraction, config.workers)
    gamma = T.gamma if T.gamma is not None else config.gamma
    return summarize(metrics, T, gamma=gamma, model=model, alpha=alpha, beta=beta,
                     empty_fraction=config.empty_fraction)


def sweep(config: ExperimentConfig, T: Topology | None = None, model=None) -> list[ExperimentRecord]:
    """Every (alpha, beta) cell, alpha-major."""
    if not config.alpha or not config.beta:
        raise ValueError("alpha and beta grids must be non-empty")
    T = config.build() if T is None else T
    return [run_cell(config, a, b, T, model) for a in config.alpha for b in config.beta]


@dataclass
class ModelComparison:
    records: dict
    gaps: list

    def all_records(self) -> list[ExperimentRecord]:
        return [r for recs in self.records.values() for r in recs]


def compare_models(config: ExperimentConfig, alphas=None, beta: float = 1.0,
                   T: Topology | None = None) -> ModelComparison:
    """All three models on identical draws; ``gaps`` holds Demand minus No-Network active fraction."""
    T = config.build() if T is None else T
    alphas = config.alpha if alphas is None else alphas
    records = {m.value: [run_cell(config, a, beta, T, m) for a in alphas] for m in BehaviorModel}
    gaps = [d.frac_active - nn.frac_active
            for d, nn in zip(records["demand"], records["nonetwork"])]
    return ModelComparison(records, gaps)


@dataclass
class ThresholdRow:
    gamma: float
    average_degree: float
    records: list


def threshold_study(config: ExperimentConfig, gammas) -> list[ThresholdRow]:
    L = config.latency_matrix()
    rows = []
    for g in gammas:
        if not g > 0:
            raise ValueError("gamma values must be positive")
        T = config.build(g, L)
        rows.append(ThresholdRow(float(g), float(node_derived(T).degree.mean()), sweep(config, T)))
    return rows


def write_records(records, fmt: str = "csv", sink=None) -> str:
    """Serialise records; writes to ``sink`` (path or text stream) if given and returns the text."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in records:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps([asdict(r) for r in records], indent=2) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    elif sink is not None:
        sink.write(text)
    return text


def read_records(text: str, fmt: str = "csv") -> list[ExperimentRecord]:
    if fmt == "json":
        return [ExperimentRecord(**row) for row in json.loads(text)]
    types = {f.name: f.type for f in fields(ExperimentRecord)}
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        conv = {k: (row[k] if types[k] == "str" else int(row[k]) if types[k] == "int" else float(row[k]))
                for k in COLUMNS}
        out.append(ExperimentRecord(**conv))
    return out
