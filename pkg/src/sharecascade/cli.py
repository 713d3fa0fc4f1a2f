"""Command-line entry point.

Errors go to stderr as one JSON line ``{"error": kind, "message": ...}``.
Usage problems (bad flags, missing files, malformed config) exit with 2,
failures while running exit with 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import seedset
from .coverage import MAX_DENSE_K, check_coverage_conditions
from .process import BehaviorModel, run_batch
from .topology import LatencyFormatError, node_derived
from .welfare import WelfareFunction, evaluate


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _common(p: argparse.ArgumentParser, output=True):
    p.add_argument("--config", type=Path)
    p.add_argument("--topology", choices=["file", "grid"])
    p.add_argument("--latency", type=Path)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--model", choices=[m.value for m in BehaviorModel])
    p.add_argument("--alpha", type=_floats)
    p.add_argument("--beta", type=_floats)
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--empty-fraction", type=float)
    p.add_argument("--welfare", type=_names)
    p.add_argument("--workers", type=int)
    if output:
        p.add_argument("--out", type=Path)
        p.add_argument("--format", choices=["csv", "json"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sharecascade", description="Incentivized file-sharing cascade experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _common(sub.add_parser("simulate", help="one run of the sharing process"))
    _common(sub.add_parser("sweep", help="grid over alpha and beta"))
    _common(sub.add_parser("compare-models", help="all behaviour models on shared draws"))
    p = sub.add_parser("threshold-study", help="sweeps across latency thresholds")
    _common(p)
    p.add_argument("--gammas", type=_floats, required=True)
    _common(sub.add_parser("coverage-check", help="check coverage sign conditions per node"), output=False)
    p = sub.add_parser("greedy", help="greedy seed selection in the Seed Set model")
    _common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--estimator", choices=["mc", "exact"], default="mc")
    p = sub.add_parser("gadget", help="run the vertex-cover hardness gadget")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--seed-nodes", type=_ints, default=[])
    p.add_argument("--out", type=Path)
    _common(sub.add_parser("inspect", help="summarise a topology"), output=False)
    return parser


_FIELD = {"topology": "topology", "latency": "latency", "rows": "rows", "cols": "cols", "gamma": "gamma",
          "model": "model", "alpha": "alpha", "beta": "beta", "replicas": "replicas", "seed": "seed",
          "empty_fraction": "empty_fraction", "welfare": "welfare", "workers": "workers"}


def load_config(args) -> ex.ExperimentConfig:
    """Config file first, then any flag that was given."""
    data = {}
    if args.config is not None:
        if not args.config.is_file():
            raise UsageError(f"config file not found: {args.config}")
        try:
            data = json.loads(args.config.read_text())
        except json.JSONDecodeError as e:
            raise UsageError(f"malformed config: {e}") from None
        if not isinstance(data, dict):
            raise UsageError("malformed config: expected a JSON object")
    for attr, key in _FIELD.items():
        val = getattr(args, attr, None)
        if val is not None:
            data[key] = str(val) if isinstance(val, Path) else val
    if data.get("latency") and "topology" not in data:
        data["topology"] = "file"
    if data.get("topology") == "file":
        lat = data.get("latency")
        if not lat or not Path(lat).is_file():
            raise UsageError(f"latency file not found: {lat}")
    try:
        return ex.ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as e:
        raise UsageError(f"malformed config: {e}") from None


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def cmd_simulate(args, cfg):
    T = cfg.build()
    pi = ex.DegreePower(cfg.alpha[0], cfg.beta[0]).payments(T)
    empty, lam = ex.draw_block(cfg.seed, 0, 1, T.n, cfg.empty_fraction)
    active, rounds = run_batch(cfg.model, T, lam * pi, empty=empty)
    final = [int(u) for u in np.flatnonzero(active[0])]
    result = {
        "n": T.n, "gamma": cfg.gamma, "model": BehaviorModel.parse(cfg.model).value,
        "alpha": cfg.alpha[0], "beta": cfg.beta[0], "seed": cfg.seed,
        "rounds": int(rounds[0]), "active": final,
        "empty": [int(u) for u in np.flatnonzero(empty[0])],
        "total_payment": float(pi[final].sum()),
        "welfare": {w: evaluate(w, final, T) for w in cfg.welfare},
    }
    _emit(_json(result), args.out)


def cmd_sweep(args, cfg):
    _emit(ex.write_records(ex.sweep(cfg), args.format), args.out)


def cmd_compare(args, cfg):
    cmp = ex.compare_models(cfg, beta=cfg.beta[0])
    if args.format == "json":
        body = {"records": [asdict(r) for r in cmp.all_records()],
                "gaps": [{"alpha": a, "gap": g} for a, g in zip(cfg.alpha, cmp.gaps)]}
        _emit(_json(body), args.out)
    else:
        _emit(ex.write_records(cmp.all_records(), "csv"), args.out)
        for a, g in zip(cfg.alpha, cmp.gaps):
            print(f"gap alpha={a!r} demand_minus_nonetwork={g!r}", file=sys.stderr)


def cmd_threshold(args, cfg):
    rows = ex.threshold_study(cfg, args.gammas)
    if args.format == "json":
        body = [{"gamma": r.gamma, "average_degree": r.average_degree,
                 "records": [asdict(x) for x in r.records]} for r in rows]
        _emit(_json(body), args.out)
    else:
        _emit(ex.write_records([x for r in rows for x in r.records], "csv"), args.out)
        for r in rows:
            print(f"gamma={r.gamma!r} average_degree={r.average_degree!r}", file=sys.stderr)


def cmd_coverage(args, cfg):
    """Per-node report; exit 1 when a derivative sign condition fails.

    Spontaneous activation (``f_u(empty) > 0``, a downloader that cannot reach
    ``u``) is listed but does not by itself fail the check.
    """
    T = cfg.build()
    if T.n - 1 > MAX_DENSE_K:
        raise UsageError(f"coverage-check needs n <= {MAX_DENSE_K + 1}, got {T.n}")
    ok = True
    for u in range(T.n):
        try:
            act = seedset.activation_function(T, u)
        except seedset.DegenerateNodeError:
            print(f"node {u}: skip C_u=0")
            continue
        rep = check_coverage_conditions(act.f)
        ok &= rep.signs_ok
        line = f"node {u}: {'pass' if rep.signs_ok else 'fail'}"
        bad = sorted({v[2] for v in rep.violations if v[2] != "spontaneous"})
        if bad:
            line += f" violations={','.join(bad)}"
        if not rep.passed and rep.violations[0][2] == "spontaneous":
            line += f" spontaneous f(empty)={rep.violations[0][1]!r}"
        print(line)
    return 0 if ok else 1


def cmd_greedy(args, cfg):
    T = cfg.build()
    w = cfg.welfare[0]
    chosen = seedset.greedy_seed(T, args.k, w, samples=cfg.replicas, seed=cfg.seed, estimator=args.estimator)
    est = seedset.expected_welfare_estimate(T, chosen, w, cfg.replicas, np.random.default_rng([cfg.seed, 1]))
    _emit(_json({"k": args.k, "welfare": WelfareFunction.parse(w).value, "estimator": args.estimator,
                 "seeds": chosen, "mean": est.mean, "stderr": est.stderr}), args.out)


def cmd_gadget(args):
    if not args.graph.is_file():
        raise UsageError(f"graph file not found: {args.graph}")
    try:
        edges = seedset.read_edge_list(args.graph)
    except ValueError as e:
        raise UsageError(f"malformed edge list: {e}") from None
    g = seedset.vertex_cover_gadget(edges, args.r)
    n = g.topology.n
    bad = [s for s in args.seed_nodes if not 0 <= s < n]
    if bad:
        raise UsageError(f"seed ids out of range [0, {n}): {bad}")
    tr = seedset.run_gadget(g, args.seed_nodes)
    body = {
        "N": g.N, "M": g.M, "r": g.r, "n": n,
        "layers": g.layers, "labels": g.labels,
        "seeds": tr.seeds,
        "rounds": tr.rounds,
        "final": sorted(tr.final),
        "final_count": tr.final_count,
        "node_layer_vertex_cover": all(s < g.N for s in args.seed_nodes)
        and seedset.is_vertex_cover(g.edges, args.seed_nodes),
    }
    _emit(_json(body), args.out)


def cmd_inspect(args, cfg):
    T = cfg.build()
    nd = node_derived(T)
    print(f"n {T.n}")
    print(f"gamma {cfg.gamma!r}")
    print(f"average_degree {float(nd.degree.mean())!r}")
    print(f"C_u min {float(nd.c_total.min())!r} mean {float(nd.c_total.mean())!r} max {float(nd.c_total.max())!r}")


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gadget":
            return cmd_gadget(args) or 0
        cfg = load_config(args)
        if getattr(args, "out", None) is not None and not args.out.parent.is_dir():
            raise UsageError(f"output directory not found: {args.out.parent}")
        handler = {
            "simulate": cmd_simulate, "sweep": cmd_sweep, "compare-models": cmd_compare,
            "threshold-study": cmd_threshold, "coverage-check": cmd_coverage,
            "greedy": cmd_greedy, "inspect": cmd_inspect,
        }[args.command]
        return handler(args, cfg) or 0
    except UsageError as e:
        return _fail("usage", str(e), 2)
    except LatencyFormatError as e:
        return _fail("usage", f"malformed latency file: {e}", 2)
    except (ValueError, OverflowError, OSError, ArithmeticError) as e:
        return _fail("runtime", f"{type(e).__name__}: {e}", 1)


if __name__ == "__main__":
    sys.exit(main())
