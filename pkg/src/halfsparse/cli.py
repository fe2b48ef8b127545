"""Command-line front end: benchmarks, write-mode comparisons, training.

Subcommands: bench, compare, train, info. Reports are JSON on stdout and
fully determined by (command, config, seed) apart from the timestamp
field; CSV training traces go to the --out directory. Exit codes: 0
success, 1 numeric failure (NaN loss or output mismatch), 2 usage or
configuration error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, halfnum, kernels, models, simt, sparse

_KERNELS = ("spmmv", "spmmve", "sddmm")


def _parse_synth(spec):
    family, _, rest = spec.partition(":")
    kv = {}
    if rest:
        for item in rest.split(","):
            key, sep, val = item.partition("=")
            if not sep or not key:
                raise ValueError(f"bad synth item {item!r}")
            kv[key] = val
    if family == "sbm":
        allowed = {"n", "k", "pin", "pout", "f"}
        extra = set(kv) - allowed
        if extra:
            raise ValueError(f"unknown sbm keys {sorted(extra)}")
        return {
            "family": "sbm",
            "n": int(kv.get("n", 1000)),
            "k": int(kv.get("k", 2)),
            "pin": float(kv.get("pin", 0.05)),
            "pout": float(kv.get("pout", 0.005)),
            "f": int(kv.get("f", 32)),
        }
    if family == "star":
        allowed = {"n", "f", "mag"}
        extra = set(kv) - allowed
        if extra:
            raise ValueError(f"unknown star keys {sorted(extra)}")
        return {
            "family": "star",
            "n": int(kv.get("n", 1025)),
            "f": int(kv.get("f", 32)),
            "mag": float(kv.get("mag", 1.0)),
        }
    raise ValueError(f"unknown synth family {family!r}")


def _star_graph(n):
    hub = np.zeros(n - 1, dtype=np.int64)
    spokes = np.arange(1, n, dtype=np.int64)
    return sparse.CooGraph.from_edges(n, hub, spokes)


def _load_inputs(args):
    """Graph + float32 features + labels (labels only for synth sbm)."""
    rng = np.random.default_rng(args.seed)
    if args.graph and args.synth:
        raise ValueError("--graph and --synth are mutually exclusive")
    if args.graph:
        g = sparse.load_edge_list(args.graph)
        feat = getattr(args, "feature_dim", 32)
        x = rng.normal(size=(g.n, feat)).astype(np.float32)
        return g, x, None, {"graph": args.graph, "feature_dim": feat}
    if not args.synth:
        raise ValueError("one of --graph or --synth is required")
    spec = _parse_synth(args.synth)
    if spec["family"] == "sbm":
        g, x, labels = sparse.synth_sbm(
            spec["n"], spec["k"], spec["pin"], spec["pout"], spec["f"], args.seed
        )
        return g, x.data.astype(np.float32), labels, spec
    g = _star_graph(spec["n"])
    x = np.full((spec["n"], spec["f"]), spec["mag"], dtype=np.float32)
    return g, x, None, spec


def _cast_features(x32, precision):
    return x32 if precision == "float32" else halfnum.to_half(x32)


def _bitwise_equal(a, b):
    if a.shape != b.shape or a.dtype != b.dtype:
        return False
    return bool(np.array_equal(a.view(np.uint8), b.view(np.uint8)))


def _first_diff(a, b):
    mask = (
        a.view(np.uint8).reshape(a.shape[0], -1)
        != b.view(np.uint8).reshape(b.shape[0], -1)
    ).any(axis=1)
    i = int(np.flatnonzero(mask)[0])
    return i, a[i], b[i]


def _oracle_summary(out, oracle):
    """Float64 comparison restricted to finite entries, plus nonfinite tallies."""
    o = np.asarray(out, dtype=np.float64)
    finite = np.isfinite(o)
    diff = np.abs(o[finite] - oracle[finite])
    denom = np.maximum(np.abs(oracle[finite]), 1e-30)
    return {
        "max_abs_err": float(diff.max(initial=0.0)),
        "max_rel_err": float((diff / denom).max(initial=0.0)),
        "inf_count": int(np.isinf(o).sum()),
        "nan_count": int(np.isnan(o).sum()),
    }


def _dense_oracle_spmm(g, w64, x64, norm):
    n = g.n
    deg_r = np.bincount(g.rows, minlength=n).astype(np.float64)
    deg_c = np.bincount(g.cols, minlength=n).astype(np.float64)
    xs = x64.copy()
    if norm in ("left", "both"):
        s = np.where(deg_c > 0, deg_c if norm == "left" else np.sqrt(deg_c), 1.0)
        xs = xs / s[:, None]
    y = np.zeros((n, x64.shape[1]))
    np.add.at(y, g.rows, w64[:, None] * xs[g.cols])
    if norm in ("right", "both"):
        s = np.where(deg_r > 0, deg_r if norm == "right" else np.sqrt(deg_r), 1.0)
        y = y / s[:, None]
    return y


def _emit(report):
    report["timestamp"] = time.time()
    print(json.dumps(report, sort_keys=True, indent=2))


def _cmd_info(args):
    report = {
        "command": "info",
        "version": __version__,
        "numpy": np.__version__,
        "half": {
            "max": halfnum.HALF_MAX,
            "min_normal": halfnum.HALF_MIN_NORMAL,
            "min_subnormal": halfnum.HALF_MIN_SUBNORMAL,
            "eps": halfnum.HALF_EPS,
        },
        "widths": {w: simt.warp_load_bytes(w) for w in simt.WIDTH_LANES},
        "defaults": {
            "warp_chunk": simt.DEFAULT_WARP_CHUNK,
            "warps_per_cta": simt.DEFAULT_WARPS_PER_CTA,
        },
    }
    _emit(report)
    return 0


def _cmd_bench(args):
    g, x32, _, source = _load_inputs(args)
    rng = np.random.default_rng(args.seed + 1)
    x = sparse.DenseTensor(_cast_features(x32, args.precision))
    sched = simt.plan_edge_parallel(g, args.warp_chunk, args.warps_per_cta)
    red = kernels.Reduction(args.mode, args.norm)
    report = {
        "command": "bench",
        "kernel": args.kernel,
        "config": _config_echo(args, source, g),
    }

    if args.kernel == "sddmm":
        y = sparse.DenseTensor(
            _cast_features(rng.normal(size=x32.shape).astype(np.float32), args.precision)
        )
        out, metrics = kernels.sddmm(g, x, y, sched, args.width)
        ref = kernels.scalar_reference("sddmm", g, x, y=y)
        oracle = np.einsum(
            "ef,ef->e",
            x.data.astype(np.float64)[g.rows],
            y.data.astype(np.float64)[g.cols],
        )
    elif args.kernel == "spmmve":
        w_e = _cast_features(
            rng.uniform(0.5, 1.5, size=g.num_edges).astype(np.float32),
            args.precision,
        )
        outt, metrics = kernels.spmm_ve(g, w_e, x, sched, red, args.width)
        reft = kernels.scalar_reference("spmm_ve", g, x, sched, w_e=w_e, reduction=red)
        out, ref = outt.data, reft.data
        oracle = _dense_oracle_spmm(
            g, w_e.astype(np.float64), x.data.astype(np.float64), args.norm
        )
    else:
        outt, metrics = kernels.spmm_v(g, x, sched, red, args.width)
        reft = kernels.scalar_reference("spmm_v", g, x, sched, reduction=red)
        out, ref = outt.data, reft.data
        oracle = _dense_oracle_spmm(
            g, np.ones(g.num_edges), x.data.astype(np.float64), args.norm
        )

    report["metrics"] = metrics.as_dict()
    report["bit_exact_vs_reference"] = _bitwise_equal(out, ref)
    report["oracle"] = _oracle_summary(out, oracle)
    _emit(report)
    return 0 if report["bit_exact_vs_reference"] else 1


def _cmd_compare(args):
    g, x32, _, source = _load_inputs(args)
    x = sparse.DenseTensor(_cast_features(x32, args.precision))
    csr = sparse.coo_to_csr(g)
    sched = simt.plan_vertex_grouped(csr, args.warps_per_cta)
    red = kernels.Reduction(args.mode, args.norm)
    y_stage, m_stage = kernels.spmm_vertex_grouped(
        csr, x, sched, red, "staging", args.width
    )
    y_atomic, m_atomic = kernels.spmm_vertex_grouped(
        csr, x, sched, red, "atomic_model", args.width
    )
    equal = _bitwise_equal(y_stage.data, y_atomic.data)
    report = {
        "command": "compare",
        "config": _config_echo(args, source, g),
        "staging": m_stage.as_dict(),
        "atomic_model": m_atomic.as_dict(),
        "outputs_bit_equal": equal,
    }
    if not equal:
        row, got, want = _first_diff(y_stage.data, y_atomic.data)
        report["first_diff"] = {
            "row": row,
            "staging": [float(v) for v in np.atleast_1d(got)],
            "atomic_model": [float(v) for v in np.atleast_1d(want)],
        }
        _emit(report)
        return 1
    _emit(report)
    return 0


def _cmd_train(args):
    g, x32, labels, source = _load_inputs(args)
    if labels is None:
        raise ValueError("train requires --synth sbm:... (labeled nodes)")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run(precision):
        config = models.TrainConfig(
            kind=args.model,
            mode=precision,
            epochs=args.epochs,
            hidden=args.hidden,
            lr=args.lr,
            seed=args.seed,
            width=args.width,
            scaling=args.mode,
            norm=args.norm,
            lam=args.lam,
        )
        result = models.train(g, x32, labels, config)
        trace_path = out_dir / f"{args.model}_{precision}_trace.csv"
        result.write_trace(trace_path)
        inf_total, nan_total = result.overflow.totals()
        return result, {
            "train_acc": result.train_acc,
            "val_acc": result.val_acc,
            "final_loss": result.losses[-1] if result.losses else None,
            "conversions": {
                "forward": result.conversions.forward,
                "backward": result.conversions.backward,
            },
            "inf_count": inf_total,
            "nan_count": nan_total,
            "trace": str(trace_path),
        }

    report = {"command": "train", "config": _config_echo(args, source, g)}
    try:
        _, report[args.precision] = run(args.precision)
        if args.precision == "half":
            _, report["float32"] = run("float32")
            report["train_acc_delta"] = abs(
                report["half"]["train_acc"] - report["float32"]["train_acc"]
            )
    except models.NanLossError as err:
        inf_total, nan_total = err.counters.totals()
        report["nan_abort"] = {
            "epoch": err.epoch,
            "inf_count": inf_total,
            "nan_count": nan_total,
        }
        _emit(report)
        return 1
    _emit(report)
    return 0


def _config_echo(args, source, g):
    echo = {
        "source": source,
        "vertices": g.n,
        "edges": g.num_edges,
        "width": args.width,
        "mode": args.mode,
        "norm": args.norm,
        "precision": args.precision,
        "warp_chunk": args.warp_chunk,
        "warps_per_cta": args.warps_per_cta,
        "seed": args.seed,
        "threads": args.threads,
    }
    for key in ("kernel", "model", "epochs", "hidden", "lr", "lam"):
        if hasattr(args, key):
            echo[key] = getattr(args, key)
    return echo


def _add_common(p, with_features=True):
    p.add_argument("--graph", help="edge-list file")
    p.add_argument("--synth", help="inline synthetic spec, e.g. sbm:n=1000,k=2,pin=0.05,pout=0.005,f=32")
    if with_features:
        p.add_argument("--feature-dim", type=int, default=32,
                       help="feature length for --graph inputs")
    p.add_argument("--width", choices=sorted(simt.WIDTH_LANES), default="half2")
    p.add_argument("--mode", choices=kernels.SCALINGS, default="post",
                   help="reduction scaling strategy")
    p.add_argument("--norm", choices=kernels.NORMS, default="none")
    p.add_argument("--precision", choices=("half", "float32"), default="half")
    p.add_argument("--warp-chunk", type=int, default=simt.DEFAULT_WARP_CHUNK)
    p.add_argument("--warps-per-cta", type=int, default=simt.DEFAULT_WARPS_PER_CTA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0,
                   help="0 = hardware default; the fold engine is deterministic "
                        "regardless of this setting")
    p.add_argument("--out", default=".", help="directory for CSV traces")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="halfsparse",
        description="Half-precision sparse kernels and GNN training",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    b = sub.add_parser("bench", help="run one kernel against its reference")
    b.add_argument("--kernel", choices=_KERNELS, required=True)
    _add_common(b)

    c = sub.add_parser("compare", help="staging vs atomic-model write protocols")
    _add_common(c)

    t = sub.add_parser("train", help="train a 2-layer GNN on a synthetic graph")
    t.add_argument("--model", choices=models._LAYER_KINDS, default="gcn")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--hidden", type=int, default=16)
    t.add_argument("--lr", type=float, default=1e-2)
    t.add_argument("--lam", type=float, default=0.1)
    _add_common(t)
    t.set_defaults(mode="discretized", norm="both")

    sub.add_parser("info", help="environment and format constants")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "info": _cmd_info,
        "bench": _cmd_bench,
        "compare": _cmd_compare,
        "train": _cmd_train,
    }
    try:
        return handlers[args.cmd](args)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
