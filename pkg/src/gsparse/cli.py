"""Command line entry point: ``gsparse {solve,grid,compare,gain,metrics,gen}``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bench
from .core import GroupPartition, ProblemInstance, lambda_max
from .data import (
    SyntheticSpec,
    generate_synthetic,
    read_csv,
    read_libsvm,
    write_libsvm,
)
from .irl1 import Irl1Config, run
from .screening import STRATEGIES
from .subsolver import SubsolverDivergence


class _Loaded:
    def __init__(self, A, y, partition, source, A_test=None, y_test=None, task="regression",
                 x_true=None):
        self.A, self.y, self.partition, self.source = A, y, partition, source
        self.A_test, self.y_test, self.task, self.x_true = A_test, y_test, task, x_true


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path, payload) -> None:
    text = json.dumps(_jsonable(payload), indent=2)
    if path is None or path == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def _write_csv(path, header, rows) -> None:
    if path is None:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _synthetic_spec(args) -> SyntheticSpec | None:
    """Spec from --synthetic-config, then --synthetic, then --seed, later ones winning."""
    if not (args.synthetic_config or args.synthetic is not None):
        return None
    try:
        values = asdict(SyntheticSpec.from_file(args.synthetic_config)) if args.synthetic_config else {}
        if args.synthetic:
            values.update(_explicit(args.synthetic))
        if args.seed is not None:
            values["seed"] = args.seed
        return SyntheticSpec(**values)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None


def _explicit(text):
    spec = SyntheticSpec.parse(text)
    keys = {item.split("=", 1)[0].strip() for item in text.replace("\n", ",").split(",") if "=" in item}
    return {k: v for k, v in asdict(spec).items() if k in keys}


def _load(args) -> _Loaded:
    spec = _synthetic_spec(args)
    if spec is not None:
        A, y, x_true, part = generate_synthetic(spec)
        return _Loaded(A, y, part, {"synthetic": asdict(spec)}, x_true=x_true)
    if not args.data:
        raise _UsageError("one of --data or --synthetic is required")
    path = Path(args.data)
    fmt = args.format
    if fmt == "auto":
        fmt = {".csv": "csv", ".npz": "npz"}.get(path.suffix.lower(), "libsvm")
    if fmt == "npz":
        with np.load(path) as z:
            A, y = z["A"], z["y"]
            part = GroupPartition.contiguous_blocks(A.shape[1], int(z["group_size"]))
            x_true = z["x_true"] if "x_true" in z else None
        return _Loaded(A, y, part, {"data": str(path), "format": "npz"}, x_true=x_true)
    if fmt == "csv":
        if not args.target:
            raise _UsageError("--target is required for CSV input")
        dataset = read_csv(path, args.target, task=args.task)
    else:
        dataset = read_libsvm(path, task=args.task)
    prep = bench.prepare_dataset(dataset, expand=not args.no_expand, degree=args.degree,
                                 group_size=args.group_size, test_frac=args.test_frac,
                                 seed=args.seed or 0)
    source = {"data": str(path), "format": fmt, "task": args.task, "expanded": not args.no_expand,
              "m": prep.A.shape[0], "n": prep.A.shape[1], "groups": prep.partition.d}
    return _Loaded(prep.A, prep.y, prep.partition, source, prep.A_test, prep.y_test, prep.task)


class _UsageError(Exception):
    pass


def _config(args, strategy=None) -> Irl1Config:
    return Irl1Config(mu=args.mu, outer_tol=args.outer_tol, max_outer=args.max_outer,
                      strategy=strategy or getattr(args, "strategy", "proposed"),
                      init_budget=args.init_budget, inner_tol=args.inner_tol,
                      inner_max_iters=args.inner_max_iters, kkt_slack=args.kkt_slack,
                      identify=not args.no_identify)


def _instance(loaded: _Loaded, args) -> ProblemInstance:
    inst = ProblemInstance(loaded.A, loaded.y, loaded.partition, 1.0, args.p, args.q)
    lam_max = lambda_max(inst)
    if args.lam is not None:
        lam = args.lam
    else:
        if lam_max == 0:
            raise _UsageError("lambda_max is zero (y is orthogonal to every group); pass --lambda")
        lam = args.lambda_frac * lam_max
    return inst.with_params(lam=lam)


def _prediction(loaded: _Loaded, x) -> dict:
    out = {"train": bench.prediction_error(loaded.A, loaded.y, x, loaded.task)}
    if loaded.A_test is not None:
        out["test"] = bench.prediction_error(loaded.A_test, loaded.y_test, x, loaded.task)
    out["metric"] = "accuracy" if loaded.task == "classification" else "mse"
    return out


def cmd_solve(args) -> int:
    loaded = _load(args)
    inst = _instance(loaded, args)
    x, rep = run(inst, _config(args))
    payload = {"command": "solve", "source": loaded.source, "report": rep.to_dict(args.sets),
               "prediction": _prediction(loaded, x)}
    if loaded.x_true is not None:
        true_support = np.flatnonzero(inst.partition.norms(loaded.x_true, 1))
        found = np.flatnonzero(inst.partition.norms(x, 1))
        payload["support_recovered"] = bool(np.array_equal(true_support, found))
    if args.save_x:
        np.save(args.save_x, x)
    _write_json(args.out, payload)
    _write_csv(args.csv, ["iteration", "time_s", "screened", "repaired", "active_cols", "objective"],
               rep.csv_rows())
    return 0


def cmd_grid(args) -> int:
    loaded = _load(args)
    inst = _instance(loaded, args)
    evaluate = (lambda x: _prediction(loaded, x))
    out = bench.run_grid(inst, _config(args), Q=args.Q, strategies=args.strategies, evaluate=evaluate)
    payload = {"command": "grid", "source": loaded.source, **out}
    _write_json(args.out, payload)
    _write_csv(args.csv, ["lambda_frac", "strategy", "time_s", "objective", "nonzero_groups", "converged"],
               [(r["lambda_frac"], r["strategy"], r["time_s"], r["objective"], r["nonzero_groups"],
                 r["converged"]) for r in out["rows"]])
    return 0


def cmd_compare(args) -> int:
    loaded = _load(args)
    inst = _instance(loaded, args)
    out = bench.compare_strategies(inst, _config(args), args.strategies, repeat=args.repeat)
    payload = {"command": "compare", "source": loaded.source,
               **{k: v for k, v in out.items() if k not in ("reports", "solutions")}}
    _write_json(args.out, payload)
    _write_csv(args.csv, ["strategy", "time_s", "normalized_time", "objective", "rel_dist_to_none"],
               [(r["strategy"], r["time_s"], r["normalized_time"], r["objective"],
                 r["rel_dist_to_none"]) for r in out["rows"]])
    # the table goes to stderr when stdout carries the JSON report
    stream = sys.stdout if args.out else sys.stderr
    for r in out["rows"]:
        norm = r["normalized_time"]
        print(f"{r['strategy']:>9}  time {r['time_s']:.4f}s  normalized "
              f"{'n/a' if norm is None else f'{norm:.3f}'}  objective {r['objective']:.10g}", file=stream)
    print(f"agreement {out['max_pairwise_rel_dist']:.2e}: {out['status']}", file=stream)
    return 0 if out["status"] == "OK" else 1


def cmd_gain(args) -> int:
    spec = _synthetic_spec(args) or SyntheticSpec()
    values = [float(v) for v in args.values.split(",")]
    if args.vary == "n":
        values = [int(v) for v in values]
    rows = bench.gain_study(spec, args.vary, values, p=args.p, q=args.q,
                            lambda_frac=args.lambda_frac, config=_config(args, "proposed"),
                            seeds=range(args.seeds), repeat=args.repeat)
    _write_json(args.out, {"command": "gain", "base": asdict(spec), "rows": rows})
    _write_csv(args.csv, ["vary", "value", "seed", "time_ori_s", "time_scr_s", "gain"],
               [(r["vary"], r["value"], r["seed"], r["time_ori_s"], r["time_scr_s"], r["gain"])
                for r in rows])
    return 0


def cmd_metrics(args) -> int:
    loaded = _load(args)
    inst = _instance(loaded, args)
    _, ori = run(inst, _config(args, "none"))
    _, scr = run(inst, _config(args, "proposed"))
    rsn, rwn = bench.screening_metrics(scr, ori, n_iters=args.iters)
    payload = {"command": "metrics", "source": loaded.source, "lambda": inst.lam,
               "null_groups": ori.n_groups - ori.nonzero_groups, "rsn": rsn, "rwn": rwn}
    _write_json(args.out, payload)
    _write_csv(args.csv, ["iteration", "rsn", "rwn"],
               [(k, a, b) for k, (a, b) in enumerate(zip(rsn, rwn))])
    return 0


def cmd_gen(args) -> int:
    spec = _synthetic_spec(args) or SyntheticSpec(seed=args.seed or 0)
    A, y, x_true, _ = generate_synthetic(spec)
    if not args.out:
        raise _UsageError("gen needs --out")
    if args.out.endswith(".npz"):
        np.savez(args.out, A=A, y=y, x_true=x_true, group_size=spec.group_size)
    else:
        write_libsvm(args.out, A, y)
    print(json.dumps({"command": "gen", "out": args.out, **asdict(spec)}))
    return 0


def _add_common(sp, data=True):
    if data:
        sp.add_argument("--data", help="LIBSVM, CSV or .npz file")
        sp.add_argument("--format", choices=("auto", "libsvm", "csv", "npz"), default="auto")
        sp.add_argument("--target", help="target column for CSV input")
        sp.add_argument("--task", choices=("regression", "classification"), default="regression")
        sp.add_argument("--no-expand", action="store_true",
                        help="skip the pairwise polynomial group expansion of real data")
        sp.add_argument("--degree", type=int, default=3)
        sp.add_argument("--group-size", type=int, default=1,
                        help="contiguous group size when --no-expand is given")
        sp.add_argument("--test-frac", type=float, default=0.0)
    sp.add_argument("--synthetic", help="synthetic spec, e.g. m=500,n=2000,k_active=10")
    sp.add_argument("--synthetic-config", help="file of key=value lines")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--p", type=float, default=0.5)
    sp.add_argument("--q", type=int, default=2, choices=(1, 2))
    sp.add_argument("--lambda-frac", type=float, default=0.01)
    sp.add_argument("--lambda", dest="lam", type=float, help="absolute lambda (overrides --lambda-frac)")
    sp.add_argument("--mu", type=float, default=0.9)
    sp.add_argument("--outer-tol", type=float, default=1e-6)
    sp.add_argument("--max-outer", type=int, default=500)
    sp.add_argument("--inner-tol", type=float, default=1e-8)
    sp.add_argument("--inner-max-iters", type=int, default=10_000)
    sp.add_argument("--init-budget", type=int, default=50)
    sp.add_argument("--kkt-slack", type=float, default=1e-6)
    sp.add_argument("--no-identify", action="store_true",
                    help="stop on the relative-change test alone")
    sp.add_argument("--out", help="JSON report path (stdout when omitted)")
    sp.add_argument("--csv", help="CSV plot-data path")


def _strategies(text):
    items = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in items if s not in STRATEGIES]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"strategies must be drawn from {STRATEGIES}")
    return tuple(items)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsparse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="one instance, one lambda")
    _add_common(sp)
    sp.add_argument("--strategy", choices=STRATEGIES, default="proposed")
    sp.add_argument("--sets", action="store_true", help="include per-iteration group lists")
    sp.add_argument("--save-x", help="write the solution to this .npy file")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("grid", help="sweep the lambda grid")
    _add_common(sp)
    sp.add_argument("--Q", type=int, default=20)
    sp.add_argument("--strategies", type=_strategies, default=("proposed",))
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("compare", help="time strategies against each other")
    _add_common(sp)
    sp.add_argument("--strategies", type=_strategies, default=("none", "proposed", "strong"))
    sp.add_argument("--repeat", type=int, default=1)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("gain", help="computational gain as lambda, noise or n varies")
    _add_common(sp, data=False)
    sp.add_argument("--vary", choices=("lambda", "noise", "n"), required=True)
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--seeds", type=int, default=1)
    sp.add_argument("--repeat", type=int, default=1)
    sp.set_defaults(func=cmd_gain)

    sp = sub.add_parser("metrics", help="RSN / RWN screening ratios")
    _add_common(sp)
    sp.add_argument("--iters", type=int, default=20)
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("gen", help="write a synthetic instance to disk")
    sp.add_argument("--synthetic", help="synthetic spec, e.g. m=500,n=2000")
    sp.add_argument("--synthetic-config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True, help=".npz or LIBSVM text path")
    sp.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.error(str(exc))
    except (SubsolverDivergence, RuntimeError, FloatingPointError) as exc:
        diag = {"command": args.command, "status": "numerical failure", "error": str(exc)}
        if getattr(args, "out", None):
            _write_json(args.out, diag)
        print(f"gsparse: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"gsparse: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
