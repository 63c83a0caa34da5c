"""Command-line front end.

Exit codes: 0 success, 2 usage or input error, 3 method not applicable,
4 numerical failure. Errors print one line ``error: <kind>: <message>`` to
stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiment as ex
from .benchmarks import BENCHMARKS
from .errors import NotApplicableError, ReductionError
from .sdr import SDR_METHODS
from .sor import SOR_METHODS

EXIT_OK, EXIT_USAGE, EXIT_NOT_APPLICABLE, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Values are parsed as
    JSON when possible (numbers, lists, booleans) and kept as strings otherwise."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _params(args) -> dict:
    params = parse_config(args.config) if getattr(args, "config", None) else {}
    for item in getattr(args, "param", None) or []:
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def cmd_bench(args) -> int:
    overrides = parse_config(args.config) if args.config else {}
    if args.name not in BENCHMARKS:
        raise UsageError(f"unknown benchmark {args.name!r}; choose from {', '.join(BENCHMARKS)}")
    path = ex.write_bundle(args.name, args.seed, args.out, **overrides)
    meta = json.loads(path.with_name(f"{args.name}_meta.json").read_text())["metadata"]
    print(f"{path}: n_x={meta['n_x']} n_u={meta['n_u']} n_y={meta['n_y']} n_p={meta['n_p']}")
    return EXIT_OK


def cmd_reduce(args) -> int:
    lb = ex.load_bundle(args.bundle)
    params = _params(args)
    if args.dim is None:
        full = lb.model.n_x if args.kind == "sor" else lb.model.n_p
        args.dim = max(1, full // 2)
    res, cpu = ex.reduce(lb, args.kind, args.method, args.dim, params, data=args.data)
    out = args.output or lb.path.with_name(f"{lb.name}_{args.kind}_{args.method}_{args.dim}.json")
    ex.save_result(res, cpu, out, benchmark=lb.name, seed=lb.seed, dim=args.dim, params=params)
    dim = res.r_x if args.kind == "sor" else res.n_phi
    print(f"{out}: method={args.method} {'r_x' if args.kind == 'sor' else 'n_phi'}={dim} cpu={cpu:.3g}s")
    return EXIT_OK


def cmd_simulate(args) -> int:
    lb = ex.load_bundle(args.bundle)
    result = ex.load_result(args.result)[0] if args.result else None
    traj = ex.simulate_bundle(lb, args.signal, result)
    traj.to_csv(args.output)
    print(f"{args.output}: {traj.n_samples} samples{' (diverged)' if traj.diverged else ''}")
    return EXIT_OK


def cmd_eval(args) -> int:
    lb = ex.load_bundle(args.bundle)
    result, doc = ex.load_result(args.result)
    report, ref, red = ex.evaluate(lb, result, args.signal, args.grid)
    stem = Path(args.output) if args.output else Path(args.result).with_suffix("")
    red.to_csv(f"{stem}_{args.signal}.csv")
    ref.to_csv(f"{stem}_{args.signal}_ref.csv")
    dim = result.r_x if doc["kind"] == "sor" else result.n_phi
    label = {"benchmark": lb.name, "kind": doc["kind"], "method": doc["method"], "dim": dim}
    summary = ex.write_report(report, stem, label)
    row = {**label, "cpu": doc.get("cpu", float("nan")), **summary}
    Path(f"{stem}_row.json").write_text(json.dumps(row, default=float) + "\n")
    print(f"{stem}_summary.csv: nrmse={summary['nrmse']:.4g} lambda2_max={summary['lambda2_max']:.4g} "
          f"unstable_ratio={summary['unstable_ratio']:.3g}")
    return EXIT_OK


def cmd_table(args) -> int:
    rows = []
    for f in args.rows:
        p = Path(f)
        if not p.is_file():
            raise UsageError(f"row file {p} does not exist")
        rows.append(json.loads(p.read_text()))
    ex.write_table(rows, args.output)
    print(f"{args.output}: {len(rows)} rows")
    return EXIT_OK


def cmd_run(args) -> int:
    """All steps for one cell, driven by a config file and command-line overrides."""
    cfg = parse_config(args.config) if args.config else {}
    for key in ("benchmark", "kind", "method", "dim"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    missing = [k for k in ("benchmark", "kind", "method", "dim") if k not in cfg]
    if missing:
        raise UsageError(f"missing {', '.join(missing)} (config file or options)")
    known = {"benchmark", "kind", "method", "dim", "signal", "grid", "overrides"}
    spec = ex.ExperimentSpec(cfg["benchmark"], cfg["kind"], cfg["method"], int(cfg["dim"]), args.seed, args.out,
                             params={k: v for k, v in cfg.items() if k not in known},
                             overrides=cfg.get("overrides", {}), signal=cfg.get("signal", "u_out"),
                             grid=cfg.get("grid", "out"))
    row = ex.run_experiment(spec)
    print(f"{spec.benchmark}/{spec.method}: nrmse={row['nrmse']:.4g} lambda2_max={row['lambda2_max']:.4g} "
          f"cpu={row['cpu']:.3g}s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lpvred", description="Model reduction experiments for affine LPV state-space models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bench", help="write a benchmark bundle (model, input signals, scheduling grids)")
    b.add_argument("name", help=f"one of {', '.join(BENCHMARKS)}")
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--out", default=".", help="output directory")
    b.add_argument("--config", help="key = value file with benchmark overrides")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("reduce", help="run a state-order (sor) or scheduling-dimension (sdr) reduction")
    r.add_argument("kind", choices=("sor", "sdr"))
    r.add_argument("bundle", help="bundle JSON written by 'bench'")
    r.add_argument("--method", required=True, help=f"sor: {', '.join(SOR_METHODS)}; sdr: {', '.join(SDR_METHODS)}")
    r.add_argument("--order", "--dim", dest="dim", type=int,
                   help="r_x for sor, n_phi for sdr; half the full dimension by default")
    r.add_argument("--config", help="key = value file with method hyperparameters")
    r.add_argument("--param", action="append", help="extra hyperparameter key=value (repeatable)")
    r.add_argument("--data", help="training trajectory CSV (sdr); defaults to the response to u_train")
    r.add_argument("--output", "-o")
    r.set_defaults(func=cmd_reduce)

    s = sub.add_parser("simulate", help="simulate the nonlinear model or a reduced model")
    s.add_argument("bundle")
    s.add_argument("--result", help="reduction result JSON; nonlinear model if omitted")
    s.add_argument("--signal", default="u_out", choices=ex.SIGNALS)
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("eval", help="NRMSE and local H2 / H-infinity errors of a result")
    e.add_argument("bundle")
    e.add_argument("result")
    e.add_argument("--signal", default="u_out", choices=ex.SIGNALS)
    e.add_argument("--grid", default="out", choices=ex.GRIDS)
    e.add_argument("--output", "-o", help="output stem; defaults to the result path without suffix")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("table", help="aggregate '*_row.json' files from 'eval' into one CSV")
    t.add_argument("rows", nargs="+")
    t.add_argument("--output", "-o", required=True)
    t.set_defaults(func=cmd_table)

    x = sub.add_parser("run", help="bench, reduce and eval one cell in one go")
    x.add_argument("--config", help="key = value file: benchmark, kind, method, dim and hyperparameters")
    x.add_argument("--benchmark")
    x.add_argument("--kind", choices=("sor", "sdr"))
    x.add_argument("--method")
    x.add_argument("--dim", type=int)
    x.add_argument("--seed", type=int, required=True)
    x.add_argument("--out", default=".")
    x.set_defaults(func=cmd_run)
    return p


def _fail(kind: str, message, code: int) -> int:
    text = " ".join(str(message).split())
    print(f"error: {kind}: {text}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except NotApplicableError as exc:
        return _fail(exc.kind, exc, EXIT_NOT_APPLICABLE)
    except ReductionError as exc:
        return _fail(exc.kind, exc, EXIT_USAGE if exc.kind == "input" else EXIT_NUMERICAL)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        return _fail("usage", exc, EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
