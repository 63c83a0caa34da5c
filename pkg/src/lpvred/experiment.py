"""Experiment plumbing: benchmark bundles on disk, reductions, evaluation and tables.

A bundle directory holds the model ``<name>.json`` in the plain model
schema, a sidecar ``<name>_meta.json`` with benchmark name, overrides and
seed, the three input signals as trajectory-style CSVs and the three
scheduling grids.
Metric files written by :func:`write_report` contain no timing information,
so reruns with identical seeds reproduce them byte for byte; CPU time lives
in the result JSON and in the aggregated table only.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .benchmarks import BENCHMARKS, T_S, BenchmarkBundle, build_benchmark, design_grids, design_inputs
from .errors import DimensionError
from .model import AffineLpvSs
from .sdr import SDR_METHODS, SdrResult, collect_scheduling
from .simulation import MetricReport, SelfScheduled, Trajectory, local_errors, nrmse, read_csv, simulate, write_csv
from .sor import SOR_METHODS, SorResult, _jsonable

SIGNALS = ("u_train", "u_in", "u_out")
GRIDS = ("train", "in", "out")
SUMMARY_KEYS = ("nrmse", "lambda2_mean", "lambda2_max", "lambda2_std", "lambdainf_mean", "lambdainf_max",
                "lambdainf_std", "n_points", "n_unstable", "unstable_ratio")


@dataclass
class LoadedBundle:
    """A bundle read back from disk; ``bundle`` is rebuilt from the stored config."""

    path: Path
    bundle: BenchmarkBundle
    seed: int
    inputs: dict
    grids: dict

    @property
    def name(self) -> str:
        return self.bundle.name

    @property
    def model(self) -> AffineLpvSs:
        return self.bundle.lpv


def _given(overrides: dict) -> dict:
    return {k: v for k, v in overrides.items() if v is not None}


def write_bundle(name: str, seed: int, out_dir, **overrides) -> Path:
    """Build benchmark ``name`` and write model, signals and grids to ``out_dir``."""
    if name not in BENCHMARKS:
        raise DimensionError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
    overrides = _given(overrides)
    bundle = build_benchmark(name, **overrides)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"benchmark": name, "seed": int(seed), "overrides": _jsonable(overrides),
            "metadata": _jsonable(bundle.metadata())}
    path = out / f"{name}.json"
    path.write_text(bundle.lpv.to_json() + "\n")
    Path(f"{path.with_suffix('')}_meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    inputs = design_inputs(bundle, seed)
    for key, u in inputs.items():
        n_u = u.shape[1]
        write_csv(out / f"{name}_{key}.csv", ["t"] + [f"u{i + 1}" for i in range(n_u)],
                  np.column_stack([np.arange(len(u)) * T_S, u]))
    for key, g in design_grids(bundle, seed).items():
        write_csv(out / f"{name}_grid_{key}.csv", [f"p{i + 1}" for i in range(g.shape[1])], g)
    return path


def load_bundle(path) -> LoadedBundle:
    path = Path(path)
    if not path.is_file():
        raise DimensionError(f"bundle file {path} does not exist")
    stem = path.with_suffix("")
    meta_path = Path(f"{stem}_meta.json")
    if not meta_path.is_file():
        raise DimensionError(f"bundle metadata {meta_path} does not exist")
    doc = json.loads(meta_path.read_text())
    bundle = build_benchmark(doc["benchmark"], **doc.get("overrides", {}))
    stored = AffineLpvSs.from_json(path.read_text())
    if stored.basis.shape != bundle.lpv.basis.shape or not np.allclose(stored.basis, bundle.lpv.basis):
        raise DimensionError(f"{path}: stored model does not match the rebuilt benchmark")
    inputs, grids = {}, {}
    for key in SIGNALS:
        f = Path(f"{stem}_{key}.csv")
        if f.is_file():
            inputs[key] = read_csv(f)[1][:, 1:]
    for key in GRIDS:
        f = Path(f"{stem}_grid_{key}.csv")
        if f.is_file():
            grids[key] = read_csv(f)[1]
    return LoadedBundle(path, bundle, int(doc["seed"]), inputs, grids)


def _need(mapping: dict, key: str, what: str):
    if key not in mapping:
        raise DimensionError(f"bundle is missing {what} {key!r}")
    return mapping[key]


def training_trajectory(lb: LoadedBundle, data=None) -> Trajectory:
    """Trajectory CSV ``data`` if given, else the nonlinear response to ``u_train``."""
    if data is not None:
        return Trajectory.from_csv(data)
    return simulate(lb.bundle.nl, _need(lb.inputs, "u_train", "signal"), eta=lb.bundle.eta)


def reduce(lb: LoadedBundle, kind: str, method: str, dim: int, params: dict | None = None, data=None):
    """Run one reduction and return ``(result, cpu_seconds)``.

    ``dim`` is ``r_x`` for SOR and ``n_phi`` for SDR. CPU time covers the
    reduction call only (wall clock); training simulation and I/O are excluded.
    """
    params = dict(params or {})
    model = lb.model
    if kind == "sor":
        if method not in SOR_METHODS:
            raise DimensionError(f"unknown SOR method {method!r}; choose from {', '.join(SOR_METHODS)}")
        fn = SOR_METHODS[method]
        if method in ("lpvbr", "pvop"):
            params.setdefault("grid", _need(lb.grids, "train", "grid"))
        t0 = time.perf_counter()
        res = fn(model, r_x=dim, **params)
    elif kind == "sdr":
        if method not in SDR_METHODS:
            raise DimensionError(f"unknown SDR method {method!r}; choose from {', '.join(SDR_METHODS)}")
        fn = SDR_METHODS[method]
        if method == "sdrbr":
            t0 = time.perf_counter()
            res = fn(model, dim, **params)
        else:
            sched = collect_scheduling(training_trajectory(lb, data), model)
            t0 = time.perf_counter()
            res = fn(sched, model, dim, **params)
    else:
        raise DimensionError(f"reduction kind must be 'sor' or 'sdr', got {kind!r}")
    cpu = time.perf_counter() - t0
    return res, cpu


def save_result(res, cpu: float, path, **info) -> None:
    doc = res.to_dict()
    doc["cpu"] = cpu
    doc["info"] = _jsonable(info)
    Path(path).write_text(json.dumps(doc) + "\n")


def load_result(path):
    path = Path(path)
    if not path.is_file():
        raise DimensionError(f"result file {path} does not exist")
    doc = json.loads(path.read_text())
    cls = SorResult if doc.get("kind") == "sor" else SdrResult
    return cls.from_dict(doc), doc


def simulate_bundle(lb: LoadedBundle, signal: str, result=None) -> Trajectory:
    """Nonlinear response (``result`` is None) or self-scheduled reduced response to ``signal``."""
    u = _need(lb.inputs, signal, "signal")
    if result is None:
        return simulate(lb.bundle.nl, u, eta=lb.bundle.eta)
    if isinstance(result, AffineLpvSs):
        return simulate(SelfScheduled(result, lb.bundle.eta), u)
    return simulate(result.self_scheduled(lb.bundle.eta), u)


def evaluate(lb: LoadedBundle, result, signal: str = "u_out", grid: str = "out"):
    """NRMSE on ``signal`` plus local errors on ``grid``.

    Returns the report and the reference and reduced trajectories.
    """
    ref = simulate_bundle(lb, signal)
    red = simulate_bundle(lb, signal, result)
    report = local_errors(lb.model, result, _need(lb.grids, grid, "grid"))
    report = MetricReport(report.points, report.lambda2, report.lambdainf, report.stable, report.feedthrough,
                          nrmse(ref.y, red.y))
    return report, ref, red


def write_report(report: MetricReport, stem, label: dict) -> dict:
    """Per-point CSV ``<stem>_points.csv`` and one-row ``<stem>_summary.csv``."""
    stem = Path(stem)
    report.to_csv(f"{stem}_points.csv")
    summary = report.summary
    header = list(label) + list(SUMMARY_KEYS)
    with open(f"{stem}_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerow([str(v) for v in label.values()] + [_fmt(summary[k]) for k in SUMMARY_KEYS])
    return summary


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


TABLE_HEADER = ("benchmark", "kind", "method", "dim", "cpu") + SUMMARY_KEYS


def write_table(rows, path) -> None:
    """Aggregate table; ``rows`` are dicts with the keys of ``TABLE_HEADER``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for r in rows:
            w.writerow([r[k] if k in ("benchmark", "kind", "method", "dim") else _fmt(r[k]) for k in TABLE_HEADER])


@dataclass
class ExperimentSpec:
    """One (benchmark, method) cell; ``seed`` drives signals, grids and training."""

    benchmark: str
    kind: str
    method: str
    dim: int
    seed: int
    out_dir: str = "."
    params: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    signal: str = "u_out"
    grid: str = "out"


def run_experiment(spec: ExperimentSpec) -> dict:
    """Bundle, reduce, evaluate and write all artifacts of one cell; returns its table row."""
    out = Path(spec.out_dir)
    bundle_path = out / f"{spec.benchmark}.json"
    if not bundle_path.is_file():
        write_bundle(spec.benchmark, spec.seed, out, **spec.overrides)
    lb = load_bundle(bundle_path)
    if lb.seed != spec.seed:
        raise DimensionError(f"{bundle_path} was generated with seed {lb.seed}, not {spec.seed}")
    res, cpu = reduce(lb, spec.kind, spec.method, spec.dim, spec.params)
    stem = out / f"{spec.benchmark}_{spec.kind}_{spec.method}_{spec.dim}"
    save_result(res, cpu, f"{stem}.json", benchmark=spec.benchmark, seed=spec.seed, dim=spec.dim)
    report, ref, red = evaluate(lb, res, spec.signal, spec.grid)
    red.to_csv(f"{stem}_{spec.signal}.csv")
    label = {"benchmark": spec.benchmark, "kind": spec.kind, "method": spec.method, "dim": spec.dim}
    summary = write_report(report, stem, label)
    return {**label, "cpu": cpu, **summary}
