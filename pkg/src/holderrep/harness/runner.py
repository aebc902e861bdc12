"""Run an experiment, persist its outputs and re-aggregate them on demand.

Layout: ``<output_dir>/<config hash>/{manifest.json, summary.json, schema.json, paths/*.csv}``.
``summary.json`` depends only on the configuration and the build, so two runs
of the same configuration produce identical files; wall-clock time is kept in
``manifest.json``.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from .config import ExperimentConfig
from .experiments import EXPERIMENT_REGISTRY, SCHEMAS, Table

__all__ = ["RunReport", "run", "audit", "read_table", "AUDIT_TOL"]

AUDIT_TOL = 1e-12


@dataclass
class RunReport:
    config_hash: str
    run_dir: str
    csv_files: list
    summary: dict
    checks: dict
    wall_clock: float
    version: str = __version__
    audit_ok: bool | None = None
    audit_mismatches: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(float(v)) else repr(float(v))
    return str(v)


def write_table(file, table: Table) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])


def read_table(file) -> dict:
    """Columns as arrays: numeric where every entry parses (blank -> nan), strings otherwise."""
    with open(file, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        cols = [[] for _ in header]
        for row in r:
            for c, v in zip(cols, row):
                c.append(v)
    out = {}
    for name, vals in zip(header, cols):
        try:
            out[name] = np.array([float(v) if v != "" else np.nan for v in vals], dtype=float)
        except ValueError:
            out[name] = np.array(vals, dtype=object)
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return None if not math.isfinite(float(x)) else float(x)
    return x


def _dump(file, obj) -> None:
    with open(file, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _aggregate(cfg: ExperimentConfig, run_dir: str):
    _, agg = EXPERIMENT_REGISTRY[cfg.experiment]
    tables = {name: read_table(os.path.join(run_dir, "paths", f"{name}.csv"))
              for name in SCHEMAS[cfg.experiment]}
    summary, checks = agg(cfg, tables)
    return _jsonable(summary), _jsonable(checks)


def run(cfg: ExperimentConfig) -> RunReport:
    """Simulate, write per-path CSVs, then aggregate the summary from those CSVs."""
    compute, _ = EXPERIMENT_REGISTRY[cfg.experiment]
    run_dir = os.path.join(cfg.output_dir, cfg.hash)
    pdir = os.path.join(run_dir, "paths")
    os.makedirs(pdir, exist_ok=True)
    t0 = time.perf_counter()
    out = compute(cfg)
    files = []
    for name, table in out.tables.items():
        f = os.path.join(pdir, f"{name}.csv")
        write_table(f, table)
        files.append(f)
    for name, writer in sorted(out.extra_files.items()):
        f = os.path.join(pdir, name)
        writer(f)
        files.append(f)
    summary, checks = _aggregate(cfg, run_dir)
    wall = time.perf_counter() - t0
    _dump(os.path.join(run_dir, "summary.json"), {"summary": summary, "checks": checks})
    _dump(os.path.join(run_dir, "schema.json"), {"tables": SCHEMAS[cfg.experiment],
                                                  "extra_files": _EXTRA_SCHEMA})
    _dump(os.path.join(run_dir, "manifest.json"), {
        "experiment": cfg.experiment, "config": cfg.canonical(), "config_hash": cfg.hash,
        "version": __version__, "wall_clock_seconds": wall,
        "files": sorted(os.path.relpath(f, run_dir) for f in files),
    })
    return RunReport(cfg.hash, run_dir, sorted(files), summary, checks, wall)


_EXTRA_SCHEMA = {
    "path_NNNN.csv": "columns t, x: a simulated path",
    "integrand_*.csv": "columns t, psi, segment_index, case_tag: an integrand on the grid",
}


def _compare(a, b, where: str, out: list) -> None:
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                out.append(f"{where}.{k}: missing")
            else:
                _compare(a[k], b[k], f"{where}.{k}", out)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            out.append(f"{where}: length {len(a)} != {len(b)}")
        for i, (x, y) in enumerate(zip(a, b)):
            _compare(x, y, f"{where}[{i}]", out)
    elif isinstance(a, bool) or isinstance(b, bool) or not isinstance(a, (int, float)) \
            or not isinstance(b, (int, float)):
        if a != b:
            out.append(f"{where}: {a!r} != {b!r}")
    elif abs(a - b) > AUDIT_TOL * max(1.0, abs(a), abs(b)):
        out.append(f"{where}: {a!r} != {b!r}")


def audit(cfg: ExperimentConfig) -> RunReport:
    """Re-aggregate the stored CSVs of a previous run and compare with its summary to 1e-12."""
    run_dir = os.path.join(cfg.output_dir, cfg.hash)
    with open(os.path.join(run_dir, "summary.json")) as fh:
        stored = json.load(fh)
    with open(os.path.join(run_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    t0 = time.perf_counter()
    summary, checks = _aggregate(cfg, run_dir)
    fresh = json.loads(json.dumps({"summary": summary, "checks": checks}))
    mism: list = []
    _compare(stored, fresh, "summary.json", mism)
    files = [os.path.join(run_dir, f) for f in manifest["files"]]
    rep = RunReport(cfg.hash, run_dir, files, summary, checks, time.perf_counter() - t0)
    rep.audit_ok = not mism
    rep.audit_mismatches = mism
    return rep
