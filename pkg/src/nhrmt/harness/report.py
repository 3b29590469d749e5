"""Run reports: aggregation, JSON serialization and plot-data CSV."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CURVE_COLUMNS = {
    "decay": ("t", "empirical_mean", "empirical_stderr", "predicted"),
    "hermitian-decay": ("t", "empirical_mean", "empirical_stderr", "predicted"),
    "autocorr": ("tau", "empirical", "predicted", "relative_error"),
}


def aggregate(values) -> dict:
    """Mean, median and standard error of the finite entries."""
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"count": 0, "mean": None, "median": None, "stderr": None}
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else None
    return {"count": int(v.size), "mean": float(v.mean()), "median": float(np.median(v)),
            "stderr": se}


def _clean(obj):
    """Plain JSON types; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _clean(obj.real), "im": _clean(obj.imag)}
    return obj


@dataclass
class RunReport:
    experiment: str
    config: dict
    samples: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    predicted: object = None
    tolerance: dict = field(default_factory=dict)
    passed: bool | None = None
    provenance: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    criteria: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean({
            "experiment": self.experiment, "config": self.config, "samples": self.samples,
            "aggregate": self.aggregate, "predicted": self.predicted,
            "tolerance": self.tolerance, "passed": self.passed,
            "provenance": self.provenance, "curves": self.curves,
            "criteria": self.criteria, "details": self.details,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    @property
    def flagged(self) -> int:
        return sum(1 for r in self.samples if r.get("flagged"))


def write_report(report: RunReport, out_dir) -> list:
    """Write ``report.json``, ``samples.csv`` and plot data; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json"]
    paths[0].write_text(report.to_json())
    if report.samples:
        keys = sorted({k for r in report.samples for k in r})
        keys.remove("sample_index")
        keys = ["sample_index"] + keys
        path = out / "samples.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for r in report.samples:
                w.writerow({k: _csv_value(r.get(k)) for k in keys})
        paths.append(path)
    if report.curves:
        paths.append(emit_plot_data(report, out / "curve.csv"))
    return paths


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(_clean(v), sort_keys=True)
    return "" if v is None else v


def emit_plot_data(report: RunReport, path) -> Path:
    """Write the report's curve as a CSV with the documented column header.

    decay: ``t, empirical_mean, empirical_stderr, predicted``;
    autocorr: ``tau, empirical, predicted, relative_error``.
    Missing entries (e.g. prediction-only runs) are left blank.
    """
    if not report.curves:
        raise ValueError("no curve data")
    kind = report.curves.get("kind", report.experiment)
    cols = CURVE_COLUMNS.get(kind)
    if cols is None:
        raise ValueError(f"no plot schema for curve kind {kind!r}")
    data = [report.curves.get(c) for c in cols]
    length = len(data[0])
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(length):
            w.writerow(["" if d is None or d[i] is None or not np.isfinite(d[i]) else repr(float(d[i]))
                        for d in data])
    return path
