"""Plain-text file formats: trace CSVs, manifests, models, reports and sweeps.

Floats are written with ``repr`` so that reading a file back yields the very
same float64 values. Structured files are JSON.
"""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from . import neural
from .recognition import FidelityReport, ProbabilityTrace
from .simulate import IQTrace, RawTrace

RAW_HEADER = ("t_ns", "v")
IQ_HEADER = ("t_ns", "i", "q")
SWEEP_HEADER = ("phi_in_deg", "phi_pred_deg", "phi_oracle_deg")


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path, header, columns) -> Path:
    path = Path(path)
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def _read_rows(path, header) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        found = tuple(next(reader, ()))
        if found != tuple(header):
            raise ValueError(f"{path}: expected header {','.join(header)}, got {','.join(found)}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no samples")
    return np.array(rows, dtype=float)


def _time_grid(t: np.ndarray) -> tuple[float, float]:
    """Start and step reproducing the time column.

    The reproduction is exact whenever the step is a decimal of up to ten
    significant digits; otherwise the mean step is returned.
    """
    if len(t) == 1:
        return float(t[0]), 1.0
    idx = np.arange(len(t))
    raw = [t[1] - t[0], (t[-1] - t[0]) / (len(t) - 1)]
    # sampling steps are short decimals, so rounded steps come first
    candidates = [float(f"{d:.{digits}g}") for d in raw for digits in (6, 10, 15)] + raw
    for dt in candidates:
        if np.array_equal(t[0] + dt * idx, t):
            return float(t[0]), float(dt)
    return float(t[0]), float(raw[1])


def write_raw_trace(path, trace: RawTrace) -> Path:
    return _write_rows(path, RAW_HEADER, (trace.times, trace.samples))


def read_raw_trace(path, meta: str = "") -> RawTrace:
    data = _read_rows(path, RAW_HEADER)
    t0, dt = _time_grid(data[:, 0])
    return RawTrace(data[:, 1], dt, t0, meta)


def write_iq_trace(path, trace: IQTrace) -> Path:
    return _write_rows(path, IQ_HEADER, (trace.times, trace.i_samples, trace.q_samples))


def read_iq_trace(path, meta=(0.0, 0.0)) -> IQTrace:
    data = _read_rows(path, IQ_HEADER)
    t0, dt = _time_grid(data[:, 0])
    return IQTrace(data[:, 1], data[:, 2], dt, t0, tuple(meta))


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_manifest(path, entries: list[dict], params: dict) -> Path:
    """List of generated traces (``path`` relative to the manifest, plus labels)."""
    return write_json(path, {"params": params, "traces": entries})


def read_manifest(path) -> dict:
    data = read_json(path)
    if "traces" not in data:
        raise ValueError(f"{path} is not a trace manifest")
    root = Path(path).parent
    for entry in data["traces"]:
        entry["path"] = str(root / entry["path"])
    return data


def save_model(path, net: neural.DenseNetwork, meta: dict | None = None) -> Path:
    """Network file with an extra ``meta`` block (window length, normalization...)."""
    data = neural.network_to_dict(net)
    data["meta"] = meta or {}
    return write_json(path, data)


def load_model(path) -> tuple[neural.DenseNetwork, dict]:
    data = read_json(path)
    return neural.network_from_dict(data), data.get("meta", {})


def write_probability_trace(path, ptrace: ProbabilityTrace) -> Path:
    return _write_rows(path, ("t_start_ns", "t_center_ns", "p_e"),
                       (ptrace.times, ptrace.centers, ptrace.p_e))


def write_fidelity_report(stem, report: FidelityReport) -> tuple[Path, Path]:
    """``<stem>.json`` (matrix, averages, method) and ``<stem>.csv`` (``i,j,F_percent``)."""
    stem = Path(stem)
    data = report.to_dict()
    if report.p_rev is not None:
        data["p_rev"] = report.p_rev.tolist()
    js = write_json(stem.with_suffix(".json"), data)
    cs = stem.with_suffix(".csv")
    cs.write_text(report.to_csv())
    return js, cs


def write_sweep(stem, result) -> tuple[Path, Path]:
    """``<stem>.csv`` with one row per sweep point and ``<stem>_summary.json``."""
    stem = Path(stem)
    cs = _write_rows(stem.with_suffix(".csv"), SWEEP_HEADER,
                     (result.input_phases, result.predicted_phases, result.oracle_phases))
    summary = {"mode": result.mode, "slope": result.slope, "period": result.period,
               "bias": result.bias, "mean_abs_error": result.mean_abs_error,
               "n_points": int(len(result.input_phases))}
    js = write_json(stem.parent / f"{stem.name}_summary.json", summary)
    return cs, js


def read_sweep(path) -> np.ndarray:
    return _read_rows(path, SWEEP_HEADER)
