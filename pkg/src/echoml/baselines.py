"""Conventional (non-clustering) bit-inference methods and the comparison table."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .phase import moving_rms
from .recognition import (
    METHOD_KMEANS,
    FidelityReport,
    ProbabilityTrace,
    classify_traces,
    fidelity_report,
    post_select,
    window_points,
)
from .simulate import (
    STRIDE,
    WINDOW_LEN,
    RawTrace,
    SequenceTiming,
    SignalModel,
    retrieval_windows,
)

METHOD_AVERAGE = "ANN + Average"
METHOD_MAX = "ANN + Max Search"
METHOD_ANN_PEAKS = "ANN + Find Peaks"
METHOD_RAW_PEAKS = "Find Peaks (raw)"
METHODS = (METHOD_KMEANS, METHOD_AVERAGE, METHOD_MAX, METHOD_ANN_PEAKS, METHOD_RAW_PEAKS)
# lowest default raw peak height, as a fraction of amp0; keeps noiseless runs
# from counting the ripple on an echo's far tail as a peak
RAW_HEIGHT_FLOOR = 0.05


def find_peaks(series, min_height: float | None = None, min_prominence: float = 0.0,
               min_distance: int = 1) -> np.ndarray:
    """Indices of local maxima passing height, prominence and spacing filters.

    A flat top counts once, at its first index, when both neighbours of the
    plateau are lower; the end points are never peaks. Prominence is the
    height above the higher of the two lowest points reached before meeting
    higher ground on each side (or the series end). Peaks closer than
    ``min_distance`` are thinned greedily, tallest first. ``min_height=None``
    keeps peaks of any height, negative ones included.
    """
    if min_prominence < 0 or min_distance < 0:
        raise ValueError("prominence and distance filters must be >= 0")
    y = np.asarray(series, dtype=float)
    n = len(y)
    peaks = []
    i = 1
    while i < n - 1:
        if y[i] > y[i - 1]:
            j = i
            while j + 1 < n and y[j + 1] == y[i]:
                j += 1
            if j + 1 < n and y[j + 1] < y[i]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    peaks = np.array([p for p in peaks if min_height is None or y[p] >= min_height],
                     dtype=int)

    if min_prominence > 0 and peaks.size:
        keep = []
        for p in peaks:
            left = y[:p][::-1]
            higher = np.nonzero(left > y[p])[0]
            left_min = left[:higher[0]].min() if higher.size else left.min()
            right = y[p + 1:]
            higher = np.nonzero(right > y[p])[0]
            right_min = right[:higher[0]].min() if higher.size else right.min()
            if y[p] - max(left_min, right_min) >= min_prominence:
                keep.append(p)
        peaks = np.array(keep, dtype=int)

    if min_distance > 1 and peaks.size > 1:
        order = peaks[np.argsort(-y[peaks], kind="stable")]
        kept = []
        for p in order:
            if all(abs(p - q) >= min_distance for q in kept):
                kept.append(p)
        peaks = np.sort(np.array(kept, dtype=int))
    return peaks


def trace_envelope(trace: RawTrace, carrier_mhz: float) -> np.ndarray:
    """Moving RMS over one carrier period."""
    period = 1.0 / (carrier_mhz * 1e-3 * trace.dt)
    return moving_rms(trace.samples, int(round(period)))


def _window_masks(times: np.ndarray, windows) -> list[np.ndarray]:
    return [(times >= lo) & (times < hi) for lo, hi in windows]


def threshold_peak_search(trace: RawTrace, threshold: float,
                          timing: SequenceTiming | None = None,
                          carrier_mhz: float = 90.0, envelope: str = "abs") -> np.ndarray:
    """1 for each retrieval window whose rectified signal maximum exceeds ``threshold``.

    ``envelope="abs"`` thresholds the rectified voltage ``|v|`` sample by
    sample, the plain user-set voltage threshold. ``envelope="rms"`` uses the
    moving RMS over one carrier period instead, which averages the noise down.
    """
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    if envelope not in ("abs", "rms"):
        raise ValueError(f"envelope must be 'abs' or 'rms', got {envelope!r}")
    timing = timing or SequenceTiming()
    env = np.abs(trace.samples) if envelope == "abs" else trace_envelope(trace, carrier_mhz)
    return np.array([float(env[m].max(initial=0.0) > threshold)
                     for m in _window_masks(trace.times, retrieval_windows(timing))])


def raw_find_peaks(trace: RawTrace, timing: SequenceTiming | None = None,
                   carrier_mhz: float = 90.0, min_height: float = 0.0,
                   min_prominence: float = 0.0, min_distance: int | None = None) -> np.ndarray:
    """1 for each retrieval window holding an envelope peak."""
    timing = timing or SequenceTiming()
    if min_distance is None:
        min_distance = int(round(timing.spacing / 2 / trace.dt))
    env = trace_envelope(trace, carrier_mhz)
    peak_times = trace.times[find_peaks(env, min_height, min_prominence, min_distance)]
    return np.array([float(np.any((peak_times >= lo) & (peak_times < hi)))
                     for lo, hi in retrieval_windows(timing)])


def _nonempty(points: list[np.ndarray]) -> list[np.ndarray]:
    for k, pts in enumerate(points):
        if pts.size == 0:
            raise ValueError(f"window {k + 1} holds no probability points")
    return points


def window_average(ptrace: ProbabilityTrace, windows) -> np.ndarray:
    return np.array([pts.mean() for pts in _nonempty(window_points(ptrace, windows))])


def window_max(ptrace: ProbabilityTrace, windows) -> np.ndarray:
    return np.array([pts.max() for pts in _nonempty(window_points(ptrace, windows))])


def ann_find_peaks(ptrace: ProbabilityTrace, windows, min_height: float = 0.5,
                   min_prominence: float = 0.5, min_distance: int | None = None) -> np.ndarray:
    """Per window, p_e at its tallest peak (0 when the window has none)."""
    if min_distance is None:
        lo, hi = windows[0]
        min_distance = max(int(round((hi - lo) / 2 / (ptrace.stride * ptrace.dt))), 1)
    peaks = find_peaks(ptrace.p_e, min_height, min_prominence, min_distance)
    centers = ptrace.centers[peaks]
    heights = ptrace.p_e[peaks]
    out = []
    for lo, hi in windows:
        inside = (centers >= lo) & (centers < hi)
        out.append(float(heights[inside].max()) if inside.any() else 0.0)
    return np.array(out)


@dataclass
class MethodScore:
    method: str
    success_percent: float
    f_avg: np.ndarray
    f_std: np.ndarray

    @classmethod
    def from_report(cls, report: FidelityReport) -> MethodScore:
        return cls(report.method, report.success_percent, report.f_avg, report.f_std)


@dataclass
class BaselineParams:
    """Knobs of the conventional methods; ``None`` picks the documented default."""

    raw_min_height: float | None = None  # default max(3 * noise_sigma, floor * amp0)
    raw_min_prominence: float = 0.0
    raw_min_distance: int | None = None  # default half the echo spacing
    pe_min_height: float = 0.5
    pe_min_prominence: float = 0.5
    pe_min_distance: int | None = None


def evaluate_methods(model, traces: Mapping[int, RawTrace], timing: SequenceTiming,
                     signal: SignalModel, window_len: int = WINDOW_LEN, stride: int = STRIDE,
                     seed: int = 0, params: BaselineParams | None = None,
                     methods=METHODS) -> dict[str, FidelityReport]:
    """Score every method on the same traces through the same fidelity code path."""
    params = params or BaselineParams()
    n_seq = 2 ** timing.n_slots
    missing = [j for j in range(n_seq) if j not in traces]
    if missing:
        raise KeyError(f"missing trace for sequence(s) {missing}")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown method(s) {sorted(unknown)}")
    windows = retrieval_windows(timing)
    ptraces = classify_traces(model, traces, window_len, stride)
    raw_height = params.raw_min_height
    if raw_height is None:
        raw_height = max(3 * signal.noise_sigma, RAW_HEIGHT_FLOOR * signal.amp0)
    selectors = {
        METHOD_KMEANS: lambda j: post_select(ptraces[j], windows, seed),
        METHOD_AVERAGE: lambda j: window_average(ptraces[j], windows),
        METHOD_MAX: lambda j: window_max(ptraces[j], windows),
        METHOD_ANN_PEAKS: lambda j: ann_find_peaks(ptraces[j], windows, params.pe_min_height,
                                                   params.pe_min_prominence,
                                                   params.pe_min_distance),
        METHOD_RAW_PEAKS: lambda j: raw_find_peaks(traces[j], timing, signal.carrier_mhz,
                                                   raw_height, params.raw_min_prominence,
                                                   params.raw_min_distance),
    }
    return {name: fidelity_report({j: selectors[name](j) for j in range(n_seq)}, name,
                                  timing.n_slots)
            for name in methods}


def scoreboard(model, traces: Mapping[int, RawTrace], timing: SequenceTiming | None = None,
               signal: SignalModel | None = None, **kwargs) -> list[MethodScore]:
    """Table of % success and mean fidelity per bit, clustering row first."""
    timing = timing or SequenceTiming()
    signal = signal or SignalModel()
    reports = evaluate_methods(model, traces, timing, signal, **kwargs)
    return [MethodScore.from_report(reports[name]) for name in METHODS if name in reports]


def scoreboard_csv(scores: list[MethodScore]) -> str:
    n_bits = len(scores[0].f_avg) if scores else 4
    head = ["method", "success_percent"]
    for i in range(1, n_bits + 1):
        head += [f"F{i}_avg", f"F{i}_std"]
    lines = [",".join(head)]
    for s in scores:
        cells = [s.method, repr(s.success_percent)]
        for avg, std in zip(s.f_avg, s.f_std):
            cells += [repr(float(avg)), repr(float(std))]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def scoreboard_text(scores: list[MethodScore]) -> str:
    n_bits = len(scores[0].f_avg) if scores else 4
    width = max([len(s.method) for s in scores] + [6])
    head = f"{'method':<{width}}  {'success%':>8}" + "".join(
        f"  {'F' + str(i):>13}" for i in range(1, n_bits + 1))
    rows = [head, "-" * len(head)]
    for s in scores:
        cells = "".join(f"  {a:6.1f} ± {d:4.1f}" for a, d in zip(s.f_avg, s.f_std))
        rows.append(f"{s.method:<{width}}  {s.success_percent:8.1f}{cells}")
    return "\n".join(rows) + "\n"
