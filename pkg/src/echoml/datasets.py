"""Labeled training sets drawn from the simulator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import minmax_normalize
from .phase import PhaseWindow, extract_echo_window, windows_to_features
from .simulate import (
    ECHO_LABEL_WIDTHS,
    WINDOW_LEN,
    BitSequence,
    HahnTiming,
    SequenceTiming,
    SignalModel,
    echo_phase,
    echo_schedule,
    storage_trace_span,
    synth_hahn,
    synth_storage_retrieval,
)


def window_center_times(t0: float, dt: float, starts, window_len: int) -> np.ndarray:
    """Time of the midpoint of windows beginning at sample indices ``starts``."""
    return t0 + dt * (np.asarray(starts, dtype=float) + (window_len - 1) / 2)


def echo_free_starts(seq: BitSequence, timing: SequenceTiming, model: SignalModel,
                     window_len: int, clearance: float | None = None) -> np.ndarray:
    """Window starts whose midpoint is at least ``clearance`` ns (default half an
    echo spacing) from every echo."""
    clearance = timing.spacing / 2 if clearance is None else clearance
    t0, n = storage_trace_span(timing, model)
    starts = np.arange(n - window_len + 1)
    centers = window_center_times(t0, model.dt, starts, window_len)
    ok = np.ones(len(starts), dtype=bool)
    for echo in echo_schedule(seq, timing):
        ok &= np.abs(centers - echo.center) >= clearance
    return starts[ok]


def gen_classifier_dataset(n_per_class: int, window_len: int = WINDOW_LEN,
                           timing: SequenceTiming | None = None,
                           model: SignalModel | None = None,
                           rng_seed: int = 0,
                           normalize: bool = True,
                           echo_halfwidth: float | None = None,
                           noise_clearance: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Balanced windows labeled 1 (echo) or 0 (noise), shuffled.

    Echo windows are centered within ``echo_halfwidth`` ns (default: two
    envelope widths) of a scheduled echo of a random non-empty sequence.
    Noise windows come from the echo-free parts of a random sequence's trace.
    Every window is cut from its own noise realization. Windows are min-max
    scaled to [0, 1] unless ``normalize`` is false.
    """
    timing = timing or SequenceTiming()
    model = model or SignalModel()
    if window_len < model.samples_per_period:
        raise ValueError(f"window_len {window_len} is shorter than one carrier period")
    t0, n = storage_trace_span(timing, model)
    if window_len > n:
        raise ValueError(f"window_len {window_len} exceeds the trace length {n}")
    reach = ECHO_LABEL_WIDTHS * model.env_sigma if echo_halfwidth is None else echo_halfwidth
    rng = np.random.default_rng(rng_seed)
    n_seq = 2 ** timing.n_slots
    free = {j: echo_free_starts(BitSequence.from_decimal(j, timing.n_slots), timing, model,
                                window_len, noise_clearance) for j in range(n_seq)}
    if sum(len(v) > 0 for v in free.values()) == 0:
        raise ValueError("trace geometry leaves no echo-free region for noise windows")

    windows, labels = [], []
    half = (window_len - 1) / 2
    for _ in range(n_per_class):
        seq = BitSequence.from_decimal(int(rng.integers(1, n_seq)), timing.n_slots)
        echoes = echo_schedule(seq, timing)
        echo = echoes[int(rng.integers(len(echoes)))]
        center = echo.center + rng.uniform(-reach, reach)
        start = int(np.clip(round((center - t0) / model.dt - half), 0, n - window_len))
        trace = synth_storage_retrieval(seq, timing, model, int(rng.integers(2**63)))
        windows.append(trace.samples[start:start + window_len])
        labels.append(1)

        j = int(rng.choice([k for k, v in free.items() if len(v)]))
        start = int(rng.choice(free[j]))
        trace = synth_storage_retrieval(BitSequence.from_decimal(j, timing.n_slots), timing,
                                        model, int(rng.integers(2**63)))
        windows.append(trace.samples[start:start + window_len])
        labels.append(0)

    if not windows:
        return np.empty((0, window_len)), np.empty(0, dtype=int)
    order = rng.permutation(len(windows))
    X = np.asarray(windows)[order]
    return (minmax_normalize(X) if normalize else X), np.asarray(labels, dtype=int)[order]


@dataclass
class PhaseDataset:
    windows: list[PhaseWindow]
    targets: np.ndarray  # echo phase, degrees
    phi_half: np.ndarray

    @property
    def X(self) -> np.ndarray:
        return windows_to_features(self.windows)

    def __len__(self):
        return len(self.windows)


def gen_phase_dataset(sweep, timing: HahnTiming | None = None,
                      model: SignalModel | None = None, rng_seed: int = 0,
                      repeats: int = 1) -> PhaseDataset:
    """One I/Q window per pi/2 phase in ``sweep`` (pi phase 0), per repeat.

    Targets are the resulting echo phases, ``-phi_half mod 360``.
    """
    timing = timing or HahnTiming()
    model = model or SignalModel()
    sweep = np.asarray(sweep, dtype=float)
    if np.any((sweep < 0) | (sweep >= 360)):
        raise ValueError("sweep phases must lie in [0, 360)")
    phases = np.tile(sweep, repeats)
    seeds = np.random.SeedSequence(rng_seed).generate_state(len(phases))
    windows = [extract_echo_window(synth_hahn(p, 0.0, timing, model, int(s)), model.carrier_mhz)
               for p, s in zip(phases, seeds)]
    targets = np.array([echo_phase(p, 0.0) for p in phases])
    return PhaseDataset(windows, targets, phases)
