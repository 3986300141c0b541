"""Synthetic echo traces for the Storage/Retrieval and Hahn-echo experiments.

Time origin conventions:

* Storage/Retrieval: ``t = 0`` is the start of the first input pulse slot.
* Hahn: ``t = 0`` is the center of the pi/2 pulse, so the pi pulse is centered
  at ``tau`` and the echo at ``2 * tau``.

Every echo is a Gaussian envelope truncated at four widths, decayed by
``exp(-precession / t_m)`` and riding on the down-converted carrier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

SUPPORT_WIDTHS = 4.0
# classifier window geometry shared by dataset generation and recognition
WINDOW_LEN = 128
STRIDE = 16
ECHO_LABEL_WIDTHS = 2.0


@dataclass(frozen=True)
class SequenceTiming:
    """Pulse timings (ns) of the Storage/Retrieval protocol."""

    t_p: float = 40.0
    t_d: float = 300.0
    tau: float = 1200.0
    t_pi: float = 190.0
    n_slots: int = 4

    def __post_init__(self):
        for name in ("t_p", "t_d", "tau", "t_pi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.n_slots < 1:
            raise ValueError(f"n_slots must be >= 1, got {self.n_slots}")

    @property
    def spacing(self) -> float:
        return self.t_p + self.t_d

    def pulse_center(self, i: int) -> float:
        """Center time of input slot ``i`` (1-based, storage order)."""
        return (i - 1) * self.spacing + self.t_p / 2

    @property
    def pi_center(self) -> float:
        last_end = (self.n_slots - 1) * self.spacing + self.t_p
        return last_end + self.tau + self.t_pi / 2

    def echo_center(self, i: int) -> float:
        return 2 * self.pi_center - self.pulse_center(i)


@dataclass(frozen=True)
class HahnTiming:
    """Pulse timings (ns) of the two-pulse Hahn sequence; ``tau`` is center to center."""

    t_pi2: float = 145.0
    t_pi: float = 180.0
    tau: float = 750.0

    def __post_init__(self):
        for name in ("t_pi2", "t_pi", "tau"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")

    @property
    def echo_center(self) -> float:
        return 2 * self.tau


@dataclass(frozen=True)
class SignalModel:
    """Phenomenological echo model shared by both experiments.

    Parameters
    ----------
    amp0 : float
        Echo peak amplitude at zero precession time.
    t_m : float
        Phase memory time (ns).
    env_sigma : float
        Width of the Gaussian echo envelope (ns).
    carrier_mhz : float
        Down-converted carrier frequency.
    noise_sigma : float
        Standard deviation of additive white noise.
    dt : float
        Sample interval (ns).
    """

    amp0: float = 1.0
    t_m: float = 2500.0
    env_sigma: float = 60.0
    carrier_mhz: float = 90.0
    noise_sigma: float = 0.05
    dt: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("amp0", "t_m", "env_sigma", "dt"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.carrier_mhz > 0:
            raise ValueError(f"carrier_mhz must be > 0, got {self.carrier_mhz}")
        if self.samples_per_period < 4:
            raise ValueError(
                f"carrier {self.carrier_mhz} MHz at dt={self.dt} ns gives "
                f"{self.samples_per_period:.2f} samples per period; need >= 4"
            )

    @property
    def carrier_ghz(self) -> float:
        # times are in ns, so the phase argument is 2*pi*f[GHz]*t[ns]
        return self.carrier_mhz * 1e-3

    @property
    def samples_per_period(self) -> float:
        return 1.0 / (self.carrier_ghz * self.dt)

    def decay(self, precession: float) -> float:
        return self.amp0 * np.exp(-precession / self.t_m)


@dataclass(frozen=True)
class BitSequence:
    """Four stored bits, ``bits[0]`` is input slot i=1 (most significant)."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"bits must be 0/1, got {self.bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_decimal(cls, j: int, n_bits: int = 4) -> BitSequence:
        if not 0 <= j < 2**n_bits:
            raise ValueError(f"sequence number {j} out of range for {n_bits} bits")
        return cls(tuple(int(c) for c in format(j, f"0{n_bits}b")))

    @classmethod
    def from_string(cls, s: str) -> BitSequence:
        return cls(tuple(int(c) for c in s.strip()))

    @property
    def decimal(self) -> int:
        return int("".join(map(str, self.bits)), 2)

    def __len__(self):
        return len(self.bits)

    def __str__(self):
        return "".join(map(str, self.bits))


@dataclass
class RawTrace:
    samples: np.ndarray
    dt: float
    t0: float
    meta: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("RawTrace needs a non-empty 1-D sample vector")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    def __len__(self):
        return self.samples.size


@dataclass
class IQTrace:
    i_samples: np.ndarray
    q_samples: np.ndarray
    dt: float
    t0: float
    meta: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        self.i_samples = np.asarray(self.i_samples, dtype=float)
        self.q_samples = np.asarray(self.q_samples, dtype=float)
        if self.i_samples.shape != self.q_samples.shape or self.i_samples.ndim != 1:
            raise ValueError("I and Q channels must be 1-D and of equal length")
        if self.i_samples.size == 0:
            raise ValueError("IQTrace needs at least one sample")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.i_samples.size)

    def __len__(self):
        return self.i_samples.size


class ScheduledEcho(NamedTuple):
    center: float
    precession: float
    source: int


def echo_schedule(seq: BitSequence, timing: SequenceTiming) -> list[ScheduledEcho]:
    """Echoes produced by ``seq``, in retrieval (time) order."""
    echoes = []
    for i, bit in enumerate(seq.bits, start=1):
        if bit:
            center = timing.echo_center(i)
            echoes.append(ScheduledEcho(center, center - timing.pulse_center(i), i))
    echoes.sort(key=lambda e: e.center)
    if echoes and echoes[0].center <= 0:
        raise ValueError("timing places an echo at a non-positive time")
    return echoes


def retrieval_windows(timing: SequenceTiming) -> list[tuple[float, float]]:
    """Equal-width post-selection windows around each possible echo, in time order."""
    half = timing.spacing / 2
    centers = sorted(timing.echo_center(i) for i in range(1, timing.n_slots + 1))
    return [(c - half, c + half) for c in centers]


def storage_trace_span(timing: SequenceTiming, model: SignalModel) -> tuple[float, int]:
    """Start time and sample count shared by every Storage/Retrieval trace."""
    windows = retrieval_windows(timing)
    margin = SUPPORT_WIDTHS * model.env_sigma
    start = windows[0][0] - margin
    stop = windows[-1][1] + margin
    return start, int(np.floor((stop - start) / model.dt)) + 1


def hahn_trace_span(timing: HahnTiming, model: SignalModel) -> tuple[float, int]:
    margin = SUPPORT_WIDTHS * model.env_sigma + 40 * model.dt
    start = timing.echo_center - margin
    return start, int(np.floor(2 * margin / model.dt)) + 1


def echo_envelope(t: np.ndarray, center: float, amplitude: float, sigma: float) -> np.ndarray:
    x = t - center
    env = amplitude * np.exp(-0.5 * (x / sigma) ** 2)
    env[np.abs(x) > SUPPORT_WIDTHS * sigma] = 0.0
    return env


def _noise(rng_seed: int, shape, sigma: float) -> np.ndarray:
    if sigma == 0:
        return np.zeros(shape)
    return np.random.default_rng(rng_seed).normal(0.0, sigma, size=shape)


def storage_envelope(seq: BitSequence, timing: SequenceTiming, model: SignalModel,
                     t: np.ndarray) -> np.ndarray:
    env = np.zeros_like(t)
    for echo in echo_schedule(seq, timing):
        env += echo_envelope(t, echo.center, model.decay(echo.precession), model.env_sigma)
    return env


def synth_storage_retrieval(seq: BitSequence, timing: SequenceTiming, model: SignalModel,
                            rng_seed: int = 0) -> RawTrace:
    """Retrieved echo train of ``seq`` plus white noise."""
    model.validate()
    t0, n = storage_trace_span(timing, model)
    t = t0 + model.dt * np.arange(n)
    clean = storage_envelope(seq, timing, model, t) * np.cos(2 * np.pi * model.carrier_ghz * t)
    return RawTrace(clean + _noise(rng_seed, n, model.noise_sigma), model.dt, t0, meta=str(seq))


def echo_phase(phi_half: float, phi_pi: float) -> float:
    """Echo phase (degrees, [0, 360)) after refocusing: ``2*phi_pi - phi_half``."""
    return float((2.0 * phi_pi - phi_half) % 360.0)


def synth_hahn(phi_half: float, phi_pi: float, timing: HahnTiming, model: SignalModel,
               rng_seed: int = 0) -> IQTrace:
    """I/Q mixer output of a Hahn echo with pulse phases ``phi_half`` and ``phi_pi`` (degrees)."""
    model.validate()
    t0, n = hahn_trace_span(timing, model)
    t = t0 + model.dt * np.arange(n)
    amp = echo_envelope(t, timing.echo_center, model.decay(2 * timing.tau), model.env_sigma)
    theta = 2 * np.pi * model.carrier_ghz * t + np.deg2rad(echo_phase(phi_half, phi_pi))
    noise = _noise(rng_seed, (2, n), model.noise_sigma)
    return IQTrace(amp * np.cos(theta) + noise[0], amp * np.sin(theta) + noise[1],
                   model.dt, t0, meta=(float(phi_half), float(phi_pi)))
