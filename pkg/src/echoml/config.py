"""Run configuration: flat ``key = value`` files, overrides and seed derivation."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, get_type_hints

from .baselines import BaselineParams
from .neural import TrainConfig
from .simulate import (
    ECHO_LABEL_WIDTHS,
    STRIDE,
    WINDOW_LEN,
    HahnTiming,
    SequenceTiming,
    SignalModel,
)

AUTO = "auto"


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a command-line run, with its default.

    Optional fields accept ``auto`` and then fall back to the documented rule
    (see :class:`echoml.baselines.BaselineParams`).
    """

    seed: int = 0
    out: str = "out"
    # signal model
    amp0: float = 1.0
    t_m: float = 2500.0
    env_sigma: float = 60.0
    carrier_mhz: float = 90.0
    noise: float = 0.05
    dt: float = 1.0
    # storage/retrieval timing
    t_p: float = 40.0
    t_d: float = 300.0
    tau: float = 1200.0
    t_pi: float = 190.0
    # Hahn timing
    hahn_t_pi2: float = 145.0
    hahn_t_pi: float = 180.0
    hahn_tau: float = 750.0
    # windowing and classifier training
    window_len: int = WINDOW_LEN
    stride: int = STRIDE
    echo_label_widths: float = ECHO_LABEL_WIDTHS
    n_per_class: int = 5000
    clf_hidden: str = "32,16"
    clf_epochs: int = 100
    clf_batch_size: int = 32
    clf_learning_rate: float = 1e-3
    clf_validation_fraction: float = 0.2
    # phase regressor training
    phase_hidden: str = "64,32"
    phase_epochs: int = 1500
    phase_batch_size: int = 32
    phase_learning_rate: float = 1e-3
    phase_validation_fraction: float = 0.1
    phase_train_step: float = 2.0
    phase_repeats: int = 1
    # post-selection and conventional methods
    kmeans_n_init: int = 5
    kmeans_max_iter: int = 50
    raw_min_height: Optional[float] = None
    raw_min_prominence: float = 0.0
    raw_min_distance: Optional[int] = None
    pe_min_height: float = 0.5
    pe_min_prominence: float = 0.5
    pe_min_distance: Optional[int] = None

    def __post_init__(self):
        for name in ("window_len", "stride", "n_per_class", "phase_repeats", "kmeans_n_init",
                     "kmeans_max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.phase_train_step > 0:
            raise ValueError("phase_train_step must be > 0")
        parse_hidden(self.clf_hidden)
        parse_hidden(self.phase_hidden)

    # views onto the library's own parameter objects

    def signal_model(self) -> SignalModel:
        return SignalModel(self.amp0, self.t_m, self.env_sigma, self.carrier_mhz,
                           self.noise, self.dt)

    def sequence_timing(self) -> SequenceTiming:
        return SequenceTiming(self.t_p, self.t_d, self.tau, self.t_pi)

    def hahn_timing(self) -> HahnTiming:
        return HahnTiming(self.hahn_t_pi2, self.hahn_t_pi, self.hahn_tau)

    def baseline_params(self) -> BaselineParams:
        return BaselineParams(self.raw_min_height, self.raw_min_prominence,
                              self.raw_min_distance, self.pe_min_height,
                              self.pe_min_prominence, self.pe_min_distance)

    def train_config(self, head: str, seed: int) -> TrainConfig:
        p = "clf" if head == "classifier" else "phase"
        return TrainConfig(epochs=getattr(self, f"{p}_epochs"),
                           batch_size=getattr(self, f"{p}_batch_size"),
                           learning_rate=getattr(self, f"{p}_learning_rate"),
                           validation_fraction=getattr(self, f"{p}_validation_fraction"),
                           seed=seed)

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            lines.append(f"{key} = {format_value(value)}")
        return "\n".join(lines) + "\n"


def parse_hidden(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(s) for s in str(text).split(",") if s.strip())
    except ValueError:
        raise ValueError(f"hidden layer sizes must be comma-separated integers, got {text!r}")
    if not sizes or min(sizes) < 1:
        raise ValueError(f"hidden layer sizes must be positive, got {text!r}")
    return sizes


def format_value(value) -> str:
    if value is None:
        return AUTO
    if isinstance(value, float):
        return repr(value)
    return str(value)


_TYPES = get_type_hints(RunConfig)


def config_keys() -> list[str]:
    return [f.name for f in fields(RunConfig)]


def parse_value(key: str, text: str):
    """Convert ``text`` to the type of field ``key``."""
    if key not in _TYPES:
        raise KeyError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    text = str(text).strip()
    optional = kind in (Optional[int], Optional[float])
    if optional:
        if text.lower() in (AUTO, "none", ""):
            return None
        kind = int if kind == Optional[int] else float
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ValueError(f"config key {key!r} expects {kind.__name__}, got {text!r}")
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise KeyError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = parse_value(key, value)
    return values


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (already typed or text)."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(), str(path)))
    for key, value in (overrides or {}).items():
        if key not in _TYPES:
            raise KeyError(f"unknown config key {key!r}")
        values[key] = parse_value(key, value) if isinstance(value, str) else value
    return replace(RunConfig(), **values)


def derive_seed(seed: int, label: str) -> int:
    """Seed for one task: SHA-256 of ``"<seed>/<label>"``, first 8 bytes, top bit cleared.

    Streams depend only on the global seed and their own label, so adding a
    task never shifts the random numbers of another.
    """
    digest = hashlib.sha256(f"{int(seed)}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1
