"""Command-line entry point: ``echoml {simulate,train,recognize,benchmark,phase}``.

Every command resolves its configuration (defaults, then ``--config`` file,
then command-line flags), echoes it to stdout and to ``<out>/config.txt``,
and writes deterministic outputs for a given ``--seed``.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .baselines import evaluate_methods, MethodScore, METHODS, scoreboard_csv, scoreboard_text
from .config import RunConfig, config_keys, derive_seed, load_config, parse_hidden
from .datasets import gen_classifier_dataset, gen_phase_dataset
from .estimators import EchoClassifier, PhaseRegressor, angular_error
from .neural import split_indices
from .phase import sweep_pi, sweep_pi2
from .recognition import (
    METHOD_KMEANS,
    classify_traces,
    fidelity_report,
    post_select,
)
from .simulate import BitSequence, retrieval_windows, synth_hahn, synth_storage_retrieval

GLOBAL_FLAGS = {"config", "seed", "out", "noise"}


class CommandError(RuntimeError):
    """A user-facing failure: bad input, missing file or unwritable output."""


# ---------------------------------------------------------------------------
# shared building blocks


def parse_range(text: str) -> np.ndarray:
    """``start:stop:step`` in degrees, stop excluded, e.g. ``0:360:2`` (180 points)."""
    try:
        start, stop, step = (float(s) for s in text.split(":"))
    except ValueError:
        raise CommandError(f"expected start:stop:step, got {text!r}")
    if not step > 0 or stop <= start:
        raise CommandError(f"range {text!r} needs step > 0 and stop > start")
    n = math.ceil((stop - start) / step - 1e-9)
    return start + step * np.arange(n)


def storage_traces(cfg: RunConfig, sequences=None) -> dict:
    timing, model = cfg.sequence_timing(), cfg.signal_model()
    sequences = range(2 ** timing.n_slots) if sequences is None else sequences
    return {j: synth_storage_retrieval(BitSequence.from_decimal(j, timing.n_slots), timing,
                                       model, derive_seed(cfg.seed, f"storage/{j}"))
            for j in sequences}


def train_classifier(cfg: RunConfig) -> EchoClassifier:
    model = cfg.signal_model()
    X, y = gen_classifier_dataset(cfg.n_per_class, cfg.window_len, cfg.sequence_timing(),
                                  model, derive_seed(cfg.seed, "classifier/data"),
                                  normalize=False,
                                  echo_halfwidth=cfg.echo_label_widths * model.env_sigma)
    tc = cfg.train_config("classifier", derive_seed(cfg.seed, "classifier/train"))
    clf = EchoClassifier(parse_hidden(cfg.clf_hidden), tc.epochs, tc.batch_size,
                         tc.learning_rate, validation_fraction=tc.validation_fraction,
                         random_state=tc.seed)
    return clf.fit(X, y)


def phase_training_sweep(cfg: RunConfig) -> np.ndarray:
    return cfg.phase_train_step * np.arange(math.ceil(360.0 / cfg.phase_train_step - 1e-9))


def train_phase(cfg: RunConfig) -> tuple[PhaseRegressor, float]:
    """Fitted regressor and its mean angular error (degrees) on the held-out split."""
    data = gen_phase_dataset(phase_training_sweep(cfg), cfg.hahn_timing(), cfg.signal_model(),
                             derive_seed(cfg.seed, "phase/data"), cfg.phase_repeats)
    tc = cfg.train_config("phase", derive_seed(cfg.seed, "phase/train"))
    reg = PhaseRegressor(parse_hidden(cfg.phase_hidden), tc.epochs, tc.batch_size,
                         tc.learning_rate, validation_fraction=tc.validation_fraction,
                         random_state=tc.seed)
    X = data.X
    reg.fit(X, data.targets)
    _, val = split_indices(len(X), tc.validation_fraction, tc.seed)
    val = val if len(val) else np.arange(len(X))
    mae = float(np.mean(angular_error(reg.predict(X[val]), data.targets[val])))
    return reg, mae


def load_classifier(path, cfg: RunConfig) -> EchoClassifier:
    net, meta = load_model_file(path, "classifier")
    if net.n_inputs != cfg.window_len:
        raise CommandError(f"model {path} takes {net.n_inputs}-sample windows but "
                           f"window_len is {cfg.window_len}")
    return EchoClassifier.from_network(net)


def load_regressor(path) -> PhaseRegressor:
    net, _ = load_model_file(path, "regressor")
    return PhaseRegressor.from_network(net)


def load_model_file(path, head: str):
    path = Path(path)
    if not path.is_file():
        raise CommandError(f"model file {path} does not exist")
    net, meta = io.load_model(path)
    if net.head != head:
        raise CommandError(f"model {path} has a {net.head} head; this command needs {head}")
    return net, meta


def read_trace_dir(directory, n_seq: int) -> dict:
    """Storage traces listed in ``<directory>/manifest.json``, keyed by sequence number."""
    manifest = Path(directory) / "manifest.json"
    if not manifest.is_file():
        raise CommandError(f"no manifest.json in {directory}")
    traces = {}
    for entry in io.read_manifest(manifest)["traces"]:
        # a listed file that is gone counts as missing
        if "seq" in entry and Path(entry["path"]).is_file():
            traces[int(entry["seq"])] = io.read_raw_trace(entry["path"], entry.get("bits", ""))
    missing = [j for j in range(n_seq) if j not in traces]
    if missing:
        names = ", ".join(f"j={j} ({BitSequence.from_decimal(j)})" for j in missing)
        raise CommandError(f"missing trace for sequence {names} in {directory}")
    return traces


def check_outputs(paths) -> None:
    for path in paths:
        path = Path(path)
        if not path.is_file() or path.stat().st_size == 0:
            raise CommandError(f"output {path} was not written")


def _prepare_out(cfg: RunConfig, *sub) -> Path:
    out = Path(cfg.out, *sub)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CommandError(f"cannot write to output directory {out}: {exc}")
    return out


def echo_config(cfg: RunConfig) -> Path:
    out = _prepare_out(cfg)
    text = cfg.to_text()
    print("# resolved configuration")
    print(text, end="")
    path = out / "config.txt"
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, args) -> list[Path]:
    if args.which == "storage-retrieval":
        return _simulate_storage(cfg, args)
    return _simulate_hahn(cfg, args)


def _simulate_storage(cfg: RunConfig, args) -> list[Path]:
    timing = cfg.sequence_timing()
    n_seq = 2 ** timing.n_slots
    if args.all:
        sequences = list(range(n_seq))
    elif args.seq is not None:
        if not 0 <= args.seq < n_seq:
            raise CommandError(f"--seq must lie in 0..{n_seq - 1}, got {args.seq}")
        sequences = [args.seq]
    else:
        raise CommandError("simulate storage-retrieval needs --seq J or --all")
    out = _prepare_out(cfg, "traces")
    entries, written = [], []
    for j, trace in storage_traces(cfg, sequences).items():
        name = f"storage_j{j:02d}.csv"
        written.append(io.write_raw_trace(out / name, trace))
        entries.append({"path": name, "seq": j, "bits": trace.meta,
                        "seed": derive_seed(cfg.seed, f"storage/{j}")})
    params = {"kind": "storage-retrieval", "timing": vars(timing),
              "model": vars(cfg.signal_model()), "seed": cfg.seed}
    written.append(io.write_manifest(out / "manifest.json", entries, params))
    print(f"wrote {len(entries)} storage-retrieval trace(s) to {out}")
    return written


def _simulate_hahn(cfg: RunConfig, args) -> list[Path]:
    if (args.sweep_pi2 is None) == (args.sweep_pi is None):
        raise CommandError("simulate hahn needs exactly one of --sweep-pi2 or --sweep-pi")
    mode = "pi2" if args.sweep_pi2 is not None else "pi"
    phases = parse_range(args.sweep_pi2 if mode == "pi2" else args.sweep_pi)
    timing, model = cfg.hahn_timing(), cfg.signal_model()
    out = _prepare_out(cfg, "traces")
    entries, written = [], []
    for k, phi in enumerate(phases):
        phi_half, phi_pi = (phi + args.bias, 0.0) if mode == "pi2" else (0.0, phi)
        seed = derive_seed(cfg.seed, f"hahn/{mode}/{k}")
        trace = synth_hahn(phi_half, phi_pi, timing, model, seed)
        name = f"hahn_{mode}_{k:04d}.csv"
        written.append(io.write_iq_trace(out / name, trace))
        entries.append({"path": name, "phi_half": float(phi_half), "phi_pi": float(phi_pi),
                        "seed": seed})
    params = {"kind": f"hahn-sweep-{mode}", "bias": args.bias, "timing": vars(timing),
              "model": vars(model), "seed": cfg.seed}
    written.append(io.write_manifest(out / f"manifest_hahn_{mode}.json", entries, params))
    print(f"wrote {len(entries)} Hahn I/Q trace(s) to {out}")
    return written


def cmd_train(cfg: RunConfig, args) -> list[Path]:
    out = _prepare_out(cfg)
    if args.head == "classifier":
        clf = train_classifier(cfg)
        meta = {"window_len": cfg.window_len, "normalization": "minmax"}
        model_path = io.save_model(out / "classifier.json", clf.network_, meta)
        report = clf.report_
        print(f"J = {report.final_test_loss:.6g}  accuracy = {report.accuracy:.4f}  "
              f"wall time = {report.wall_time:.1f} s")
        summary = {"final_test_loss": report.final_test_loss, "accuracy": report.accuracy,
                   "loss_history": report.loss_history}
    else:
        reg, mae = train_phase(cfg)
        meta = {"window": "80+80 I/Q", "normalization": "joint max-abs",
                "target": "cos,sin of echo phase"}
        model_path = io.save_model(out / "phase.json", reg.network_, meta)
        report = reg.report_
        print(f"J = {report.final_test_loss:.6g}  held-out angular MAE = {mae:.2f} deg  "
              f"wall time = {report.wall_time:.1f} s")
        summary = {"final_test_loss": report.final_test_loss, "held_out_mae_deg": mae,
                   "loss_history": report.loss_history}
    # wall time is printed only, so the report file is reproducible byte for byte
    report_path = io.write_json(out / f"{model_path.stem}_report.json", summary)
    return [model_path, report_path]


def _classifier_for(cfg: RunConfig, args) -> EchoClassifier:
    if args.model:
        return load_classifier(args.model, cfg)
    print("no --model given; training a classifier with the resolved configuration")
    return train_classifier(cfg)


def _traces_for(cfg: RunConfig, args) -> dict:
    n_seq = 2 ** cfg.sequence_timing().n_slots
    if getattr(args, "traces", None):
        return read_trace_dir(args.traces, n_seq)
    return storage_traces(cfg)


def cmd_recognize(cfg: RunConfig, args) -> list[Path]:
    clf = _classifier_for(cfg, args)
    traces = _traces_for(cfg, args)
    timing = cfg.sequence_timing()
    windows = retrieval_windows(timing)
    out = _prepare_out(cfg, "recognition")
    ptraces = classify_traces(clf, traces, cfg.window_len, cfg.stride)
    seed = derive_seed(cfg.seed, "kmeans")
    probs = {j: post_select(pt, windows, seed, cfg.kmeans_n_init, cfg.kmeans_max_iter)
             for j, pt in ptraces.items()}
    report = fidelity_report(probs, METHOD_KMEANS, timing.n_slots)
    written = [io.write_probability_trace(out / f"ptrace_j{j:02d}.csv", pt)
               for j, pt in ptraces.items()]
    written += io.write_fidelity_report(out / "fidelity", report)
    print(f"{report.n_correct}/{report.f.size} bits correct, "
          f"success {report.success_percent:.1f}%")
    for i, (avg, std) in enumerate(zip(report.f_avg, report.f_std), start=1):
        print(f"  F{i} = {avg:6.2f} +/- {std:5.2f} %")
    return written


def cmd_benchmark(cfg: RunConfig, args) -> list[Path]:
    clf = _classifier_for(cfg, args)
    traces = _traces_for(cfg, args)
    reports = evaluate_methods(clf, traces, cfg.sequence_timing(), cfg.signal_model(),
                               cfg.window_len, cfg.stride, derive_seed(cfg.seed, "kmeans"),
                               cfg.baseline_params())
    scores = [MethodScore.from_report(reports[name]) for name in METHODS]
    out = _prepare_out(cfg, "benchmark")
    text = scoreboard_text(scores)
    print(text, end="")
    csv_path = out / "scoreboard.csv"
    csv_path.write_text(scoreboard_csv(scores))
    txt_path = out / "scoreboard.txt"
    txt_path.write_text(text)
    return [csv_path, txt_path]


def cmd_phase(cfg: RunConfig, args) -> list[Path]:
    if args.model:
        reg = load_regressor(args.model)
    else:
        print("no --model given; training a phase regressor with the resolved configuration")
        reg, mae = train_phase(cfg)
        print(f"held-out angular MAE = {mae:.2f} deg")
    phases = parse_range(f"0:360:{args.steps}")
    label = f"phase/{args.mode}/{args.bias!r}/{args.steps!r}"
    seed = derive_seed(cfg.seed, label)
    timing, model = cfg.hahn_timing(), cfg.signal_model()
    if args.mode == "sweep-pi2":
        result = sweep_pi2(reg, phases, args.bias, timing, model, seed)
    else:
        if args.bias:
            raise CommandError("--bias applies to sweep-pi2 only")
        result = sweep_pi(reg, phases, timing, model, seed)
    out = _prepare_out(cfg, "phase")
    stem = out / f"{args.mode}_bias{args.bias:g}_step{args.steps:g}"
    written = list(io.write_sweep(stem, result))
    print(f"slope = {result.slope:.4f}  period = {result.period:.1f} deg  "
          f"bias = {result.bias:.1f} deg  MAE vs oracle = {result.mean_abs_error:.2f} deg")
    return written


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "recognize": cmd_recognize,
            "benchmark": cmd_benchmark, "phase": cmd_phase}


# ---------------------------------------------------------------------------
# argument parsing


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("global options")
    # SUPPRESS keeps a subcommand's unset flag from hiding one given before it
    group.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                       help="flat key = value configuration file")
    group.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="global seed")
    group.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                       help="output directory")
    group.add_argument("--noise", type=float, metavar="SIGMA", default=argparse.SUPPRESS,
                       help="white-noise standard deviation")
    extra = common.add_argument_group("configuration overrides (any config key)")
    for key in config_keys():
        if key in GLOBAL_FLAGS:
            continue
        flags = [f"--{key.replace('_', '-')}"]
        if "_" in key:
            flags.append(f"--{key}")
        extra.add_argument(*flags, dest=f"cfg_{key}", metavar="VALUE",
                           default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="echoml", parents=[common],
        description="Spin-echo recognition and phase readout with small neural networks.",
        epilog="Any config key can be overridden as --key VALUE "
               "(e.g. --window-len 128 --t-m 2500).")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="write synthetic traces")
    sim_sub = sim.add_subparsers(dest="which", required=True)
    sr = sim_sub.add_parser("storage-retrieval", parents=[common],
                            help="echo trains of the 4-bit storage protocol")
    sr.add_argument("--seq", type=int, help="sequence number j (0-15)")
    sr.add_argument("--all", action="store_true", help="all 16 sequences")
    hahn = sim_sub.add_parser("hahn", parents=[common], help="Hahn-echo I/Q traces")
    hahn.add_argument("--sweep-pi2", metavar="A:B:S", help="sweep the pi/2 phase")
    hahn.add_argument("--sweep-pi", metavar="A:B:S", help="sweep the pi phase")
    hahn.add_argument("--bias", type=float, default=0.0, help="added pi/2 phase (degrees)")

    tr = sub.add_parser("train", parents=[common], help="train a network")
    tr.add_argument("head", choices=["classifier", "phase"])

    for name, help_text in (("recognize", "classify and score the 16 sequences"),
                            ("benchmark", "compare all bit-inference methods")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--model", metavar="PATH", help="classifier model file")
        p.add_argument("--traces", metavar="DIR",
                       help="directory with storage traces and manifest.json")

    ph = sub.add_parser("phase", parents=[common], help="phase sweep with a regressor")
    ph.add_argument("mode", choices=["sweep-pi2", "sweep-pi"])
    ph.add_argument("--model", metavar="PATH", help="phase regressor model file")
    ph.add_argument("--bias", type=float, default=0.0, help="added pi/2 phase (degrees)")
    ph.add_argument("--steps", type=float, default=3.0, help="sweep step (degrees)")
    return parser


def resolve_config(args) -> RunConfig:
    overrides = {key[4:]: value for key, value in vars(args).items() if key.startswith("cfg_")}
    for key in ("seed", "out", "noise"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    return load_config(getattr(args, "config", None), overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        config_path = echo_config(cfg)
        written = COMMANDS[args.command](cfg, args)
        check_outputs([config_path, *written])
    except (CommandError, KeyError, ValueError, OSError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"echoml {args.command}: error: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
