"""
Command-line front end.

Every subcommand reads and writes the line-oriented text formats of
``codesmux.formats``. All randomness comes from the single ``--seed`` flag.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

from . import formats
from .calibrate import ScalingTable, canonical_pulse_shape, estimate_scaling
from .codebook import SensorGeometry, generate_codebook, min_hamming_distance
from .decode import DecoderModel, decode_record
from .evaluate import (REPLAY_CHANNELS, REPLAY_WINDOW_S, ExperimentConfig, PipelineConfig,
                       build_pipeline, calibration_records, run_experiment, run_trial,
                       training_records)
from .speedknn import build_training_set, select_k
from .synth import (DEFAULT_SAMPLE_RATE_HZ, SynthConfig, noise_sigma_for_snr, random_scenario,
                    synthesize_record)


class CliError(Exception):
    def __init__(self, message, code=1):
        super().__init__(message)
        self.code = code


def _need(*paths):
    for p in paths:
        if p is not None and not os.path.exists(p):
            raise CliError(f"missing input file: {p}")


@dataclass
class RunConfig:
    """Files and settings that define a decoder."""

    codebook: str
    scaling: str
    training: str
    k: int | None = None
    k_report: str | None = None
    n_exact: int = 6
    beam_width: int = 64
    standardize: bool = True

    def load_model(self) -> DecoderModel:
        _need(self.codebook, self.scaling, self.training, self.k_report)
        book = formats.read_codebook(self.codebook)
        scaling, shape = formats.read_scaling(self.scaling)
        if shape is None:
            raise CliError(f"{self.scaling} has no 'shape' line; run calibrate to produce one")
        tset = formats.read_training(self.training)
        k = self.k
        if k is None:
            k = formats.read_k_report(self.k_report).k_star if self.k_report else 5
        return DecoderModel(book, scaling, shape, tset, k=k, n_exact=self.n_exact,
                            beam_width=self.beam_width, standardize=self.standardize)


def _model_args(p):
    p.add_argument("--codebook", required=True)
    p.add_argument("--scaling", required=True, help="calibrated scaling file with shape")
    p.add_argument("--training", required=True)
    p.add_argument("--k", type=int, help="neighbors (default: from --k-report, else 5)")
    p.add_argument("--k-report", help="select-k JSON report supplying k_star")
    p.add_argument("--n-exact", type=int, default=6)
    p.add_argument("--beam-width", type=int, default=64)
    p.add_argument("--raw-distance", action="store_true",
                   help="K-NN on raw features instead of z-scored ones")


def _run_config(a) -> RunConfig:
    return RunConfig(a.codebook, a.scaling, a.training, a.k, a.k_report, a.n_exact,
                     a.beam_width, not a.raw_distance)


def _positive(x):
    v = float(x)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{x} is not positive")
    return v


def _non_negative(x):
    v = float(x)
    if v < 0:
        raise argparse.ArgumentTypeError(f"{x} is negative")
    return v


def _events_path(out):
    root, _ = os.path.splitext(out)
    return root + ".events.csv"


# subcommands

def cmd_gen_codebook(a):
    geom = SensorGeometry(a.electrode_width_um, a.bit_pitch_um, a.pre_offset_um, a.sensing_zone_um)
    try:
        book = generate_codebook(a.sensors, a.bits, geom)
    except ValueError as exc:
        raise CliError(str(exc), code=2) from None
    formats.write_codebook(a.out, book)
    if len(book) >= 2:
        print(f"min Hamming distance: {min_hamming_distance(book)}")
    else:
        print("min Hamming distance: n/a (single code)")


def cmd_gen_scaling(a):
    _need(a.codebook)
    book = formats.read_codebook(a.codebook)
    formats.write_scaling(a.out, ScalingTable.random(book, a.low, a.high, rng_seed=a.seed))


def cmd_synth(a):
    _need(a.codebook, a.scaling, a.events)
    book = formats.read_codebook(a.codebook)
    truth, _ = formats.read_scaling(a.scaling)
    if a.events is not None:
        events = formats.read_events(a.events)
    else:
        events = random_scenario(book, a.random, a.window_s, rng_seed=a.seed, min_gap_s=a.min_gap_s)
    cfg = SynthConfig(book, truth, a.noise, a.seed + 1, a.window_s, a.sample_rate)
    try:
        record = synthesize_record(events, cfg)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    formats.write_signal(a.out, record)
    formats.write_events(a.events_out or _events_path(a.out), events)


def _labeled_signals(signals, labels):
    if labels is None or len(labels) != len(signals):
        raise CliError("--labels must give one sensor id per --signals file", code=2)
    _need(*signals)
    return [(formats.read_signal(p), int(s)) for p, s in zip(signals, labels)]


def cmd_calibrate(a):
    _need(a.codebook, a.truth_scaling)
    book = formats.read_codebook(a.codebook)
    if a.signals:
        pairs = _labeled_signals(a.signals, a.labels)
    elif a.truth_scaling:
        truth, _ = formats.read_scaling(a.truth_scaling)
        cal = calibration_records(book, truth, a.per_sensor, a.seed, a.sample_rate, a.noise)
        pairs = [(r, e.channel) for r, e in cal]
    else:
        raise CliError("give --signals/--labels or --truth-scaling", code=2)
    table = estimate_scaling(pairs, book)
    shape = canonical_pulse_shape([r for r, _ in pairs], a.n_points)
    formats.write_scaling(a.out, table, shape)


def cmd_train(a):
    _need(a.codebook, a.truth_scaling)
    book = formats.read_codebook(a.codebook)
    if a.signals:
        _need(*a.signals)
        records = [formats.read_signal(p) for p in a.signals]
    elif a.truth_scaling:
        truth, _ = formats.read_scaling(a.truth_scaling)
        records = training_records(book, truth, a.n, (a.speed_min, a.speed_max),
                                   (a.amplitude_min, a.amplitude_max), a.noise, a.seed,
                                   a.sample_rate)
    else:
        raise CliError("give --signals or --truth-scaling", code=2)
    formats.write_training(a.out, build_training_set(records, book, smoothing_s=a.smoothing_s))


def cmd_select_k(a):
    _need(a.training)
    tset = formats.read_training(a.training)
    rep = select_k(tset, a.k_max, a.repeats, a.seed, standardize=not a.raw_distance)
    formats.write_k_report(a.out, rep, a.curves)
    print(f"k_star = {rep.k_star}")


def cmd_decode(a):
    model = _run_config(a).load_model()
    _need(a.signal)
    result = decode_record(formats.read_signal(a.signal), model)
    formats.write_decode_report(a.out, result)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print("decoded channels:", ",".join(map(str, result.channels)))


def cmd_eval(a):
    model = _run_config(a).load_model()
    _need(a.truth_scaling)
    truth, _ = formats.read_scaling(a.truth_scaling)
    cfg = ExperimentConfig(model, truth, tuple(a.noise), tuple(a.events), a.trials, a.seed,
                           a.window_s, a.min_gap_s,
                           channels=tuple(a.channels) if a.channels else None)
    agg, rows = run_experiment(cfg)
    formats.write_json(a.out, agg)
    if a.rows:
        formats.write_trial_rows(a.rows, rows)
    for c in agg["cells"]:
        print(f"noise {c['noise_sigma_v']:g} V, {c['n_events']} events: accuracy "
              f"{c['accuracy_mean']:.4f} +/- {c['accuracy_std']:.4f}, speed MAE "
              f"{c['speed_mae_mean']:.1f} um/s")


def cmd_replay_fig6(a):
    pipe = build_pipeline(PipelineConfig(rng_seed=a.seed))
    sigma = noise_sigma_for_snr(a.snr_db)
    cfg = ExperimentConfig(pipe.model, pipe.truth_scaling, (sigma,), (len(REPLAY_CHANNELS),), 1,
                           a.seed, REPLAY_WINDOW_S, channels=REPLAY_CHANNELS)
    _, result, _ = run_trial(cfg, sigma, len(REPLAY_CHANNELS), 0)
    if a.out:
        formats.write_decode_report(a.out, result)
    expected = ",".join(map(str, REPLAY_CHANNELS))
    got = ",".join(map(str, result.channels))
    print(f"expected: {expected}")
    print(f"decoded:  {got}")
    print("PASS" if got == expected else "FAIL")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="codesmux",
                                 description="Simulate and decode code-multiplexed pulse sensor records.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-codebook", help="generate a greedy max-min Hamming codebook")
    p.add_argument("--sensors", type=int, required=True)
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--electrode-width-um", type=_positive, default=10.0)
    p.add_argument("--bit-pitch-um", type=_positive, default=30.0)
    p.add_argument("--pre-offset-um", type=_positive, default=None)
    p.add_argument("--sensing-zone-um", type=_positive, default=20.0)
    p.set_defaults(func=cmd_gen_codebook)

    p = sub.add_parser("gen-scaling", help="draw ground-truth scaling factors for simulation")
    p.add_argument("--codebook", required=True)
    p.add_argument("--low", type=_positive, default=0.5)
    p.add_argument("--high", type=_positive, default=1.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scaling)

    p = sub.add_parser("synth", help="synthesize a two-channel record")
    p.add_argument("--codebook", required=True)
    p.add_argument("--scaling", required=True, help="ground-truth scaling file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--events", help="events CSV to synthesize")
    src.add_argument("--random", type=int, metavar="N", help="draw N random events")
    p.add_argument("--window-s", type=_positive, default=REPLAY_WINDOW_S)
    p.add_argument("--min-gap-s", type=_non_negative, default=2e-3)
    p.add_argument("--noise", type=_non_negative, default=0.0, help="noise RMS (V)")
    p.add_argument("--sample-rate", type=_positive, default=DEFAULT_SAMPLE_RATE_HZ)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--events-out", help="ground-truth events CSV (default: <out>.events.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="estimate scaling factors and the pulse shape")
    p.add_argument("--codebook", required=True)
    p.add_argument("--signals", nargs="+", help="isolated-event signal files")
    p.add_argument("--labels", nargs="+", type=int, help="sensor id of each signal file")
    p.add_argument("--truth-scaling", help="simulate calibration events from this table")
    p.add_argument("--per-sensor", type=int, default=20)
    p.add_argument("--noise", type=_non_negative, default=0.0)
    p.add_argument("--n-points", type=int, default=64)
    p.add_argument("--sample-rate", type=_positive, default=DEFAULT_SAMPLE_RATE_HZ)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="build the K-NN speed training set")
    p.add_argument("--codebook", required=True)
    p.add_argument("--signals", nargs="+", help="isolated-event signal files")
    p.add_argument("--truth-scaling", help="simulate training events from this table")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--speed-min", type=_positive, default=22_000.0)
    p.add_argument("--speed-max", type=_positive, default=38_000.0)
    p.add_argument("--amplitude-min", type=_positive, default=0.8)
    p.add_argument("--amplitude-max", type=_positive, default=1.2)
    p.add_argument("--noise", type=_non_negative, default=0.1)
    p.add_argument("--smoothing-s", type=_non_negative, default=3 / DEFAULT_SAMPLE_RATE_HZ)
    p.add_argument("--sample-rate", type=_positive, default=DEFAULT_SAMPLE_RATE_HZ)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select-k", help="choose K by repeated random sub-sampling")
    p.add_argument("--training", required=True)
    p.add_argument("--k-max", type=int, default=50)
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--raw-distance", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--curves", help="CSV of both error curves")
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("decode", help="decode a signal file")
    _model_args(p)
    p.add_argument("--signal", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0, help="unused; decoding is deterministic")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="Monte-Carlo accuracy over noise levels and event counts")
    _model_args(p)
    p.add_argument("--truth-scaling", required=True)
    p.add_argument("--noise", type=_non_negative, nargs="+", default=[0.0])
    p.add_argument("--events", type=int, nargs="+", default=[10])
    p.add_argument("--channels", type=int, nargs="+", help="fixed channel sequence")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--window-s", type=_positive, default=REPLAY_WINDOW_S)
    p.add_argument("--min-gap-s", type=_non_negative, default=2e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--rows", help="per-trial CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay-fig6", help="decode the 10-event, 60 ms scenario 8,7,8,6,6,7,8,7,9,7")
    p.add_argument("--snr-db", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="decode report JSON")
    p.set_defaults(func=cmd_replay_fig6)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        print(f"codesmux: error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, KeyError) as exc:
        print(f"codesmux: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
