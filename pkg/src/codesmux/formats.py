"""
Line-oriented text formats for every artifact the pipeline reads or writes.

All writers go through ``atomic_write`` (temporary file in the target
directory, then rename) and emit UTF-8.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np

from .calibrate import ScalingTable
from .codebook import CodeBook, SensorCode, SensorGeometry
from .pulsefeat import PulseFeatures
from .speedknn import KSelectionReport, TrainingSample, TrainingSet
from .synth import ParticleEvent, SignalRecord

GEOMETRY_KEYS = ("electrode_width_um", "bit_pitch_um", "pre_offset_um", "sensing_zone_um")


def atomic_write(path, text: str):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x) -> str:
    """Shortest text that reads back as the same float."""
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else _f(x)


def _f(x) -> str:
    return repr(float(x))


def read_keyvalue(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


# codebook

def format_codebook(book: CodeBook) -> str:
    lines = ["# sensor codebook, bits most significant first",
             f"length = {book.length}", f"sensors = {len(book)}"]
    lines += [f"code.{c.sensor_id} = {c}" for c in book.codes]
    lines += [f"geometry.{k} = {_num(getattr(book.geometry, k))}" for k in GEOMETRY_KEYS]
    return "\n".join(lines) + "\n"


def write_codebook(path, book: CodeBook):
    atomic_write(path, format_codebook(book))


def read_codebook(path) -> CodeBook:
    kv = read_keyvalue(path)
    codes = []
    for key, value in kv.items():
        if key.startswith("code."):
            codes.append(SensorCode.from_string(int(key[5:]), value))
    codes.sort(key=lambda c: c.sensor_id)
    geom = {k: float(kv[f"geometry.{k}"]) for k in GEOMETRY_KEYS if f"geometry.{k}" in kv}
    book = CodeBook(tuple(codes), SensorGeometry(**geom))
    if "sensors" in kv and int(kv["sensors"]) != len(codes):
        raise ValueError(f"{path}: 'sensors = {kv['sensors']}' but {len(codes)} codes listed")
    if "length" in kv and any(c.length != int(kv["length"]) for c in codes):
        raise ValueError(f"{path}: code lengths disagree with 'length = {kv['length']}'")
    return book


# scaling table and canonical shape

def write_scaling(path, table: ScalingTable, shape=None):
    lines = ["# code-pulse peak / pre-coding peak per bit, 0 at zero bits"]
    for sid in sorted(table.factors):
        lines.append(f"scale.{sid} = " + ",".join(_num(f) for f in table.factors[sid]))
    for sid in sorted(table.n_events_used):
        lines.append(f"events.{sid} = {table.n_events_used[sid]}")
    if shape is not None:
        lines.append("shape = " + ",".join(_num(p) for p in np.asarray(shape)))
    atomic_write(path, "\n".join(lines) + "\n")


def read_scaling(path) -> tuple[ScalingTable, np.ndarray | None]:
    kv = read_keyvalue(path)
    factors, counts = {}, {}
    for key, value in kv.items():
        if key.startswith("scale."):
            factors[int(key[6:])] = [float(v) for v in value.split(",")]
        elif key.startswith("events."):
            counts[int(key[7:])] = int(value)
    shape = None
    if "shape" in kv:
        shape = np.array([float(v) for v in kv["shape"].split(",")])
    return ScalingTable(factors, counts), shape


# signal record

def write_signal(path, record: SignalRecord):
    buf = io.StringIO()
    buf.write(f"# sample_rate_hz={_num(record.sample_rate_hz)}\n")
    buf.write("time_s,pre_v,code_v\n")
    t = record.time
    for row in zip(t, record.pre_channel, record.code_channel):
        buf.write("%.12g,%.12g,%.12g\n" % row)
    atomic_write(path, buf.getvalue())


def read_signal(path) -> SignalRecord:
    with open(path, encoding="utf-8") as f:
        first = f.readline().strip()
        if not first.startswith("#") or "sample_rate_hz=" not in first:
            raise ValueError(f"{path}: missing '# sample_rate_hz=' line")
        fs = float(first.split("sample_rate_hz=", 1)[1])
        header = f.readline().strip()
        if header != "time_s,pre_v,code_v":
            raise ValueError(f"{path}: unexpected header {header!r}")
        body = f.read()
    if not body.strip():
        return SignalRecord(fs, np.zeros(0), np.zeros(0))
    data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    return SignalRecord(fs, data[:, 1], data[:, 2])


# small CSV tables

def _write_csv(path, header, rows, comments=()):
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write(path, buf.getvalue())


def _read_csv(path, header):
    comments = []
    with open(path, encoding="utf-8", newline="") as f:
        lines = []
        for line in f:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                lines.append(line)
    reader = csv.reader(lines)
    got = next(reader, None)
    if got != list(header):
        raise ValueError(f"{path}: expected header {','.join(header)}, got {got}")
    return [row for row in reader if row], comments


EVENT_HEADER = ("channel", "t_arrival_s", "speed_um_s", "amplitude_v")


def write_events(path, events):
    _write_csv(path, EVENT_HEADER,
               [(e.channel, _f(e.t_arrival_s), _f(e.speed_um_s), _f(e.amplitude_v))
                for e in events])


def read_events(path) -> list[ParticleEvent]:
    rows, _ = _read_csv(path, EVENT_HEADER)
    return [ParticleEvent(int(c), float(t), float(v), float(a)) for c, t, v, a in rows]


FEATURE_HEADER = ("t_peak_s", "x1_v", "x2_s", "x3_s", "x4_s")


def write_features(path, features):
    _write_csv(path, FEATURE_HEADER,
               [(_f(f.t_peak_s), _f(f.x1_v), _f(f.x2_s), _f(f.x3_s), _f(f.x4_s))
                for f in features])


def read_features(path) -> list[PulseFeatures]:
    rows, _ = _read_csv(path, FEATURE_HEADER)
    return [PulseFeatures(*map(float, r)) for r in rows]


TRAINING_HEADER = ("x1_v", "x2_s", "x3_s", "x4_s", "speed_um_s")


def write_training(path, tset: TrainingSet):
    rows = [(_f(s.features.x1_v), _f(s.features.x2_s), _f(s.features.x3_s),
             _f(s.features.x4_s), _f(s.speed_um_s)) for s in tset.samples]
    _write_csv(path, TRAINING_HEADER, rows, [f"smoothing_s={_f(tset.smoothing_s)}"])


def read_training(path) -> TrainingSet:
    rows, comments = _read_csv(path, TRAINING_HEADER)
    smoothing = 0.0
    for c in comments:
        if c.startswith("smoothing_s="):
            smoothing = float(c.split("=", 1)[1])
    samples = tuple(TrainingSample(PulseFeatures(0.0, *map(float, r[:4])), float(r[4])) for r in rows)
    return TrainingSet(samples, smoothing)


# reports

def k_report_dict(report: KSelectionReport) -> dict:
    return {"k_star": report.k_star,
            "in_sample_err": [float(e) for e in report.in_sample_err],
            "out_sample_err": [float(e) for e in report.out_sample_err],
            "repeats": report.repeats, "seed": report.rng_seed}


def write_k_report(path, report: KSelectionReport, curves_path=None):
    atomic_write(path, json.dumps(k_report_dict(report), indent=2) + "\n")
    if curves_path is not None:
        _write_csv(curves_path, ("k", "in_sample_err", "out_sample_err"),
                   [(k, _f(a), _f(b))
                    for k, a, b in zip(report.k_values, report.in_sample_err, report.out_sample_err)])


def read_k_report(path) -> KSelectionReport:
    with open(path, encoding="utf-8") as f:
        d = json.load(f)
    return KSelectionReport(int(d["k_star"]), np.array(d["in_sample_err"]),
                            np.array(d["out_sample_err"]), int(d["repeats"]), int(d["seed"]))


def decode_report_dict(result) -> dict:
    return {"events": [{"pulse_index": e.pulse_index, "sensor_id": e.sensor_id,
                        "t_peak_s": e.t_peak_s, "speed_um_s": e.est_speed_um_s,
                        "amplitude_v": e.est_amplitude_v} for e in result.events],
            "total_mse": result.total_mse,
            "clusters": [list(map(int, c)) for c in result.clusters],
            "warnings": list(result.warnings)}


def write_decode_report(path, result):
    atomic_write(path, json.dumps(decode_report_dict(result), indent=2) + "\n")


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2) + "\n")


def write_trial_rows(path, rows):
    _write_csv(path, ("trial", "noise_sigma_v", "n_events", "accuracy", "speed_mae"),
               [(r["trial"], _f(r["noise_sigma_v"]), r["n_events"], _f(r["accuracy"]),
                 _f(r["speed_mae"])) for r in rows])
