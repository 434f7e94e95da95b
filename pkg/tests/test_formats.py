import json
import os

import numpy as np
import pytest

from codesmux import SignalRecord, SynthConfig, random_scenario, select_k, synthesize_record
from codesmux import formats
from codesmux.decode import decode_record
from codesmux.pulsefeat import PulseFeatures
from codesmux.speedknn import TrainingSet


def test_codebook_round_trip(tmp_path, book):
    p = tmp_path / "book.txt"
    formats.write_codebook(p, book)
    assert formats.read_codebook(p) == book
    text = p.read_text()
    assert "code.3 = 10011" in text and "geometry.pre_offset_um = 30" in text
    assert [f for f in os.listdir(tmp_path)] == ["book.txt"]


def test_codebook_count_check(tmp_path, book):
    p = tmp_path / "book.txt"
    formats.write_codebook(p, book)
    p.write_text(p.read_text().replace("sensors = 10", "sensors = 9"))
    with pytest.raises(ValueError):
        formats.read_codebook(p)


def test_signal_round_trip_nine_digits(tmp_path, book, truth):
    ev = random_scenario(book, 5, 0.03, rng_seed=1)
    rec = synthesize_record(ev, SynthConfig(book, truth, 0.05, 2, 0.03))
    p = tmp_path / "sig.csv"
    formats.write_signal(p, rec)
    lines = p.read_text().splitlines()
    assert lines[0] == "# sample_rate_hz=50000" and lines[1] == "time_s,pre_v,code_v"
    back = formats.read_signal(p)
    assert back.sample_rate_hz == rec.sample_rate_hz
    for a, b in [(back.pre_channel, rec.pre_channel), (back.code_channel, rec.code_channel)]:
        assert np.allclose(a, b, rtol=1e-9, atol=0)


def test_signal_header_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time_s,pre_v,code_v\n0,0,0\n")
    with pytest.raises(ValueError):
        formats.read_signal(p)


def test_events_features_training_round_trip(tmp_path, book):
    ev = random_scenario(book, 7, 0.06, rng_seed=4)
    formats.write_events(tmp_path / "e.csv", ev)
    assert formats.read_events(tmp_path / "e.csv") == ev
    assert (tmp_path / "e.csv").read_text().startswith("channel,t_arrival_s,speed_um_s,amplitude_v\n")

    feats = [PulseFeatures(0.01, 1.0, 2e-4, 3e-4, 4e-4), PulseFeatures(0.02, 0.9, 1e-4, 2e-4, 3e-4)]
    formats.write_features(tmp_path / "f.csv", feats)
    assert formats.read_features(tmp_path / "f.csv") == feats

    rng = np.random.default_rng(0)
    ts = TrainingSet.from_arrays(rng.uniform(size=(20, 4)), rng.uniform(2e4, 4e4, 20), 6e-5)
    formats.write_training(tmp_path / "t.csv", ts)
    back = formats.read_training(tmp_path / "t.csv")
    assert np.array_equal(back.X, ts.X) and np.array_equal(back.speeds, ts.speeds)
    assert back.smoothing_s == ts.smoothing_s


def test_k_report_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    ts = TrainingSet.from_arrays(rng.uniform(size=(40, 4)), rng.uniform(2e4, 4e4, 40))
    rep = select_k(ts, 10, 5, rng_seed=3)
    formats.write_k_report(tmp_path / "k.json", rep, tmp_path / "k.csv")
    d = json.loads((tmp_path / "k.json").read_text())
    assert set(d) == {"k_star", "in_sample_err", "out_sample_err", "repeats", "seed"}
    back = formats.read_k_report(tmp_path / "k.json")
    assert back.k_star == rep.k_star and np.array_equal(back.out_sample_err, rep.out_sample_err)
    rows = (tmp_path / "k.csv").read_text().splitlines()
    assert rows[0] == "k,in_sample_err,out_sample_err" and rows[1].startswith("1,0.0,")


def test_scaling_round_trip(tmp_path, truth):
    shape = np.linspace(0.25, 1, 16)
    formats.write_scaling(tmp_path / "s.txt", truth, shape)
    back, sh = formats.read_scaling(tmp_path / "s.txt")
    for sid, row in truth.factors.items():
        assert np.array_equal(back.row(sid), row)
    assert np.array_equal(sh, shape)
    formats.write_scaling(tmp_path / "s2.txt", truth)
    assert formats.read_scaling(tmp_path / "s2.txt")[1] is None


def test_decode_report_fields(tmp_path, pipeline, book):
    ev = random_scenario(book, 3, 0.03, rng_seed=2, min_gap_s=2e-3)
    rec = synthesize_record(ev, SynthConfig(book, pipeline.truth_scaling, duration_s=0.03))
    formats.write_decode_report(tmp_path / "d.json", decode_record(rec, pipeline.model))
    d = json.loads((tmp_path / "d.json").read_text(encoding="utf-8"))
    assert set(d) == {"events", "total_mse", "clusters", "warnings"}
    assert set(d["events"][0]) == {"pulse_index", "sensor_id", "t_peak_s", "speed_um_s", "amplitude_v"}
    assert [e["sensor_id"] for e in d["events"]] == [e.channel for e in ev]


def test_atomic_write_keeps_old_file_on_failure(tmp_path, monkeypatch):
    p = tmp_path / "x.txt"
    formats.atomic_write(p, "old\n")

    def boom(*a):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        formats.atomic_write(p, "new\n")
    assert p.read_text() == "old\n" and os.listdir(tmp_path) == ["x.txt"]


def test_empty_signal(tmp_path):
    formats.write_signal(tmp_path / "e.csv", SignalRecord(50_000.0, np.zeros(0), np.zeros(0)))
    assert formats.read_signal(tmp_path / "e.csv").n_samples == 0
