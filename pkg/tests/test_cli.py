import json

import numpy as np
import pytest

from codesmux import formats
from codesmux.cli import main
from codesmux.pulsefeat import detect_pulses


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Codebook, truth, calibration, training and K report made through the CLI."""
    d = tmp_path_factory.mktemp("cli")
    assert run("gen-codebook", "--sensors", 10, "--bits", 5, "--out", d / "book.txt") == 0
    assert run("gen-scaling", "--codebook", d / "book.txt", "--seed", 1, "--out", d / "truth.txt") == 0
    assert run("calibrate", "--codebook", d / "book.txt", "--truth-scaling", d / "truth.txt",
               "--seed", 2, "--out", d / "scaling.txt") == 0
    assert run("train", "--codebook", d / "book.txt", "--truth-scaling", d / "truth.txt",
               "--seed", 3, "--out", d / "train.csv") == 0
    assert run("select-k", "--training", d / "train.csv", "--seed", 4, "--out", d / "k.json",
               "--curves", d / "curves.csv") == 0
    return d


def model_args(d):
    return ["--codebook", d / "book.txt", "--scaling", d / "scaling.txt", "--training",
            d / "train.csv", "--k-report", d / "k.json"]


def test_gen_codebook(tmp_path, capsys):
    out = tmp_path / "b.txt"
    assert run("gen-codebook", "--sensors", 10, "--bits", 5, "--out", out) == 0
    assert len(formats.read_codebook(out)) == 10
    assert "min Hamming distance: 1" in capsys.readouterr().out
    first = out.read_bytes()
    run("gen-codebook", "--sensors", 10, "--bits", 5, "--out", out)
    assert out.read_bytes() == first


def test_gen_codebook_capacity(tmp_path, capsys):
    assert run("gen-codebook", "--sensors", 17, "--bits", 5, "--out", tmp_path / "b.txt") == 2
    assert "capacity" in capsys.readouterr().err
    assert not (tmp_path / "b.txt").exists()


def test_synth_random(workdir, tmp_path):
    args = ["synth", "--codebook", workdir / "book.txt", "--scaling", workdir / "truth.txt",
            "--random", 10, "--window-s", 0.06, "--seed", 5]
    assert run(*args, "--out", tmp_path / "a.csv") == 0
    rec = formats.read_signal(tmp_path / "a.csv")
    assert rec.n_samples == 3000 and rec.duration_s == pytest.approx(0.06)
    assert len(formats.read_events(tmp_path / "a.events.csv")) == 10
    assert len(detect_pulses(rec.pre_channel, rec.sample_rate_hz, 0.4, 0.5e-3)) == 10
    run(*args, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.events.csv").read_bytes() == (tmp_path / "b.events.csv").read_bytes()


def test_synth_all_noise(workdir, tmp_path):
    assert run("synth", "--codebook", workdir / "book.txt", "--scaling", workdir / "truth.txt",
               "--random", 0, "--noise", 0.1, "--out", tmp_path / "n.csv") == 0
    rec = formats.read_signal(tmp_path / "n.csv")
    assert rec.pre_channel.std() == pytest.approx(0.1, rel=0.1)
    assert formats.read_events(tmp_path / "n.events.csv") == []


def test_synth_event_outside_window(workdir, tmp_path):
    (tmp_path / "e.csv").write_text("channel,t_arrival_s,speed_um_s,amplitude_v\n1,0.059,30000,1\n")
    assert run("synth", "--codebook", workdir / "book.txt", "--scaling", workdir / "truth.txt",
               "--events", tmp_path / "e.csv", "--out", tmp_path / "s.csv") == 1


def test_select_k_curves(workdir):
    rows = (workdir / "curves.csv").read_text().splitlines()
    assert rows[0] == "k,in_sample_err,out_sample_err"
    assert rows[1].split(",")[:2] == ["1", "0.0"]
    assert json.loads((workdir / "k.json").read_text())["seed"] == 4


def test_decode_isolated_event(workdir, tmp_path, capsys):
    (tmp_path / "e.csv").write_text("channel,t_arrival_s,speed_um_s,amplitude_v\n6,0.003,29000,1.1\n")
    run("synth", "--codebook", workdir / "book.txt", "--scaling", workdir / "truth.txt",
        "--events", tmp_path / "e.csv", "--window-s", 0.012, "--out", tmp_path / "s.csv")
    assert run("decode", *model_args(workdir), "--signal", tmp_path / "s.csv",
               "--out", tmp_path / "d.json") == 0
    d = json.loads((tmp_path / "d.json").read_text())
    assert [e["sensor_id"] for e in d["events"]] == [6]
    assert "decoded channels: 6" in capsys.readouterr().out


def test_missing_input_is_named(workdir, tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run("decode", *model_args(workdir), "--signal", missing, "--out", tmp_path / "d.json") == 1
    assert str(missing) in capsys.readouterr().err
    assert run("select-k", "--training", missing, "--out", tmp_path / "k.json") == 1


def test_eval_outputs(workdir, tmp_path):
    assert run("eval", *model_args(workdir), "--truth-scaling", workdir / "truth.txt",
               "--noise", 0, 0.05, "--events", 3, "--trials", 2, "--window-s", 0.03,
               "--out", tmp_path / "agg.json", "--rows", tmp_path / "rows.csv") == 0
    agg = json.loads((tmp_path / "agg.json").read_text())
    assert len(agg["cells"]) == 2
    rows = (tmp_path / "rows.csv").read_text().splitlines()
    assert rows[0] == "trial,noise_sigma_v,n_events,accuracy,speed_mae" and len(rows) == 5


def test_calibrate_from_signal_files(workdir, tmp_path):
    paths, labels = [], []
    for i, sid in enumerate(range(1, 11)):
        (tmp_path / f"e{sid}.csv").write_text(
            f"channel,t_arrival_s,speed_um_s,amplitude_v\n{sid},0.002,30000,1\n")
        run("synth", "--codebook", workdir / "book.txt", "--scaling", workdir / "truth.txt",
            "--events", tmp_path / f"e{sid}.csv", "--window-s", 0.01, "--out", tmp_path / f"s{sid}.csv")
        paths.append(tmp_path / f"s{sid}.csv")
        labels.append(sid)
    assert run("calibrate", "--codebook", workdir / "book.txt", "--signals", *paths,
               "--labels", *labels, "--out", tmp_path / "cal.txt") == 0
    est, shape = formats.read_scaling(tmp_path / "cal.txt")
    truth, _ = formats.read_scaling(workdir / "truth.txt")
    for sid in range(1, 11):
        nz = truth.row(sid) > 0
        assert np.allclose(est.row(sid)[nz], truth.row(sid)[nz], rtol=0.01)
    assert shape is not None and len(shape) == 64
    assert run("calibrate", "--codebook", workdir / "book.txt", "--signals", *paths,
               "--out", tmp_path / "x.txt") == 2


def test_replay_fig6_passes(capsys):
    assert run("replay-fig6", "--seed", 0) == 0
    out = capsys.readouterr().out
    assert "decoded:  8,7,8,6,6,7,8,7,9,7" in out and out.strip().endswith("PASS")
