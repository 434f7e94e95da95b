import numpy as np
import pytest

from codesmux import (CodeBook, ScalingTable, SensorCode, SignalRecord, canonical_pulse_shape,
                      estimate_scaling, isolated_records, normalize_pulse, pulse_waveform)

FS = 50_000.0


def test_uniform_factor_recovered(book):
    truth = ScalingTable.uniform(book, 0.8)
    recs = isolated_records(book, truth, [30_000] * 30, [1.0] * 30, [1 + i % 10 for i in range(30)])
    est = estimate_scaling([(r, e.channel) for r, e in recs], book)
    for c in book.codes:
        row = est.row(c.sensor_id)
        bits = c.as_array().astype(bool)
        assert np.all(np.abs(row[bits] / 0.8 - 1) <= 0.01)
        assert np.all(row[~bits] == 0)
    assert est.n_events_used == {s: 3 for s in book.sensor_ids}


def test_single_record_ratios():
    book = CodeBook((SensorCode.from_string(1, "10011"),))
    T, n = 0.6e-3, 1000
    pre = pulse_waveform(1.0, 4e-3, T, FS, n)
    code = sum(pulse_waveform(a, t, T, FS, n) for a, t in [(0.9, 5e-3), (0.7, 8e-3), (0.8, 9e-3)])
    est = estimate_scaling([(SignalRecord(FS, pre, code), 1)], book)
    assert np.allclose(est.row(1), [0.9, 0, 0, 0.7, 0.8])


def test_amplitude_scaled_copies_agree(book, truth):
    base = isolated_records(book, truth, [27_000] * 10, [1.0] * 10, book.sensor_ids)
    tables = []
    for c in (1.0, 2.0, 3.0):
        recs = [(SignalRecord(FS, c * r.pre_channel, c * r.code_channel), e.channel) for r, e in base]
        tables.append(estimate_scaling(recs, book))
    for t in tables[1:]:
        for s in book.sensor_ids:
            assert np.allclose(t.row(s), tables[0].row(s), rtol=1e-12)


def test_missing_sensor_and_count_mismatch(book, truth):
    recs = isolated_records(book, truth, [30_000] * 9, [1.0] * 9, book.sensor_ids[:9])
    with pytest.raises(ValueError, match="no calibration records"):
        estimate_scaling([(r, e.channel) for r, e in recs], book)
    r, e = recs[0]
    wrong = 2 if e.channel != 2 else 3      # sensor 2 has a single positive bit
    with pytest.raises(ValueError, match="code pulses"):
        estimate_scaling([(r, wrong)], book)


def test_canonical_shape_is_normalized_hann():
    # oracle: the Hann lobe between its 1/4 crossings, evaluated in closed form
    u = np.linspace(0, 1, 64)
    half = 1 / 6                                   # (1 - 2/3) / 2 of the transit time
    x = half + u * (2 / 3)
    oracle = 0.5 * (1 - np.cos(2 * np.pi * x))
    recs = [SignalRecord(FS, pulse_waveform(a, t0, T, FS, 600), np.zeros(600))
            for a, t0, T in [(1.0, 5e-3, 1e-3), (0.7, 5.013e-3, 0.9e-3), (1.3, 6.02e-3, 1.2e-3)]]
    shape = canonical_pulse_shape(recs, 64)
    assert np.max(np.abs(shape - oracle)) < 0.02
    assert shape.max() == pytest.approx(1.0, abs=0.01)
    single = canonical_pulse_shape(recs[:1], 64)
    assert np.allclose(single, normalize_pulse(recs[0].pre_channel, int(np.argmax(recs[0].pre_channel)), 64))
    with pytest.raises(ValueError):
        canonical_pulse_shape([SignalRecord(FS, np.zeros(10), np.zeros(10))])


def test_table_checks(book):
    t = ScalingTable.uniform(book)
    t.check(book)
    bad = ScalingTable({**t.factors, 1: np.zeros(5)})
    with pytest.raises(ValueError):
        bad.check(book)
    with pytest.raises(KeyError):
        ScalingTable({}).row(1)
