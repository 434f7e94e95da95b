"""
Per-sensor amplitude scaling factors and the canonical pulse shape.

Pulses in a code waveform do not have the same height as the pre-coding pulse
of the same particle, and the ratio differs from bit to bit. The factors are
estimated once per device from isolated, sensor-labeled events and reused to
build decoding templates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codebook import CodeBook
from .pulsefeat import (auto_threshold, detect_pulses, extract_features,
                        normalize_pulse)


@dataclass
class ScalingTable:
    """Code-pulse peak over pre-coding peak, one row per sensor.

    Rows have one entry per bit position; zero bits carry a factor of 0.
    """

    factors: dict[int, np.ndarray]
    n_events_used: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.factors = {int(s): np.asarray(f, dtype=float) for s, f in self.factors.items()}

    def row(self, sensor_id: int) -> np.ndarray:
        try:
            return self.factors[sensor_id]
        except KeyError:
            raise KeyError(f"no scaling row for sensor {sensor_id}") from None

    def __contains__(self, sensor_id):
        return sensor_id in self.factors

    def check(self, book: CodeBook):
        """Raise ValueError unless the table matches ``book``."""
        for code in book.codes:
            row = self.row(code.sensor_id)
            if len(row) != code.length:
                raise ValueError(f"sensor {code.sensor_id}: {len(row)} factors for a {code.length}-bit code")
            bits = code.as_array().astype(bool)
            if np.any(row[~bits] != 0):
                raise ValueError(f"sensor {code.sensor_id}: non-zero factor at a zero bit")
            if np.any(row[bits] <= 0):
                raise ValueError(f"sensor {code.sensor_id}: positive bits need positive factors")

    @classmethod
    def uniform(cls, book: CodeBook, value: float = 1.0) -> "ScalingTable":
        return cls({c.sensor_id: value * c.as_array().astype(float) for c in book.codes})

    @classmethod
    def random(cls, book: CodeBook, low: float = 0.5, high: float = 1.2,
               rng_seed: int = 0) -> "ScalingTable":
        """Factors drawn uniformly from [low, high] at every positive bit."""
        rng = np.random.default_rng(rng_seed)
        factors = {}
        for c in book.codes:
            bits = c.as_array().astype(float)
            factors[c.sensor_id] = bits * rng.uniform(low, high, size=c.length)
        return cls(factors)


def _code_peaks(record, threshold_v, min_separation_s):
    return detect_pulses(record.code_channel, record.sample_rate_hz, threshold_v, min_separation_s)


def _pre_peak(record):
    """Index of the single pre-coding pulse of an isolated-event record."""
    channel = record.pre_channel
    if not np.any(channel > 0):
        raise ValueError("record has no pre-coding pulse")
    return int(np.argmax(channel))


def estimate_scaling(records, book: CodeBook, threshold_fraction: float = 0.2,
                     min_separation_s: float | None = None) -> ScalingTable:
    """
    Average per-bit peak ratios from isolated-event records.

    Parameters
    ----------
    records : iterable of (SignalRecord, sensor_id)
        Each record holds exactly one particle that crossed ``sensor_id``.
    book : CodeBook
    threshold_fraction : float
        Code pulses are detected above this fraction of the pre-coding peak
        (or above the channel noise floor, whichever is larger).
    min_separation_s : float, optional
        Passed to the code-channel detector. Defaults to a third of the
        bit spacing in time, derived from each record's pulse width.

    Returns
    -------
    ScalingTable
        The k-th detected code pulse (chronologically) is matched to the k-th
        positive bit of the sensor's code.
    """
    sums: dict[int, np.ndarray] = {c.sensor_id: np.zeros(c.length) for c in book.codes}
    counts: dict[int, int] = {c.sensor_id: 0 for c in book.codes}
    geom = book.geometry

    for record, sensor_id in records:
        code = book.code(sensor_id)
        ipre = _pre_peak(record)
        pre = extract_features(record.pre_channel, record.sample_rate_hz, ipre)
        threshold = max(threshold_fraction * pre.x1_v, auto_threshold(record.code_channel))
        sep = min_separation_s
        if sep is None:
            # x3 is half the transit time; the bit spacing is pitch/zone transits
            sep = 2 * pre.x3_s * geom.bit_pitch_um / geom.sensing_zone_um / 3
        peaks = _code_peaks(record, threshold, sep)
        peaks = [p for p in peaks if p > ipre]
        if len(peaks) != code.popcount:
            raise ValueError(
                f"sensor {sensor_id}: found {len(peaks)} code pulses, code {code} has {code.popcount}")
        ratios = np.zeros(code.length)
        for bit, p in zip(code.positive_bits, peaks):
            ratios[bit - 1] = record.code_channel[p] / pre.x1_v
        sums[sensor_id] += ratios
        counts[sensor_id] += 1

    missing = [s for s, n in counts.items() if n == 0]
    if missing:
        raise ValueError(f"no calibration records for sensors {missing}")
    return ScalingTable({s: sums[s] / counts[s] for s in sums}, dict(counts))


def canonical_pulse_shape(records, n_points: int = 64) -> np.ndarray:
    """Mean of the normalized pre-coding pulses of the given records.

    ``records`` may hold bare SignalRecords or (record, sensor_id) pairs.
    """
    shapes = []
    for item in records:
        record = item[0] if isinstance(item, tuple) else item
        if not np.any(record.pre_channel > 0):
            continue
        ipre = _pre_peak(record)
        shapes.append(normalize_pulse(record.pre_channel, ipre, n_points))
    if not shapes:
        raise ValueError("no usable pulses for the canonical shape")
    return np.mean(shapes, axis=0)
