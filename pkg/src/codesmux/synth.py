"""
Two-channel baseband simulator for a code-multiplexed sensor network.

Each particle produces one Hann-shaped pulse on the pre-coding channel and one
pulse per positive bit of its sensor's code on the code channel. Pulses last
``sensing_zone / speed`` seconds and are spaced according to the electrode
geometry at a constant particle speed. Records from several particles are
sample-wise sums, plus optional white Gaussian noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibrate import ScalingTable
from .codebook import CodeBook

DEFAULT_SAMPLE_RATE_HZ = 50_000.0
DEFAULT_SPEED_UM_S = 30_000.0
DEFAULT_AMPLITUDE_V = 1.0


@dataclass(frozen=True)
class ParticleEvent:
    channel: int
    t_arrival_s: float
    speed_um_s: float
    amplitude_v: float

    def __post_init__(self):
        if not self.speed_um_s > 0:
            raise ValueError("speed must be positive")
        if not self.amplitude_v > 0:
            raise ValueError("amplitude must be positive")
        if not self.t_arrival_s >= 0:
            raise ValueError("arrival time must be non-negative")


@dataclass(frozen=True, eq=False)
class SignalRecord:
    sample_rate_hz: float
    pre_channel: np.ndarray
    code_channel: np.ndarray

    def __post_init__(self):
        pre = np.asarray(self.pre_channel, dtype=float)
        code = np.asarray(self.code_channel, dtype=float)
        if pre.shape != code.shape or pre.ndim != 1:
            raise ValueError("pre and code channels must be 1-D and of equal length")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "pre_channel", pre)
        object.__setattr__(self, "code_channel", code)

    @property
    def n_samples(self) -> int:
        return len(self.pre_channel)

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate_hz

    def __eq__(self, other):
        if not isinstance(other, SignalRecord):
            return NotImplemented
        return (self.sample_rate_hz == other.sample_rate_hz
                and np.array_equal(self.pre_channel, other.pre_channel)
                and np.array_equal(self.code_channel, other.code_channel))


@dataclass
class SynthConfig:
    book: CodeBook
    scaling: ScalingTable
    noise_sigma_v: float = 0.0
    rng_seed: int = 0
    duration_s: float = 0.06
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        if self.noise_sigma_v < 0:
            raise ValueError("noise_sigma_v must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))


def _add_pulse(out, amplitude, t_peak, transit_time, sample_rate):
    """Add a Hann lobe into ``out`` in place; only its support is touched."""
    half = transit_time / 2
    lo = max(0, math.ceil((t_peak - half) * sample_rate))
    hi = min(len(out), math.floor((t_peak + half) * sample_rate) + 1)
    if hi <= lo:
        return
    t = np.arange(lo, hi) / sample_rate
    out[lo:hi] += amplitude * 0.5 * (1 - np.cos(2 * np.pi * (t - t_peak + half) / transit_time))


def pulse_waveform(amplitude: float, t_peak: float, transit_time: float,
                   sample_rate: float, n_samples: int) -> np.ndarray:
    """
    A raised-cosine lobe of duration ``transit_time`` peaking at ``t_peak``.

    Samples outside [t_peak - T/2, t_peak + T/2] are zero.
    """
    if not transit_time > 0:
        raise ValueError("transit time must be positive")
    out = np.zeros(n_samples)
    _add_pulse(out, amplitude, t_peak, transit_time, sample_rate)
    return out


def transit_time(speed_um_s: float, book: CodeBook) -> float:
    return book.geometry.sensing_zone_um / speed_um_s


def code_peak_times(e: ParticleEvent, book: CodeBook) -> list[float]:
    """Peak times of the code-channel pulses of ``e``, one per positive bit."""
    geom = book.geometry
    return [e.t_arrival_s + geom.bit_distance_um(k) / e.speed_um_s
            for k in book.code(e.channel).positive_bits]


def event_extent(e: ParticleEvent, book: CodeBook) -> tuple[float, float]:
    """Time interval covered by any pulse of the event on either channel."""
    half = transit_time(e.speed_um_s, book) / 2
    last = e.t_arrival_s + book.span_um() / e.speed_um_s
    return e.t_arrival_s - half, last + half


def _check_event(e, cfg):
    if e.channel not in cfg.book.sensor_ids:
        raise ValueError(f"unknown channel {e.channel}")
    cfg.scaling.row(e.channel)


def _add_event(pre, code, e, cfg):
    book = cfg.book
    fs = cfg.sample_rate_hz
    T = transit_time(e.speed_um_s, book)
    factors = cfg.scaling.row(e.channel)
    _add_pulse(pre, e.amplitude_v, e.t_arrival_s, T, fs)
    for k, t in zip(book.code(e.channel).positive_bits, code_peak_times(e, book)):
        _add_pulse(code, e.amplitude_v * factors[k - 1], t, T, fs)


def event_waveforms(e: ParticleEvent, cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free pre-coding and code waveforms of a single event."""
    _check_event(e, cfg)
    pre = np.zeros(cfg.n_samples)
    code = np.zeros(cfg.n_samples)
    _add_event(pre, code, e, cfg)
    return pre, code


def synthesize_record(events, cfg: SynthConfig) -> SignalRecord:
    """
    Superpose the waveforms of ``events`` and add seeded Gaussian noise.

    Raises
    ------
    ValueError
        If any event's pulses fall outside [0, cfg.duration_s].
    """
    n = cfg.n_samples
    pre = np.zeros(n)
    code = np.zeros(n)
    for e in events:
        _check_event(e, cfg)
        start, end = event_extent(e, cfg.book)
        if start < 0 or end > n / cfg.sample_rate_hz:
            raise ValueError(
                f"event on channel {e.channel} at {e.t_arrival_s:.6g} s spans "
                f"[{start:.6g}, {end:.6g}] s, outside the {cfg.duration_s:.6g} s record")
        _add_event(pre, code, e, cfg)
    if cfg.noise_sigma_v > 0:
        rng = np.random.default_rng(cfg.rng_seed)
        noise = rng.normal(0.0, cfg.noise_sigma_v, size=(2, n))
        pre += noise[0]
        code += noise[1]
    return SignalRecord(cfg.sample_rate_hz, pre, code)


def random_scenario(book: CodeBook, n_events: int, window_s: float,
                    speed_range=(0.8 * DEFAULT_SPEED_UM_S, 1.2 * DEFAULT_SPEED_UM_S),
                    amplitude_range=(0.8 * DEFAULT_AMPLITUDE_V, 1.2 * DEFAULT_AMPLITUDE_V),
                    rng_seed: int = 0, min_gap_s: float = 0.0,
                    channels=None) -> list[ParticleEvent]:
    """
    Draw ``n_events`` particle events that fit entirely inside ``window_s``.

    Arrival times are uniform over the part of the window where even the
    slowest particle's full waveform fits, subject to consecutive arrivals
    being at least ``min_gap_s`` apart. Channels are uniform over the book
    unless ``channels`` fixes them (in chronological order). Events are
    returned sorted by arrival.
    """
    vmin, vmax = map(float, speed_range)
    amin, amax = map(float, amplitude_range)
    if not (0 < vmin <= vmax and 0 < amin <= amax):
        raise ValueError("speed and amplitude ranges must be positive and non-empty")
    if channels is not None:
        channels = list(channels)
        if len(channels) != n_events:
            raise ValueError("need one channel per event")
    rng = np.random.default_rng(rng_seed)
    if n_events == 0:
        return []

    lead = book.geometry.sensing_zone_um / vmin / 2
    tail = (book.span_um() + book.geometry.sensing_zone_um / 2) / vmin
    free = window_s - lead - tail - (n_events - 1) * min_gap_s
    if free < 0:
        raise ValueError(f"{n_events} events with gap {min_gap_s} s do not fit in {window_s} s")

    offsets = np.sort(rng.uniform(0.0, free, size=n_events))
    arrivals = lead + offsets + min_gap_s * np.arange(n_events)
    if channels is None:
        channels = rng.choice(book.sensor_ids, size=n_events).tolist()
    speeds = rng.uniform(vmin, vmax, size=n_events)
    amplitudes = rng.uniform(amin, amax, size=n_events)
    return [ParticleEvent(int(c), float(t), float(v), float(a))
            for c, t, v, a in zip(channels, arrivals, speeds, amplitudes)]


def isolated_records(book: CodeBook, scaling: ScalingTable, speeds, amplitudes, channels,
                     noise_sigma_v: float = 0.0, rng_seed: int = 0,
                     sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ, margin_s: float = 1e-3):
    """
    One short record per particle, for training and calibration.

    Returns a list of (SignalRecord, ParticleEvent) pairs. Every record is
    just long enough to hold its event plus ``margin_s`` on either side; noise
    seeds are derived from ``rng_seed`` and the record index.
    """
    out = []
    seeds = np.random.SeedSequence(rng_seed).generate_state(max(1, len(speeds)))
    for i, (v, a, c) in enumerate(zip(speeds, amplitudes, channels)):
        e = ParticleEvent(int(c), 0.0, float(v), float(a))
        start, end = event_extent(e, book)
        e = ParticleEvent(int(c), margin_s - start, float(v), float(a))
        cfg = SynthConfig(book, scaling, noise_sigma_v, int(seeds[i]),
                          duration_s=end - start + 2 * margin_s, sample_rate_hz=sample_rate_hz)
        out.append((synthesize_record([e], cfg), e))
    return out


def noise_sigma_for_snr(snr_db: float, amplitude_v: float = DEFAULT_AMPLITUDE_V) -> float:
    """Noise RMS giving a peak-amplitude-to-noise ratio of ``snr_db``."""
    return amplitude_v / 10 ** (snr_db / 20)
