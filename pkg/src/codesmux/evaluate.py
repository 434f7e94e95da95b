"""
Scoring against simulator ground truth, model building and Monte-Carlo runs.

Every random quantity in this module comes from an explicit seed. Trials draw
their scenario and noise from ``SeedSequence([seed, n_events, trial])`` so the
same trial sees the same particles (and the same noise pattern, rescaled) at
every noise level.
"""

from __future__ import annotations

import warnings as _warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calibrate import ScalingTable, canonical_pulse_shape, estimate_scaling
from .codebook import CodeBook, generate_codebook
from .decode import DecoderModel, DecodeResult, _n_threads, decode_record
from .speedknn import KSelectionReport, build_training_set, select_k
from .synth import (DEFAULT_AMPLITUDE_V, DEFAULT_SAMPLE_RATE_HZ, DEFAULT_SPEED_UM_S,
                    SynthConfig, isolated_records, random_scenario, synthesize_record)

REPLAY_CHANNELS = (8, 7, 8, 6, 6, 7, 8, 7, 9, 7)
REPLAY_WINDOW_S = 0.06


@dataclass
class ScoreReport:
    channel_accuracy: float
    speed_mae_um_s: float
    amplitude_mae_v: float
    confusion: np.ndarray
    n_events: int
    sensor_ids: tuple[int, ...]
    warnings: list[str] = field(default_factory=list)


def score(decoded: DecodeResult, truth, book: CodeBook | None = None) -> ScoreReport:
    """
    Compare decoded events with the ground truth, pairing them in time order.

    The confusion matrix is indexed (true sensor, decoded sensor) over
    ``book.sensor_ids``, or over 1..max id seen when no book is given. When
    the counts differ only the common prefix is scored and a warning is
    recorded. With nothing to score, accuracy is 1 and both MAEs are 0.
    """
    truth = sorted(truth, key=lambda e: e.t_arrival_s)
    events = list(decoded.events)
    notes = []
    if len(events) != len(truth):
        msg = f"decoded {len(events)} events but truth has {len(truth)}; scoring the first {min(len(events), len(truth))}"
        notes.append(msg)
        _warnings.warn(msg, stacklevel=2)
    n = min(len(events), len(truth))
    events, truth = events[:n], truth[:n]

    if book is not None:
        ids = tuple(book.sensor_ids)
    else:
        top = max([e.sensor_id for e in events] + [t.channel for t in truth] + [0])
        ids = tuple(range(1, top + 1))
    pos = {s: i for i, s in enumerate(ids)}
    confusion = np.zeros((len(ids), len(ids)), dtype=int)
    for d, t in zip(events, truth):
        confusion[pos[t.channel], pos[d.sensor_id]] += 1

    if n == 0:
        return ScoreReport(1.0, 0.0, 0.0, confusion, 0, ids, notes)
    acc = float(np.trace(confusion)) / n
    speed = float(np.mean([abs(d.est_speed_um_s - t.speed_um_s) for d, t in zip(events, truth)]))
    amp = float(np.mean([abs(d.est_amplitude_v - t.amplitude_v) for d, t in zip(events, truth)]))
    return ScoreReport(acc, speed, amp, confusion, n, ids, notes)


@dataclass
class PipelineConfig:
    """
    How to build a decoder from simulated calibration and training runs.

    Ground-truth scaling factors are drawn in ``scaling_range``. Calibration
    uses noiseless isolated events at the default speed and amplitude.
    Training uses ``training_size`` isolated events with speeds on an even
    grid over ``training_speed_range``, amplitudes uniform in
    ``amplitude_range`` and noise ``training_noise_sigma_v``, measured after
    a Gaussian pre-filter of ``smoothing_s``. ``k`` = None selects K by
    sub-sampling validation.
    """

    n_sensors: int = 10
    n_bits: int = 5
    scaling_range: tuple[float, float] = (0.5, 1.2)
    calibration_per_sensor: int = 20
    training_size: int = 400
    training_speed_range: tuple[float, float] = (22_000.0, 38_000.0)
    amplitude_range: tuple[float, float] = (0.8 * DEFAULT_AMPLITUDE_V, 1.2 * DEFAULT_AMPLITUDE_V)
    training_noise_sigma_v: float = 0.1
    smoothing_s: float = 3 / DEFAULT_SAMPLE_RATE_HZ
    k: int | None = None
    k_max: int = 50
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    rng_seed: int = 0


@dataclass
class Pipeline:
    book: CodeBook
    truth_scaling: ScalingTable
    model: DecoderModel
    k_report: KSelectionReport | None


def calibration_records(book, truth, per_sensor, rng_seed=0, sample_rate_hz=DEFAULT_SAMPLE_RATE_HZ,
                        noise_sigma_v=0.0):
    """Isolated events at the default speed and amplitude, ``per_sensor`` per sensor."""
    channels = [sid for sid in book.sensor_ids for _ in range(per_sensor)]
    n = len(channels)
    return isolated_records(book, truth, [DEFAULT_SPEED_UM_S] * n, [DEFAULT_AMPLITUDE_V] * n,
                            channels, noise_sigma_v, rng_seed, sample_rate_hz)


def training_records(book, truth, n, speed_range, amplitude_range, noise_sigma_v, rng_seed=0,
                     sample_rate_hz=DEFAULT_SAMPLE_RATE_HZ):
    """Isolated events on an even speed grid, cycling through the sensors."""
    rng = np.random.default_rng(rng_seed)
    speeds = np.linspace(*speed_range, n)
    amplitudes = rng.uniform(*amplitude_range, n)
    ids = book.sensor_ids
    channels = [ids[i % len(ids)] for i in range(n)]
    return isolated_records(book, truth, speeds, amplitudes, channels, noise_sigma_v,
                            int(rng.integers(2**32)), sample_rate_hz)


def build_pipeline(cfg: PipelineConfig = PipelineConfig(), book: CodeBook | None = None,
                   truth_scaling: ScalingTable | None = None, **model_kw) -> Pipeline:
    """Simulate calibration and training, then assemble a DecoderModel."""
    seeds = np.random.SeedSequence(cfg.rng_seed).generate_state(3)
    if book is None:
        book = generate_codebook(cfg.n_sensors, cfg.n_bits)
    if truth_scaling is None:
        truth_scaling = ScalingTable.random(book, *cfg.scaling_range, rng_seed=int(seeds[0]))
    cal = calibration_records(book, truth_scaling, cfg.calibration_per_sensor, int(seeds[1]),
                              cfg.sample_rate_hz)
    scaling = estimate_scaling([(r, e.channel) for r, e in cal], book)
    shape = canonical_pulse_shape(cal)
    tr = training_records(book, truth_scaling, cfg.training_size, cfg.training_speed_range,
                          cfg.amplitude_range, cfg.training_noise_sigma_v, int(seeds[2]),
                          cfg.sample_rate_hz)
    tset = build_training_set(tr, book, smoothing_s=cfg.smoothing_s)
    report = None
    k = cfg.k
    if k is None:
        report = select_k(tset, min(cfg.k_max, len(tset) // 2), rng_seed=cfg.rng_seed,
                          standardize=model_kw.get("standardize", True))
        k = report.k_star
    model = DecoderModel(book, scaling, shape, tset, k=k, **model_kw)
    return Pipeline(book, truth_scaling, model, report)


@dataclass
class ExperimentConfig:
    """
    Monte-Carlo grid over noise levels and event counts.

    Each trial draws ``n_events`` particles in ``window_s`` (speeds and
    amplitudes ±20 % around the defaults, arrivals at least ``min_gap_s``
    apart), synthesizes them with ``truth_scaling`` and decodes with
    ``model``. ``channels`` fixes the chronological channel sequence.
    """

    model: DecoderModel
    truth_scaling: ScalingTable
    noise_levels: tuple[float, ...] = (0.0,)
    event_counts: tuple[int, ...] = (10,)
    trials: int = 100
    rng_seed: int = 0
    window_s: float = REPLAY_WINDOW_S
    min_gap_s: float = 2e-3
    speed_range: tuple[float, float] = (0.8 * DEFAULT_SPEED_UM_S, 1.2 * DEFAULT_SPEED_UM_S)
    amplitude_range: tuple[float, float] = (0.8 * DEFAULT_AMPLITUDE_V, 1.2 * DEFAULT_AMPLITUDE_V)
    channels: tuple[int, ...] | None = None
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def trial_seeds(rng_seed: int, n_events: int, trial: int) -> tuple[int, int]:
    """Scenario and noise seeds of one trial."""
    a, b = np.random.SeedSequence([rng_seed, n_events, trial]).generate_state(2)
    return int(a), int(b)


def run_trial(cfg: ExperimentConfig, noise_sigma_v: float, n_events: int, trial: int):
    """Synthesize, decode and score one trial. Returns (events, result, report)."""
    book = cfg.model.book
    s_seed, n_seed = trial_seeds(cfg.rng_seed, n_events, trial)
    events = random_scenario(book, n_events, cfg.window_s, cfg.speed_range, cfg.amplitude_range,
                             rng_seed=s_seed, min_gap_s=cfg.min_gap_s, channels=cfg.channels)
    synth = SynthConfig(book, cfg.truth_scaling, noise_sigma_v, n_seed, duration_s=cfg.window_s,
                        sample_rate_hz=cfg.sample_rate_hz)
    record = synthesize_record(events, synth)
    result = decode_record(record, cfg.model)
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")
        report = score(result, events, book)
    return events, result, report


def run_experiment(cfg: ExperimentConfig) -> tuple[dict, list[dict]]:
    """
    Run every (noise level, event count, trial) and aggregate.

    Returns the aggregate report (one entry per grid cell with the mean and
    standard deviation of accuracy and speed MAE) and the per-trial rows.
    Trials run on up to ``CODESMUX_THREADS`` threads; results do not depend
    on the thread count.
    """
    jobs = [(sigma, n, t) for sigma in cfg.noise_levels for n in cfg.event_counts
            for t in range(cfg.trials)]

    def one(job):
        sigma, n, t = job
        _, _, rep = run_trial(cfg, sigma, n, t)
        return {"trial": t, "noise_sigma_v": float(sigma), "n_events": n,
                "accuracy": rep.channel_accuracy, "speed_mae": rep.speed_mae_um_s}

    threads = _n_threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(j) for j in jobs]

    cells = []
    for sigma in cfg.noise_levels:
        for n in cfg.event_counts:
            sel = [r for r in rows if r["noise_sigma_v"] == float(sigma) and r["n_events"] == n]
            acc = np.array([r["accuracy"] for r in sel])
            mae = np.array([r["speed_mae"] for r in sel])
            cells.append({"noise_sigma_v": float(sigma), "n_events": n, "trials": len(sel),
                          "accuracy_mean": float(acc.mean()), "accuracy_std": float(acc.std()),
                          "speed_mae_mean": float(mae.mean()), "speed_mae_std": float(mae.std())})
    return {"seed": cfg.rng_seed, "trials": cfg.trials, "cells": cells}, rows
