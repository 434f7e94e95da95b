"""
Recover each particle's sensor from a two-channel record.

Pipeline: detect pre-coding pulses, extract their features, estimate speeds by
K-NN, build one code-channel template per (pulse, sensor) hypothesis, group
pulses whose templates can overlap into clusters, and pick for each cluster
the sensor combination whose summed templates best fit the code channel in
the least-squares sense.

Clusters of up to ``n_exact`` pulses are enumerated exhaustively. Larger ones
use a chronological beam search whose partial assignments are scored only on
samples that no later pulse can touch.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.optimize import brentq

from .calibrate import ScalingTable
from .codebook import CodeBook, SensorCode
from .pulsefeat import (PulseFeatures, auto_threshold, detect_pulses,
                        extract_features, level_crossings, pulse_center, smooth)
from .speedknn import TrainingSet, knn_predict


class TemplateRangeError(ValueError):
    """A template does not fit inside the record."""


@dataclass(frozen=True, eq=False)
class CodeTemplate:
    pulse_index: int
    sensor_id: int
    start: int
    samples: np.ndarray
    est_speed_um_s: float
    est_amplitude_v: float

    @property
    def end(self) -> int:
        """Index one past the last sample."""
        return self.start + len(self.samples)

    def dense(self, n_samples: int) -> np.ndarray:
        out = np.zeros(n_samples)
        out[self.start:self.end] = self.samples
        return out


@dataclass(frozen=True)
class DecodedEvent:
    pulse_index: int
    sensor_id: int
    t_peak_s: float
    est_speed_um_s: float
    est_amplitude_v: float


@dataclass
class DecodeResult:
    events: list[DecodedEvent]
    total_mse: float
    clusters: list[list[int]]
    exhaustive: list[bool]
    warnings: list[str] = field(default_factory=list)
    reconstruction: np.ndarray | None = field(default=None, repr=False)

    @property
    def channels(self) -> list[int]:
        return [e.sensor_id for e in self.events]


@dataclass
class DecoderModel:
    """Everything the decoder needs besides the record itself."""

    book: CodeBook
    scaling: ScalingTable
    shape: np.ndarray
    training: TrainingSet
    k: int = 5
    threshold_v: float | None = None
    min_separation_s: float | None = None
    n_exact: int = 6
    beam_width: int = 64
    standardize: bool = True
    speed_search: float = 0.10
    speed_step: float = 0.005
    refine_iterations: int = 3

    def __post_init__(self):
        self.shape = np.asarray(self.shape, dtype=float)
        self.scaling.check(self.book)
        if not 1 <= self.k <= len(self.training):
            raise ValueError(f"k={self.k} out of range for {len(self.training)} training samples")
        if self.beam_width < 1 or self.n_exact < 0:
            raise ValueError("beam_width must be >= 1 and n_exact >= 0")
        if self.speed_search < 0 or not self.speed_step > 0:
            raise ValueError("speed_search must be >= 0 and speed_step > 0")


class PulseShape:
    """
    Continuous template lobe built from a normalized pulse shape.

    The shape covers the pulse between its two 1/4-level crossings. Outside
    that range the lobe decays to zero along a parabola matching the edge
    value and slope, so the template keeps the low tails of the pulse.
    """

    def __init__(self, shape):
        s = np.asarray(shape, dtype=float)
        if s.ndim != 1 or len(s) < 3:
            raise ValueError("shape needs at least 3 points")
        self.s = s / s.max()
        self.u = np.linspace(0.0, 1.0, len(s))
        du = self.u[1]
        i = int(np.argmax(self.s))
        if 0 < i < len(s) - 1:
            a, b, c = self.s[i - 1:i + 2]
            denom = a - 2 * b + c
            off = 0.5 * (a - c) / denom if denom != 0 else 0.0
        else:
            off = 0.0
        self.u_peak = (i + off) * du
        left, right = level_crossings(self.s, i, 0.5)
        self.half_width = (right - left) * du
        self.tail_left = self._tail(self.s[0], (self.s[1] - self.s[0]) / du)
        self.tail_right = self._tail(self.s[-1], (self.s[-2] - self.s[-1]) / du)

    @staticmethod
    def _tail(value, slope):
        return 2 * value / slope if value > 0 and slope > 0 else 0.0

    def support(self) -> tuple[float, float]:
        """Extent in normalized units, relative to the peak."""
        return -self.tail_left - self.u_peak, 1 + self.tail_right - self.u_peak

    def __call__(self, u):
        """Lobe value at normalized positions ``u`` measured from the peak."""
        u = np.asarray(u, dtype=float) + self.u_peak
        out = np.interp(u, self.u, self.s)
        left = u < 0
        if self.tail_left > 0:
            out[left] = self.s[0] * np.clip(1 + u[left] / self.tail_left, 0, None) ** 2
        else:
            out[left] = 0.0
        right = u > 1
        if self.tail_right > 0:
            out[right] = self.s[-1] * np.clip(1 - (u[right] - 1) / self.tail_right, 0, None) ** 2
        else:
            out[right] = 0.0
        return out


def _smoothed_lobe(shape: PulseShape, extent, sigma, step):
    """Unit lobe of ``extent`` samples after Gaussian smoothing, on a fine grid."""
    lo_u, hi_u = shape.support()
    pad = 5 * sigma
    x = np.arange(lo_u * extent - pad, hi_u * extent + pad, step)
    lobe = np.zeros(len(x))
    inside = (x >= lo_u * extent) & (x <= hi_u * extent)
    lobe[inside] = shape(x[inside] / extent)
    return gaussian_filter1d(lobe, sigma / step, mode="constant")


def _half_width(y, step):
    i = int(np.argmax(y))
    left, right = level_crossings(y, i, 0.5)
    return (right - left) * step


def unsmoothed_amplitude(pf: PulseFeatures, shape: PulseShape, smoothing_s: float,
                         sample_rate: float) -> float:
    """
    Peak of the pulse before the decoder's Gaussian pre-filter.

    Smoothing lowers and widens a pulse. The unfiltered lobe width is the one
    whose filtered half-peak width equals the measured ``x3``; the measured
    peak is divided by that lobe's filtered peak. Returns ``x1`` unchanged
    when there is no filter or the pulse is narrower than the filter itself.
    """
    sigma = smoothing_s * sample_rate
    if sigma <= 0:
        return pf.x1_v
    x3 = pf.x3_s * sample_rate
    step = min(0.05, sigma / 20)

    def mismatch(width):
        return _half_width(_smoothed_lobe(shape, width / shape.half_width, sigma, step), step) - x3

    lo = 4 * step
    if mismatch(lo) >= 0 or mismatch(x3) <= 0:
        return pf.x1_v
    width = brentq(mismatch, lo, x3, xtol=1e-3)
    return pf.x1_v / float(_smoothed_lobe(shape, width / shape.half_width, sigma, step).max())


def build_template(pf: PulseFeatures, sensor: SensorCode, scaling: ScalingTable, shape,
                   book: CodeBook, tset: TrainingSet | None, k: int,
                   sample_rate: float, n_samples: int, pulse_index: int = 0,
                   speed_um_s: float | None = None, clip: bool = False,
                   standardize: bool = False) -> CodeTemplate:
    """
    Predicted code-channel waveform of one particle under one sensor hypothesis.

    Bit k of the code is placed at ``t_peak + distance(k) / speed`` with peak
    ``x1 * scaling[k]``. The lobe width is set from the measured half-peak
    width ``x3`` rather than from the speed. ``speed_um_s`` overrides the
    K-NN estimate (the decoder computes speeds once per pulse).

    Raises
    ------
    TemplateRangeError
        If the template leaves the record and ``clip`` is False.
    """
    if not isinstance(shape, PulseShape):
        shape = PulseShape(shape)
    if speed_um_s is None:
        speed_um_s = float(knn_predict(pf.vector(), tset, k, standardize)[0])
    if not speed_um_s > 0:
        raise ValueError("estimated speed must be positive")
    row = scaling.row(sensor.sensor_id)
    extent = pf.x3_s / shape.half_width
    lo_u, hi_u = shape.support()
    bits = sensor.positive_bits
    centers = [pf.t_peak_s + book.geometry.bit_distance_um(b) / speed_um_s for b in bits]

    start = math.ceil((centers[0] + lo_u * extent) * sample_rate)
    stop = math.floor((centers[-1] + hi_u * extent) * sample_rate) + 1
    if start < 0 or stop > n_samples:
        if not clip:
            raise TemplateRangeError(
                f"template for sensor {sensor.sensor_id} spans samples [{start}, {stop}) "
                f"outside a {n_samples}-sample record")
    start, stop = max(start, 0), min(max(stop, 0), n_samples)
    t = np.arange(start, stop) / sample_rate
    samples = np.zeros(len(t))
    for b, c in zip(bits, centers):
        u = (t - c) / extent
        inside = (u >= lo_u) & (u <= hi_u)
        samples[inside] += pf.x1_v * row[b - 1] * shape(u[inside])
    return CodeTemplate(pulse_index, sensor.sensor_id, start, samples, speed_um_s, pf.x1_v)


def refine_speed(pf: PulseFeatures, sensor: SensorCode, scaling: ScalingTable,
                 shape: PulseShape, book: CodeBook, speed_um_s: float, code_channel,
                 sample_rate: float, search: float = 0.10, step: float = 0.005) -> float:
    """
    Best-fitting speed of one sensor hypothesis given the code channel.

    The pre-coding pulse width only pins the speed down to a few percent at
    moderate SNR, which misplaces the last bits of a long code by a sizable
    fraction of a pulse width. The delays between code pulses measure it far
    more precisely. Candidate speeds on a grid of relative spacing ``step``
    within ``search`` of the K-NN estimate are scored by the least-squares
    fit of the template with its amplitude held fixed,

        score(v) = 2 <y, t_v> - <t_v, t_v>,

    which equals <y, y> minus the squared residual. The best grid point is
    refined by a parabola through it and its two neighbors. ``search`` = 0
    returns the K-NN estimate unchanged.
    """
    if search <= 0:
        return speed_um_s
    n_steps = int(round(search / step))
    rel = step * np.arange(-n_steps, n_steps + 1)
    keep = rel > -1
    rel = rel[keep]
    speeds = speed_um_s * (1 + rel)
    y = np.asarray(code_channel, dtype=float)
    row = scaling.row(sensor.sensor_id)
    extent = pf.x3_s / shape.half_width
    lo_u, hi_u = shape.support()
    bits = sensor.positive_bits
    dist = np.array([book.geometry.bit_distance_um(b) for b in bits])
    gains = pf.x1_v * row[np.array(bits) - 1]
    centers = pf.t_peak_s + dist[None, :] / speeds[:, None]
    start = max(0, math.ceil((centers.min() + lo_u * extent) * sample_rate))
    stop = min(len(y), math.floor((centers.max() + hi_u * extent) * sample_rate) + 1)
    if stop <= start:
        return speed_um_s
    t = np.arange(start, stop) / sample_rate
    u = (t[None, None, :] - centers[:, :, None]) / extent
    lobes = np.where((u >= lo_u) & (u <= hi_u), shape(u), 0.0)
    templates = np.einsum("b,vbn->vn", gains, lobes)
    yw = y[start:stop]
    score = 2 * templates @ yw - np.einsum("vn,vn->v", templates, templates)
    i = int(np.argmax(score))
    if 0 < i < len(score) - 1:
        # parabola through the best grid point and its neighbors
        a, b, c = score[i - 1:i + 2]
        denom = a - 2 * b + c
        if denom < 0:
            return float(speed_um_s * (1 + rel[i] + step * 0.5 * (a - c) / denom))
    return float(speeds[i])


def _pulse_span(pf, speed_um_s, shape, book, search, sample_rate):
    """Sample range any template of this pulse can cover over the speed search."""
    extent = pf.x3_s / shape.half_width
    lo_u, hi_u = shape.support()
    last = max(c.positive_bits[-1] for c in book.codes)
    geom = book.geometry
    vmax = speed_um_s * (1 + search)
    vmin = speed_um_s * max(1 - search, 1e-3)
    start = math.ceil((pf.t_peak_s + geom.bit_distance_um(1) / vmax + lo_u * extent) * sample_rate)
    stop = math.floor((pf.t_peak_s + geom.bit_distance_um(last) / vmin + hi_u * extent) * sample_rate) + 1
    return start, stop


def segment_pulses(spans) -> list[list[int]]:
    """
    Group pulses whose sample spans overlap, transitively.

    ``spans[i]`` is the (start, end) sample range, end exclusive, covered by
    any candidate template of pulse i. Clusters come out in chronological
    order, each sorted by pulse index.
    """
    order = sorted(range(len(spans)), key=lambda i: (spans[i][0], i))
    clusters: list[list[int]] = []
    reach = None
    for i in order:
        s, e = spans[i]
        if reach is not None and s < reach:
            clusters[-1].append(i)
            reach = max(reach, e)
        else:
            clusters.append([i])
            reach = e
    return [sorted(c) for c in clusters]


def _stack(candidates):
    """Dense (pulses, sensors, span) template array, the span offset and mask."""
    lo = min(t.start for row in candidates for t in row)
    hi = max(t.end for row in candidates for t in row)
    P, S = len(candidates), len(candidates[0])
    T = np.zeros((P, S, hi - lo))
    mask = np.zeros(hi - lo, dtype=bool)
    for p, row in enumerate(candidates):
        for s, t in enumerate(row):
            T[p, s, t.start - lo:t.end - lo] = t.samples
            mask[t.start - lo:t.end - lo] = True
    return T, lo, hi, mask


def _exhaustive(T, y, chunk=1 << 18):
    """Index of the best combination (lexicographic order) and its SSE."""
    P, S, _ = T.shape
    flat = T.reshape(P * S, -1)
    G = flat @ flat.T
    c = flat @ y
    yy = float(y @ y)
    offsets = np.arange(P) * S
    best_sse, best = np.inf, None
    total = S ** P
    for lo in range(0, total, chunk):
        idx = np.arange(lo, min(total, lo + chunk))
        digits = np.stack(np.unravel_index(idx, (S,) * P), axis=1) + offsets
        sse = yy - 2 * c[digits].sum(axis=1)
        for i in range(P):
            sse += G[digits[:, i], digits[:, i]]
            for j in range(i + 1, P):
                sse += 2 * G[digits[:, i], digits[:, j]]
        k = int(np.argmin(sse))
        if sse[k] < best_sse:
            best_sse, best = float(sse[k]), digits[k] - offsets
    return tuple(int(b) for b in best), max(best_sse, 0.0)


def _beam(T, y, starts, beam_width):
    """
    Chronological beam search over sensor choices.

    After choosing pulse j, partial assignments are ranked by their squared
    residual on samples before ``min(starts[j + 1:])``, the first sample any
    later pulse can affect; ties go to the lexicographically smaller choice.
    """
    P, S, n = T.shape
    assign = np.zeros((1, 0), dtype=int)
    resid = y[None, :].copy()
    for j in range(P):
        B = len(assign)
        resid = (resid[:, None, :] - T[j][None, :, :]).reshape(B * S, n)
        assign = np.concatenate([np.repeat(assign, S, axis=0),
                                 np.tile(np.arange(S), B)[:, None]], axis=1)
        cutoff = int(min(starts[j + 1:])) if j + 1 < P else n
        score = np.einsum("ij,ij->i", resid[:, :cutoff], resid[:, :cutoff])
        keys = [assign[:, c] for c in range(assign.shape[1] - 1, -1, -1)] + [score]
        keep = np.lexsort(keys)[:beam_width]
        assign, resid = assign[keep], resid[keep]
    return tuple(int(a) for a in assign[0]), float(score[keep[0]])


def mmse_assign(candidates, code_channel, n_exact: int = 6, beam_width: int = 64):
    """
    Sensor assignment minimizing the squared error of a cluster's fit.

    Parameters
    ----------
    candidates : list of list of CodeTemplate
        One row per pulse (chronological), one template per sensor, rows in
        the same sensor order.
    code_channel : array
        The observed code channel.
    n_exact : int
        Clusters with at most this many pulses are enumerated exhaustively.
    beam_width : int
        Partial assignments kept per step of the beam search.

    Returns
    -------
    sensor_ids : tuple of int
    mse : float
        Mean squared error over the union of the candidate templates' spans.
    exhaustive : bool
    """
    if not candidates:
        raise ValueError("empty cluster")
    T, lo, hi, mask = _stack(candidates)
    y = np.where(mask, np.asarray(code_channel, dtype=float)[lo:hi], 0.0)
    if len(candidates) <= n_exact:
        choice, sse = _exhaustive(T, y)
        exhaustive = True
    else:
        starts = [min(t.start for t in row) - lo for row in candidates]
        choice, sse = _beam(T, y, starts, beam_width)
        exhaustive = False
    ids = tuple(candidates[p][s].sensor_id for p, s in enumerate(choice))
    return ids, sse / mask.sum(), exhaustive


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("CODESMUX_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class Candidates:
    """Detected pulses of a record and their per-sensor templates, before assignment."""

    code: np.ndarray
    features: list[PulseFeatures]
    speeds: np.ndarray
    templates: list[list[CodeTemplate]]
    clusters: list[list[int]]
    warnings: list[str]
    shape: PulseShape | None


def _hypotheses(model, pf, speed, y, shape, n, pulse_index, fs):
    """One template per sensor, each at its own best-fitting speed."""
    row = []
    for c in model.book.codes:
        vc = refine_speed(pf, c, model.scaling, shape, model.book, speed, y, fs,
                          model.speed_search, model.speed_step)
        row.append(build_template(pf, c, model.scaling, shape, model.book, None, model.k, fs, n,
                                  pulse_index=pulse_index, speed_um_s=vc, clip=True))
    return row


def prepare_candidates(record, model: DecoderModel) -> Candidates:
    """
    Everything up to the assignment step: filter, detect, extract features,
    estimate speeds, build S templates per pulse and segment into clusters.
    """
    fs = record.sample_rate_hz
    sigma_s = model.training.smoothing_s
    pre = smooth(record.pre_channel, sigma_s, fs)
    code = smooth(record.code_channel, sigma_s, fs)
    n = record.n_samples
    book = model.book
    warnings: list[str] = []

    threshold = model.threshold_v if model.threshold_v is not None else auto_threshold(pre)
    min_sep = model.min_separation_s
    if min_sep is None:
        min_sep = book.geometry.sensing_zone_um / float(model.training.speeds.max())
    peaks = detect_pulses(pre, fs, threshold, min_sep)
    features = [extract_features(pre, fs, p) for p in peaks]
    # sub-sample timing; the features' own t_peak sits on the sample grid
    features = [replace(f, t_peak_s=pulse_center(pre, f.peak_index) / fs) for f in features]

    for i in range(len(features) - 1):
        a, b = features[i], features[i + 1]
        if b.t_peak_s - a.t_peak_s < (a.x4_s + b.x4_s) / 2:
            warnings.append(f"pre-coding pulses {i} and {i + 1} overlap; features may be biased")

    if not features:
        return Candidates(code, [], np.zeros(0), [], [], warnings, None)

    speeds = knn_predict(np.array([f.vector() for f in features]), model.training,
                         model.k, model.standardize)
    shape = PulseShape(model.shape)
    templates = [_hypotheses(model, pf, float(v), code, shape, n, i, fs)
                 for i, (pf, v) in enumerate(zip(features, speeds))]
    for i, row in enumerate(templates):
        if any(t.end == n for t in row):
            warnings.append(f"templates of pulse {i} reach the end of the record and were clipped")

    spans = [_pulse_span(pf, float(v), shape, book, model.speed_search, fs)
             for pf, v in zip(features, speeds)]
    return Candidates(code, features, speeds, templates, segment_pulses(spans), warnings, shape)


def decode_record(record, model: DecoderModel) -> DecodeResult:
    """
    Decode every detected particle in ``record``.

    Both channels are first smoothed with the training set's pre-filter.
    ``total_mse`` and the reconstruction refer to the filtered code channel;
    reported amplitudes are corrected back to the unfiltered pulse peak.

    Within a cluster, the first assignment uses templates fitted to the raw
    code channel. Each further round refits every pulse's templates after
    subtracting the templates currently chosen for the other pulses, then
    reassigns, until the assignment stops changing or ``refine_iterations``
    rounds have run.
    """
    fs = record.sample_rate_hz
    n = record.n_samples
    cand = prepare_candidates(record, model)
    code, features, speeds = cand.code, cand.features, cand.speeds
    if not features:
        return DecodeResult([], float(np.mean(code ** 2)) if n else 0.0, [], [], cand.warnings,
                            np.zeros(n))
    shape = cand.shape
    by_id = {c.sensor_id: j for j, c in enumerate(model.book.codes)}
    candidates, clusters = cand.templates, cand.clusters

    def hypotheses(i, y):
        return _hypotheses(model, features[i], float(speeds[i]), y, shape, n, i, fs)

    def solve(cluster):
        rows = [candidates[i] for i in cluster]
        ids, mse, exact = mmse_assign(rows, code, model.n_exact, model.beam_width)
        if model.speed_search <= 0 or len(cluster) < 2:
            return rows, ids, exact
        for _ in range(model.refine_iterations):
            picked = [row[by_id[s]] for row, s in zip(rows, ids)]
            fitted = np.zeros(n)
            for t in picked:
                fitted[t.start:t.end] += t.samples
            rows = []
            for i, t in zip(cluster, picked):
                others = fitted.copy()
                others[t.start:t.end] -= t.samples
                rows.append(hypotheses(i, code - others))
            new_ids, mse, exact = mmse_assign(rows, code, model.n_exact, model.beam_width)
            if new_ids == ids:
                break
            ids = new_ids
        return rows, ids, exact

    threads = _n_threads()
    if threads > 1 and len(clusters) > 1:
        with ThreadPoolExecutor(threads) as pool:
            solutions = list(pool.map(solve, clusters))
    else:
        solutions = [solve(c) for c in clusters]

    chosen: dict[int, CodeTemplate] = {}
    exhaustive = []
    recon = np.zeros(n)
    for cluster, (rows, ids, exact) in zip(clusters, solutions):
        exhaustive.append(exact)
        for i, row, sid in zip(cluster, rows, ids):
            t = row[by_id[sid]]
            chosen[i] = t
            recon[t.start:t.end] += t.samples

    events = [DecodedEvent(i, chosen[i].sensor_id, pf.t_peak_s, chosen[i].est_speed_um_s,
                           unsmoothed_amplitude(pf, shape, model.training.smoothing_s, fs))
              for i, pf in enumerate(features)]
    total_mse = float(np.mean((code - recon) ** 2))
    return DecodeResult(events, total_mse, clusters, exhaustive, cand.warnings, recon)
