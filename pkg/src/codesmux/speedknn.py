"""
Particle speed from pre-coding pulse features by K-nearest-neighbor regression.

The training set pairs the features (x1..x4) of isolated pre-coding pulses
with the speed measured from the delay between the pre-coding peak and the
first code peak. A query's speed is the mean speed of its K nearest training
pulses under Euclidean distance on the raw features. K is chosen by repeated
random sub-sampling validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codebook import CodeBook
from .pulsefeat import (PulseFeatures, auto_threshold, detect_pulses, extract_features,
                        smooth)


@dataclass(frozen=True)
class TrainingSample:
    features: PulseFeatures
    speed_um_s: float

    def __post_init__(self):
        if not self.speed_um_s > 0:
            raise ValueError("training speed must be positive")


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Training samples plus the pre-filter their features were measured with."""

    samples: tuple[TrainingSample, ...]
    smoothing_s: float = 0.0
    X: np.ndarray = field(init=False, repr=False)
    speeds: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise ValueError("training set is empty")
        X = np.array([s.features.vector() for s in samples], dtype=float)
        y = np.array([s.speed_um_s for s in samples], dtype=float)
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("training set contains non-finite values")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "speeds", y)

    def __len__(self):
        return len(self.samples)

    @classmethod
    def from_arrays(cls, X, speeds, smoothing_s: float = 0.0) -> "TrainingSet":
        X = np.asarray(X, dtype=float)
        return cls(tuple(TrainingSample(PulseFeatures(0.0, *row), float(v))
                         for row, v in zip(X, speeds)), smoothing_s)


@dataclass
class KSelectionReport:
    k_star: int
    in_sample_err: np.ndarray
    out_sample_err: np.ndarray
    repeats: int
    rng_seed: int

    @property
    def k_values(self) -> np.ndarray:
        return np.arange(1, len(self.out_sample_err) + 1)


def measure_speed(record, book: CodeBook, threshold_fraction: float = 0.2,
                  smoothing_s: float = 0.0) -> tuple[PulseFeatures, float]:
    """
    Features of the pre-coding pulse and the speed from the first code peak.

    ``record`` must contain a single particle. Both channels are smoothed
    first when ``smoothing_s`` > 0. Code pulses are detected above
    ``threshold_fraction`` of the pre-coding peak (or the noise floor).
    """
    fs = record.sample_rate_hz
    pre = smooth(record.pre_channel, smoothing_s, fs)
    code = smooth(record.code_channel, smoothing_s, fs)
    ipre = int(np.argmax(pre))
    pf = extract_features(pre, fs, ipre)
    threshold = max(threshold_fraction * pf.x1_v, auto_threshold(code))
    peaks = detect_pulses(code, fs, threshold, pf.x3_s)
    peaks = peaks[peaks > ipre]
    if len(peaks) == 0:
        raise ValueError("no code pulse found after the pre-coding pulse")
    dt = (peaks[0] - ipre) / fs
    if not dt > 0:
        raise ValueError("non-positive pre-to-code delay")
    return pf, book.geometry.pre_offset_um / dt


def build_training_set(records, book: CodeBook, smoothing_s: float = 0.0) -> TrainingSet:
    """
    One training sample per isolated-event record.

    ``records`` may hold bare SignalRecords or (record, anything) pairs. The
    decoder applies the same ``smoothing_s`` pre-filter before measuring
    features, so it is stored with the set.
    """
    samples = []
    for rec in records:
        rec = rec[0] if isinstance(rec, tuple) else rec
        pf, v = measure_speed(rec, book, smoothing_s=smoothing_s)
        samples.append(TrainingSample(pf, v))
    return TrainingSet(tuple(samples), smoothing_s)


def _scale(X_train, standardize):
    if not standardize:
        return np.zeros(X_train.shape[1]), np.ones(X_train.shape[1])
    mu = X_train.mean(axis=0)
    sd = X_train.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


def _neighbors(Q, X, k):
    """Indices of the k nearest rows of X for every row of Q, nearest first.

    A stable sort keeps lower training indices first among equal distances.
    """
    d2 = ((Q[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def knn_predict(queries, tset: TrainingSet, k: int, standardize: bool = False) -> np.ndarray:
    """Vectorized ``knn_speed`` for an (n, 4) array of feature vectors."""
    if not 1 <= k <= len(tset):
        raise ValueError(f"k={k} out of range 1..{len(tset)}")
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    mu, sd = _scale(tset.X, standardize)
    nb = _neighbors((Q - mu) / sd, (tset.X - mu) / sd, k)
    return tset.speeds[nb].mean(axis=1)


def knn_speed(query: PulseFeatures, tset: TrainingSet, k: int, standardize: bool = False) -> float:
    """Mean speed of the ``k`` training pulses closest to ``query``."""
    return float(knn_predict(query.vector(), tset, k, standardize)[0])


def _curve(Q, yq, X, y, k_max):
    """RMSE of K-NN predictions for K = 1..k_max."""
    nb = _neighbors(Q, X, k_max)
    preds = np.cumsum(y[nb], axis=1) / np.arange(1, k_max + 1)
    return np.sqrt(np.mean((preds - yq[:, None]) ** 2, axis=0))


def select_k(tset: TrainingSet, k_max: int, repeats: int = 50, rng_seed: int = 0,
             standardize: bool = False) -> KSelectionReport:
    """
    Choose K by repeated random sub-sampling validation.

    Each repeat splits the set into two equal halves (the training half gets
    the odd sample). The in-sample curve scores every training-half sample
    against the training half, itself included; the out-of-sample curve
    scores every test-half sample against the training half. Both are RMSE of
    speed, averaged over repeats. ``k_star`` is the smallest K minimizing the
    out-of-sample curve.
    """
    n = len(tset)
    if n < 4:
        raise ValueError("need at least 4 training samples")
    n_train = math.ceil(n / 2)
    if not 1 <= k_max <= n // 2:
        raise ValueError(f"k_max must be in 1..{n // 2}")

    in_err = np.zeros(k_max)
    out_err = np.zeros(k_max)
    for seq in np.random.SeedSequence(rng_seed).spawn(repeats):
        perm = np.random.default_rng(seq).permutation(n)
        tr = np.sort(perm[:n_train])
        te = np.sort(perm[n_train:])
        mu, sd = _scale(tset.X[tr], standardize)
        Xtr = (tset.X[tr] - mu) / sd
        Xte = (tset.X[te] - mu) / sd
        ytr, yte = tset.speeds[tr], tset.speeds[te]
        in_err += _curve(Xtr, ytr, Xtr, ytr, k_max)
        out_err += _curve(Xte, yte, Xtr, ytr, k_max)
    in_err /= repeats
    out_err /= repeats
    return KSelectionReport(int(np.argmin(out_err)) + 1, in_err, out_err, repeats, rng_seed)
