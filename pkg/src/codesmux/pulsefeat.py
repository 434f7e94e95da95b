"""
Pulse detection and the four shape features of a pre-coding pulse.

x1 is the peak amplitude; x2, x3 and x4 are the full widths of the pulse at
3/4, 1/2 and 1/4 of that amplitude. Widths are measured by walking outward
from the peak to the first sample below each level and interpolating linearly
between that sample and its neighbor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks

LEVELS = (0.75, 0.5, 0.25)


class TruncatedPulseError(ValueError):
    """A level crossing of the pulse lies outside the record."""


@dataclass(frozen=True)
class PulseFeatures:
    t_peak_s: float
    x1_v: float
    x2_s: float
    x3_s: float
    x4_s: float
    peak_index: int = -1

    def vector(self) -> np.ndarray:
        return np.array([self.x1_v, self.x2_s, self.x3_s, self.x4_s])


def mad_sigma(channel) -> float:
    """Robust noise RMS estimate, 1.4826 times the median absolute deviation."""
    x = np.asarray(channel, dtype=float)
    if x.size == 0:
        return 0.0
    return 1.4826 * float(np.median(np.abs(x - np.median(x))))


def auto_threshold(channel, n_sigma: float = 5.0) -> float:
    """Detection threshold: ``n_sigma`` robust noise RMS, never zero."""
    x = np.asarray(channel, dtype=float)
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    return max(n_sigma * mad_sigma(x), 1e-3 * peak, np.finfo(float).tiny)


def smooth(channel, sigma_s: float, sample_rate: float) -> np.ndarray:
    """Gaussian low-pass with standard deviation ``sigma_s`` seconds (0 = off)."""
    x = np.asarray(channel, dtype=float)
    if sigma_s <= 0:
        return x
    return gaussian_filter1d(x, sigma_s * sample_rate, mode="nearest")


def detect_pulses(channel, sample_rate: float, threshold_v: float,
                  min_separation_s: float = 0.0) -> np.ndarray:
    """
    Indices of local maxima above ``threshold_v``, in ascending order.

    When two maxima are closer than ``min_separation_s`` only the larger one
    is kept.
    """
    if threshold_v <= 0:
        raise ValueError("threshold must be positive")
    if min_separation_s < 0:
        raise ValueError("min_separation must be non-negative")
    x = np.asarray(channel, dtype=float)
    distance = max(1, math.ceil(min_separation_s * sample_rate - 1e-9))
    peaks, _ = find_peaks(x, height=threshold_v, distance=distance)
    return peaks[x[peaks] > threshold_v]


def _crossing(x, peak_index, level, direction):
    """Fractional sample index where ``x`` first drops below ``level``."""
    i = peak_index
    n = len(x)
    while True:
        j = i + direction
        if j < 0 or j >= n:
            raise TruncatedPulseError(
                f"pulse at sample {peak_index} does not fall below {level:.4g} V before the record edge")
        if x[j] < level:
            # linear interpolation between samples i (>= level) and j (< level)
            return i + direction * (x[i] - level) / (x[i] - x[j])
        i = j


def level_crossings(channel, peak_index: int, fraction: float) -> tuple[float, float]:
    """Left and right fractional indices where the pulse crosses ``fraction`` of its peak."""
    x = np.asarray(channel, dtype=float)
    level = fraction * x[peak_index]
    return (_crossing(x, peak_index, level, -1), _crossing(x, peak_index, level, +1))


def pulse_center(channel, peak_index: int, fraction: float = 0.5) -> float:
    """
    Sub-sample pulse position: midpoint of the ``fraction``-level crossings.

    Falls back to ``peak_index`` when the midpoint is more than one sample
    away from it (an overlapping neighbor distorts one side).
    """
    left, right = level_crossings(channel, peak_index, fraction)
    mid = 0.5 * (left + right)
    return mid if abs(mid - peak_index) <= 1 else float(peak_index)


def extract_features(channel, sample_rate: float, peak_index: int) -> PulseFeatures:
    """Peak amplitude and the 3/4, 1/2, 1/4 full widths of one pulse."""
    x = np.asarray(channel, dtype=float)
    peak_index = int(peak_index)
    x1 = float(x[peak_index])
    if not x1 > 0:
        raise ValueError(f"sample {peak_index} is not a positive peak")
    widths = []
    for f in LEVELS:
        left, right = level_crossings(x, peak_index, f)
        widths.append((right - left) / sample_rate)
    return PulseFeatures(peak_index / sample_rate, x1, *widths, peak_index=peak_index)


def normalize_pulse(channel, peak_index: int, n_points: int = 64) -> np.ndarray:
    """
    Unit-height, unit-duration version of a pulse.

    The segment between the two 1/4-level crossings is divided by the peak
    value and linearly resampled at ``n_points`` evenly spaced positions, so
    both ends sit at 0.25.
    """
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    x = np.asarray(channel, dtype=float)
    left, right = level_crossings(x, peak_index, 0.25)
    pos = np.linspace(left, right, n_points)
    return np.interp(pos, np.arange(len(x)), x) / x[peak_index]

