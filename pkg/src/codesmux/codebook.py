"""
Unipolar sensor codes and the electrode geometry shared by every sensor.

A sensor produces a pulse on the code channel for each ``1`` in its code
(a positive bit) and nothing for a ``0``. Codes are non-orthogonal: any
distinct set of bit strings is admissible, as long as every code starts with
a positive bit so the pre-coding-to-first-pulse distance is the same for all
sensors.

generate_codebook(): deterministic greedy max-min Hamming selection.
validate_codebook(): check a book and list every violation.
cross_correlation(): lagged dot products between two codes.
min_hamming_distance(): worst-case pairwise distance in a book.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SensorCode:
    """One sensor's digital code, most significant (first) bit first."""

    sensor_id: int
    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) < 1:
            raise ValueError("a code needs at least one bit")
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"code bits must be 0 or 1, got {self.bits!r}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_string(cls, sensor_id: int, bitstring: str) -> "SensorCode":
        return cls(sensor_id, tuple(int(c) for c in bitstring.strip()))

    @property
    def length(self) -> int:
        return len(self.bits)

    @property
    def popcount(self) -> int:
        return sum(self.bits)

    @property
    def positive_bits(self) -> list[int]:
        """1-based positions of the positive bits."""
        return [k + 1 for k, b in enumerate(self.bits) if b]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=int)

    def __str__(self):
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class SensorGeometry:
    """Axial electrode layout in micrometers.

    ``bit_pitch_um`` is the center-to-center spacing of consecutive bit
    positions, ``pre_offset_um`` the distance from the pre-coding sensing zone
    to the first bit, and ``sensing_zone_um`` the axial extent of one gap,
    which together with the particle speed sets the pulse duration.
    """

    electrode_width_um: float = 10.0
    bit_pitch_um: float = 30.0
    pre_offset_um: float | None = None
    sensing_zone_um: float = 20.0

    def __post_init__(self):
        if self.pre_offset_um is None:
            object.__setattr__(self, "pre_offset_um", self.bit_pitch_um)
        for name in ("electrode_width_um", "bit_pitch_um", "pre_offset_um", "sensing_zone_um"):
            value = float(getattr(self, name))
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
            object.__setattr__(self, name, value)

    def bit_distance_um(self, bit: int) -> float:
        """Distance from the pre-coding zone to 1-based bit position ``bit``."""
        return self.pre_offset_um + (bit - 1) * self.bit_pitch_um


@dataclass(frozen=True)
class CodeBook:
    codes: tuple[SensorCode, ...]
    geometry: SensorGeometry = field(default_factory=SensorGeometry)

    def __post_init__(self):
        object.__setattr__(self, "codes", tuple(self.codes))

    def __len__(self):
        return len(self.codes)

    def __iter__(self):
        return iter(self.codes)

    @property
    def length(self) -> int:
        return self.codes[0].length if self.codes else 0

    @property
    def sensor_ids(self) -> list[int]:
        return [c.sensor_id for c in self.codes]

    def code(self, sensor_id: int) -> SensorCode:
        for c in self.codes:
            if c.sensor_id == sensor_id:
                return c
        raise KeyError(f"no sensor {sensor_id} in codebook")

    def span_um(self) -> float:
        """Distance from the pre-coding zone to the last bit position."""
        return self.geometry.bit_distance_um(self.length)


@dataclass(frozen=True)
class Violation:
    kind: str
    sensor_ids: tuple[int, ...]
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_codebook(book: CodeBook) -> ValidationReport:
    """Check every codebook invariant; violations are returned, never raised."""
    violations = []
    codes = book.codes
    if not codes:
        violations.append(Violation("empty", (), "codebook has no codes"))
        return ValidationReport(violations)

    lengths = {c.length for c in codes}
    if len(lengths) > 1:
        expected = codes[0].length
        bad = tuple(c.sensor_id for c in codes if c.length != expected)
        violations.append(Violation(
            "length mismatch", bad,
            f"codes of unequal length {sorted(lengths)}; sensors {list(bad)} differ from {expected}"))

    for c in codes:
        if c.bits[0] != 1:
            violations.append(Violation(
                "leading bit is 0", (c.sensor_id,),
                f"sensor {c.sensor_id}: code {c} has leading bit 0"))

    by_bits: dict[tuple[int, ...], list[int]] = {}
    for c in codes:
        by_bits.setdefault(c.bits, []).append(c.sensor_id)
    for bits, ids in by_bits.items():
        if len(ids) > 1:
            text = "".join(map(str, bits))
            violations.append(Violation(
                "duplicate code", tuple(ids),
                f"sensors {ids} share code {text}"))

    ids = [c.sensor_id for c in codes]
    counts: dict[int, int] = {}
    for i in ids:
        counts[i] = counts.get(i, 0) + 1
    repeated = tuple(sorted(i for i, n in counts.items() if n > 1))
    if repeated:
        violations.append(Violation(
            "duplicate sensor id", repeated, f"sensor ids {list(repeated)} used more than once"))
    if sorted(set(ids)) != list(range(1, len(set(ids)) + 1)):
        violations.append(Violation(
            "non-contiguous ids", tuple(sorted(set(ids))),
            f"sensor ids must be 1..{len(set(ids))}, got {sorted(set(ids))}"))

    return ValidationReport(violations)


def hamming(a, b) -> int:
    return sum(x != y for x, y in zip(a, b))


def generate_codebook(n_sensors: int, n_bits: int,
                      geometry: SensorGeometry | None = None) -> CodeBook:
    """
    Pick ``n_sensors`` distinct leading-1 codes of ``n_bits`` bits.

    The all-ones code is taken first. Each further code is the candidate
    with the largest minimum Hamming distance to the codes already chosen;
    ties go to the candidate that comes first in ascending binary order.

    Raises
    ------
    ValueError
        If ``n_sensors`` exceeds the 2**(n_bits - 1) available codes.
    """
    if n_bits < 1:
        raise ValueError("n_bits must be at least 1")
    capacity = 2 ** (n_bits - 1)
    if n_sensors < 1 or n_sensors > capacity:
        raise ValueError(
            f"capacity exceeded: {n_sensors} sensors requested but only "
            f"{capacity} distinct {n_bits}-bit codes start with 1")
    geometry = geometry or SensorGeometry()

    candidates = [(1,) + rest for rest in itertools.product((0, 1), repeat=n_bits - 1)]
    chosen = [candidates.pop()]  # all-ones
    dmin = [hamming(c, chosen[0]) for c in candidates]
    while len(chosen) < n_sensors:
        best = max(range(len(candidates)), key=lambda i: (dmin[i], -i))
        pick = candidates.pop(best)
        dmin.pop(best)
        chosen.append(pick)
        dmin = [min(d, hamming(c, pick)) for d, c in zip(dmin, candidates)]

    codes = tuple(SensorCode(i + 1, bits) for i, bits in enumerate(chosen))
    return CodeBook(codes, geometry)


def cross_correlation(a: SensorCode, b: SensorCode) -> np.ndarray:
    """
    Lagged dot products of two codes.

    Element ``L - 1 + lag`` holds sum_n a[n] * b[n - lag] for lags
    -(L-1) .. L-1, with zero padding outside the code.
    """
    if a.length != b.length:
        raise ValueError(f"codes differ in length ({a.length} vs {b.length})")
    return np.correlate(a.as_array(), b.as_array(), mode="full")


def min_hamming_distance(book: CodeBook) -> int:
    if len(book.codes) < 2:
        raise ValueError("need at least two codes")
    return min(hamming(a.bits, b.bits) for a, b in itertools.combinations(book.codes, 2))
