"""Symmetrical-component delta features for fault records.

Every record contributes one feature row: the substation bus carries the
real and imaginary parts of its sequence voltage and feeder-head current
deltas (12 columns), every other bus carries its sequence voltage deltas
(6 columns).  Deltas are pre-fault minus during-fault.  Magnitude blocks
and column normalization support the correlation-distance subset scorer.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .faultsim import FaultType, PhasorRecord

ALPHA = cmath.exp(2j * math.pi / 3.0)

# F_012 = A_INV @ F_abc ; row order zero, positive, negative
A_INV = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, ALPHA, ALPHA**2],
        [1.0, ALPHA**2, ALPHA],
    ],
    dtype=np.complex128,
) / 3.0

A_MAT = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, ALPHA**2, ALPHA],
        [1.0, ALPHA, ALPHA**2],
    ],
    dtype=np.complex128,
)


@dataclass(frozen=True)
class SequenceTriple:
    """Zero / positive / negative sequence phasors of one three-phase set."""

    zero: complex
    positive: complex
    negative: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.zero, self.positive, self.negative])


def to_sequence_components(va: complex, vb: complex, vc: complex) -> SequenceTriple:
    f0, f1, f2 = A_INV @ np.array([va, vb, vc])
    return SequenceTriple(zero=f0, positive=f1, negative=f2)


def from_sequence_components(t: SequenceTriple) -> tuple[complex, complex, complex]:
    fa, fb, fc = A_MAT @ t.as_array()
    return complex(fa), complex(fb), complex(fc)


SUBSTATION_WIDTH = 12
BUS_WIDTH = 6


@dataclass(frozen=True)
class FeatureLayout:
    """Ordered bus list (substation first) with column ranges."""

    buses: tuple[str, ...]
    ranges: dict[str, tuple[int, int]]

    @classmethod
    def for_buses(cls, buses: Sequence[str]) -> "FeatureLayout":
        ranges = {}
        start = 0
        for k, bus in enumerate(buses):
            width = SUBSTATION_WIDTH if k == 0 else BUS_WIDTH
            ranges[bus] = (start, start + width)
            start += width
        return cls(buses=tuple(buses), ranges=ranges)

    @property
    def substation(self) -> str:
        return self.buses[0]

    @property
    def width(self) -> int:
        return SUBSTATION_WIDTH + BUS_WIDTH * (len(self.buses) - 1)

    def columns(self, subset: Iterable[str]) -> tuple[tuple[str, ...], np.ndarray]:
        """Canonically ordered subset (substation first) and its column indices."""
        chosen = set(subset)
        missing = chosen - set(self.buses)
        if missing:
            raise KeyError(f"buses not in layout: {sorted(missing)}")
        if self.substation not in chosen:
            raise ValueError("subset must include the substation")
        ordered = tuple(b for b in self.buses if b in chosen)
        cols = np.concatenate(
            [np.arange(*self.ranges[b]) for b in ordered]
        )
        return ordered, cols

    def column_names(self) -> list[str]:
        """Headers in column order; substation currents follow its voltages."""
        names = []
        for k, bus in enumerate(self.buses):
            for seq in range(3):
                names.append(f"{bus}_dV{seq}_re")
                names.append(f"{bus}_dV{seq}_im")
            if k == 0:
                for seq in range(3):
                    names.append(f"sub_dI{seq}_re")
                    names.append(f"sub_dI{seq}_im")
        return names


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows with their layout and (line, fault type) labels."""

    x: np.ndarray
    layout: FeatureLayout
    labels: tuple[tuple[str, "FaultType"], ...]

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[1] != self.layout.width:
            raise ValueError("feature matrix width does not match layout")
        if len(self.labels) != self.x.shape[0]:
            raise ValueError("one label pair per row required")

    @property
    def line_labels(self) -> np.ndarray:
        return np.array([line for line, _ in self.labels])

    @property
    def kind_labels(self) -> np.ndarray:
        return np.array([kind.name for _, kind in self.labels])

    def select(self, subset: Iterable[str]) -> "FeatureMatrix":
        """Restrict columns to a bus subset (keeps canonical bus order)."""
        ordered, cols = self.layout.columns(subset)
        return FeatureMatrix(
            x=self.x[:, cols],
            layout=FeatureLayout.for_buses(ordered),
            labels=self.labels,
        )


def _phase_vector(vmap: dict, bus: str, phases=("A", "B", "C")) -> np.ndarray:
    """Three-phase phasor vector for one bus; absent phases read as zero."""
    return np.array([vmap.get((bus, p), 0j) for p in phases])


def _seq_reals(triple: np.ndarray) -> list[float]:
    out = []
    for f in triple:
        out.append(f.real)
        out.append(f.imag)
    return out


def delta_features(record: "PhasorRecord", buses: Sequence[str]) -> np.ndarray:
    """One feature row: sequence deltas (pre minus during) over ``buses``.

    ``buses`` is the layout order, substation first.  The substation
    contributes voltage and feeder-head current deltas, every other bus its
    voltage deltas only.
    """
    row: list[float] = []
    for k, bus in enumerate(buses):
        dv = _phase_vector(record.v_pre, bus) - _phase_vector(record.v_fault, bus)
        row.extend(_seq_reals(A_INV @ dv))
        if k == 0:
            di = np.array(
                [record.i_pre.get(p, 0j) - record.i_fault.get(p, 0j) for p in ("A", "B", "C")]
            )
            row.extend(_seq_reals(A_INV @ di))
    return np.asarray(row, dtype=np.float64)


def build_feature_matrix(records: Sequence["PhasorRecord"], buses: Sequence[str]) -> FeatureMatrix:
    layout = FeatureLayout.for_buses(buses)
    x = np.empty((len(records), layout.width), dtype=np.float64)
    labels = []
    for r, rec in enumerate(records):
        x[r] = delta_features(rec, buses)
        labels.append((rec.spec.line, rec.spec.kind))
    return FeatureMatrix(x=x, layout=layout, labels=tuple(labels))


def normalize_columns(fm: FeatureMatrix) -> FeatureMatrix:
    """Scale every column to unit Euclidean norm; zero columns pass through."""
    norms = np.linalg.norm(fm.x, axis=0)
    scale = np.where(norms > 0.0, norms, 1.0)
    return FeatureMatrix(x=fm.x / scale, layout=fm.layout, labels=fm.labels)


@dataclass(frozen=True)
class SequenceMagnitudeBlocks:
    """Per-sequence magnitude matrices and their vertical stack.

    ``x[k][s, i]`` is the voltage-delta magnitude of sequence ``k`` for
    record ``s`` at the i-th bus of the subset; ``z`` stacks the three
    blocks into a ``3n x |Q|`` matrix whose columns feed the correlation
    distance score.
    """

    buses: tuple[str, ...]
    x: tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def z(self) -> np.ndarray:
        return np.vstack(self.x)


def sequence_magnitude_blocks(fm: FeatureMatrix, subset: Iterable[str]) -> SequenceMagnitudeBlocks:
    """Magnitudes of the voltage-delta sequence pairs for a bus subset.

    Works column-pair-wise on an already normalized feature matrix: for bus
    block start c, sequence k uses columns c + 2k (real) and c + 2k + 1
    (imaginary).  Only the voltage half of the substation block is used.
    """
    ordered, _ = fm.layout.columns(subset)
    n = fm.x.shape[0]
    blocks = [np.empty((n, len(ordered))) for _ in range(3)]
    for i, bus in enumerate(ordered):
        start, _stop = fm.layout.ranges[bus]
        for k in range(3):
            re = fm.x[:, start + 2 * k]
            im = fm.x[:, start + 2 * k + 1]
            blocks[k][:, i] = np.sqrt(re**2 + im**2)
    return SequenceMagnitudeBlocks(buses=ordered, x=tuple(blocks))
