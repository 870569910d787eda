"""Shunt fault simulation and dataset generation.

A fault splits its line at position t into two series segments joined at an
internal fault node, stamps a shunt admittance there for the fault type,
and re-solves the nodal system.  Eleven fault types are covered: the three
single-line-to-ground, three line-to-line, three double-line-to-ground and
the two three-phase faults.  Line-to-ground paths run through rf + rg;
line-to-line paths through 2 rf; multi-phase ground faults use rf legs into
a common node tied to ground through rg.  The ungrounded three-phase fault
leaves the common node floating, which Kron reduction turns into an
equivalent delta.  The internal fault node (and the common node) never
appears in measurement maps.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import features
from .feeder import (
    FeederModel,
    NodeIndex,
    NetworkSystem,
    assemble_network,
    candidate_buses,
    solve_network,
    source_voltage,
    stamp_line_block,
    _Triplets,
)


class SimulationError(Exception):
    """A scenario could not be solved; the message names the scenario."""


class FaultType(Enum):
    AG = 0
    BG = 1
    CG = 2
    AB = 3
    BC = 4
    AC = 5
    ABG = 6
    BCG = 7
    ACG = 8
    ABC = 9
    ABCG = 10

    @property
    def phases(self) -> tuple[str, ...]:
        return _FAULT_PHASES[self]

    @property
    def grounded(self) -> bool:
        return self.name.endswith("G")

    @property
    def index(self) -> int:
        return self.value


FAULT_TYPES: tuple[FaultType, ...] = tuple(FaultType)
_FAULT_PHASES = {
    FaultType.AG: ("A",),
    FaultType.BG: ("B",),
    FaultType.CG: ("C",),
    FaultType.AB: ("A", "B"),
    FaultType.BC: ("B", "C"),
    FaultType.AC: ("A", "C"),
    FaultType.ABG: ("A", "B"),
    FaultType.BCG: ("B", "C"),
    FaultType.ACG: ("A", "C"),
    FaultType.ABC: ("A", "B", "C"),
    FaultType.ABCG: ("A", "B", "C"),
}
LG_TYPES = (FaultType.AG, FaultType.BG, FaultType.CG)
LL_TYPES = (FaultType.AB, FaultType.BC, FaultType.AC)
LLG_TYPES = (FaultType.ABG, FaultType.BCG, FaultType.ACG)


@dataclass(frozen=True)
class FaultSpec:
    """One shunt fault: line, normalized position, type and resistances."""

    line: str
    position: float
    kind: FaultType
    rf_ohm: float
    rg_ohm: float
    hour: int

    def __post_init__(self):
        if not 0.0 < self.position < 1.0:
            raise ValueError(
                f"fault position must lie strictly inside (0, 1), got {self.position}"
            )
        if self.rf_ohm <= 0.0:
            raise ValueError("rf must be positive")
        if self.rg_ohm <= 0.0:
            raise ValueError("rg must be positive")
        if self.hour < 0:
            raise ValueError("hour must be non-negative")


@dataclass(frozen=True)
class PhasorRecord:
    """Solved pre-fault and during-fault phasors for one scenario.

    ``residual`` is the solver's own KCL check on the expanded during-fault
    system, ``max|YV - I| / max(1, max|I|)``.
    """

    spec: FaultSpec
    v_pre: dict[tuple[str, str], complex]
    v_fault: dict[tuple[str, str], complex]
    i_pre: dict[str, complex]
    i_fault: dict[str, complex]
    residual: float = 0.0

    @property
    def line_label(self) -> str:
        return self.spec.line

    @property
    def kind_label(self) -> FaultType:
        return self.spec.kind


@dataclass(frozen=True)
class ScenarioConfig:
    """Dataset generation policy.

    Placement mode sweeps every (line, type, hour) combination at the line
    midpoint with fixed resistances; cnn mode draws ``samples`` random
    scenarios with uniform position, uniform rf over a range and rg from a
    finite choice set.
    """

    mode: str
    hours: tuple[int, ...]
    rf_ohm: float | tuple[float, float] = 0.001
    rg_ohm: float | tuple[float, ...] = 1.0
    samples: int = 0
    seed: int = 0
    noise_sigma: float = 0.0
    types: tuple[FaultType, ...] = FAULT_TYPES

    def __post_init__(self):
        if self.mode not in ("placement", "cnn"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.hours:
            raise ValueError("at least one hour required")
        if any(h < 0 or h > 23 for h in self.hours):
            raise ValueError("hours must lie in 0..23")
        if self.mode == "placement":
            if not isinstance(self.rf_ohm, (int, float)):
                raise ValueError("placement mode uses a fixed rf")
            if not isinstance(self.rg_ohm, (int, float)):
                raise ValueError("placement mode uses a fixed rg")
        else:
            if self.samples <= 0:
                raise ValueError("cnn mode needs a positive sample count")
        if self.noise_sigma < 0.0:
            raise ValueError("noise sigma must be non-negative")
        if not self.types:
            raise ValueError("at least one fault type required")
        if any(not isinstance(t, FaultType) for t in self.types):
            raise ValueError("types must be FaultType members")


@dataclass(frozen=True)
class FaultStamp:
    """Dense shunt admittance stamp over fault nodes.

    ``nodes`` are faulted phase letters plus ``"N"`` for the internal
    common node of grounded multi-phase faults.
    """

    nodes: tuple[str, ...]
    y: np.ndarray


def fault_stamp(kind: FaultType, rf_ohm: float, rg_ohm: float, zbase_ohm: float) -> FaultStamp:
    """Per-unit shunt admittance stamp for one fault type.

    Ohmic resistances convert through the impedance base of the faulted
    voltage level.  The floating common node of the ungrounded three-phase
    fault is eliminated here, leaving its equivalent delta.
    """
    rf = rf_ohm / zbase_ohm
    rg = rg_ohm / zbase_ohm
    phases = kind.phases
    if kind in LG_TYPES:
        y = np.array([[1.0 / (rf + rg)]], dtype=np.complex128)
        return FaultStamp(nodes=phases, y=y)
    if kind in LL_TYPES:
        yb = 1.0 / (2.0 * rf)
        y = np.array([[yb, -yb], [-yb, yb]], dtype=np.complex128)
        return FaultStamp(nodes=phases, y=y)
    if kind in LLG_TYPES or kind is FaultType.ABCG:
        k = len(phases)
        yf = 1.0 / rf
        yg = 1.0 / rg
        y = np.zeros((k + 1, k + 1), dtype=np.complex128)
        for a in range(k):
            y[a, a] = yf
            y[a, k] = y[k, a] = -yf
        y[k, k] = k * yf + yg
        return FaultStamp(nodes=phases + ("N",), y=y)
    if kind is FaultType.ABC:
        yf = 1.0 / rf
        full = np.zeros((4, 4), dtype=np.complex128)
        for a in range(3):
            full[a, a] = yf
            full[a, 3] = full[3, a] = -yf
        full[3, 3] = 3.0 * yf
        reduced = full[:3, :3] - np.outer(full[:3, 3], full[3, :3]) / full[3, 3]
        return FaultStamp(nodes=phases, y=reduced)
    raise ValueError(f"unhandled fault type {kind}")


class ScenarioEngine:
    """Builds and solves fault scenarios for one feeder model.

    Pre-fault systems are cached per hour; line stamps are precomputed once
    so that each scenario only reassembles the faulted segment.
    """

    def __init__(self, model: FeederModel):
        self.model = model
        self.index = NodeIndex.from_model(model)
        self._prefault: dict[int, tuple[NetworkSystem, np.ndarray]] = {}
        self._lines = {ln.id: ln for ln in model.lines}

    def prefault(self, hour: int) -> tuple[NetworkSystem, np.ndarray]:
        if hour not in self._prefault:
            system = assemble_network(self.model, hour)
            self._prefault[hour] = (system, solve_network(system))
        return self._prefault[hour]

    def _head_current(self, v: np.ndarray) -> dict[str, complex]:
        """Feeder-head currents through the source branch, per phase."""
        model = self.model
        ysrc = 1.0 / model.source.z
        out = {}
        for phase in model.bus(model.source.bus).phases:
            r = self.index.row(model.source.bus, phase)
            out[phase] = complex((source_voltage(model, phase) - v[r]) * ysrc)
        return out

    def simulate(self, spec: FaultSpec) -> PhasorRecord:
        model = self.model
        if spec.line not in self._lines:
            raise SimulationError(f"{_scenario_tag(spec)}: unknown line")
        line = self._lines[spec.line]
        if not set(spec.kind.phases) <= set(line.phases):
            raise SimulationError(
                f"{_scenario_tag(spec)}: fault phases "
                f"{''.join(spec.kind.phases)} not on line phases {''.join(line.phases)}"
            )

        base_system, v_pre = self.prefault(spec.hour)
        n = len(self.index)
        stamp = fault_stamp(spec.kind, spec.rf_ohm, spec.rg_ohm, model.base.z_ohm)

        # expanded system: base rows, then one row per line phase at the
        # fault node, then the common node when the stamp carries one
        fault_rows = {p: n + i for i, p in enumerate(line.phases)}
        extra = len(line.phases)
        common_row = None
        if "N" in stamp.nodes:
            common_row = n + extra
            extra += 1
        size = n + extra

        tri = _Triplets()
        seg1 = np.linalg.inv(line.z * spec.position)
        seg2 = np.linalg.inv(line.z * (1.0 - spec.position))
        frows = [self.index.row(line.from_bus, p) for p in line.phases]
        trows = [self.index.row(line.to_bus, p) for p in line.phases]
        mrows = [fault_rows[p] for p in line.phases]
        stamp_line_block(tri, seg1, frows, mrows)
        stamp_line_block(tri, seg2, mrows, trows)

        rows = [fault_rows[p] if p != "N" else common_row for p in stamp.nodes]
        tri.add_block(rows, rows, stamp.y)

        srows, scols, svals = tri.arrays()
        # base admittance minus the faulted line's own stamp
        yblk = line.admittance()
        base_tri = _Triplets()
        stamp_line_block(base_tri, -yblk, frows, trows)
        brows, bcols, bvals = base_tri.arrays()

        base_coo = base_system.y.tocoo()
        y = sparse.coo_matrix(
            (
                np.concatenate([base_coo.data, bvals, svals]),
                (
                    np.concatenate([base_coo.row, brows, srows]),
                    np.concatenate([base_coo.col, bcols, scols]),
                ),
            ),
            shape=(size, size),
        ).tocsc()
        i_vec = np.zeros(size, dtype=np.complex128)
        i_vec[:n] = base_system.i

        try:
            lu = splu(y)
        except RuntimeError as exc:
            raise SimulationError(f"{_scenario_tag(spec)}: singular system ({exc})") from None
        v = lu.solve(i_vec)
        v = v + lu.solve(i_vec - y @ v)
        if not np.all(np.isfinite(v)):
            raise SimulationError(f"{_scenario_tag(spec)}: non-finite solution")
        residual = float(
            np.abs(y @ v - i_vec).max() / max(1.0, np.abs(i_vec).max())
        )

        v_pre_map = {node: complex(v_pre[r]) for node, r in self.index.row_of.items()}
        v_fault_map = {node: complex(v[r]) for node, r in self.index.row_of.items()}
        return PhasorRecord(
            spec=spec,
            v_pre=v_pre_map,
            v_fault=v_fault_map,
            i_pre=self._head_current(v_pre),
            i_fault=self._head_current(v[:n]),
            residual=residual,
        )


def _scenario_tag(spec: FaultSpec) -> str:
    return (
        f"fault {spec.kind.name} on line {spec.line} at t={spec.position:g}, "
        f"rf={spec.rf_ohm:g} ohm, rg={spec.rg_ohm:g} ohm, hour {spec.hour}"
    )


def simulate_scenario(model: FeederModel, spec: FaultSpec) -> PhasorRecord:
    """Solve one fault scenario against a fresh engine."""
    return ScenarioEngine(model).simulate(spec)


def generate_placement_dataset(model: FeederModel, config: ScenarioConfig) -> list[PhasorRecord]:
    """Midpoint fault sweep: one record per (line, fault type, hour).

    Records come back ordered by line id, then fault type, then hour.  Any
    scenario the solver rejects propagates as a SimulationError naming it.
    """
    if config.mode != "placement":
        raise ValueError("config.mode must be 'placement'")
    engine = ScenarioEngine(model)
    records = []
    for line in sorted(model.lines, key=lambda l: l.id):
        for kind in config.types:
            for hour in config.hours:
                spec = FaultSpec(
                    line=line.id,
                    position=0.5,
                    kind=kind,
                    rf_ohm=float(config.rf_ohm),
                    rg_ohm=float(config.rg_ohm),
                    hour=hour,
                )
                records.append(engine.simulate(spec))
    return records


PRE_STEPS = 15
FAULT_STEPS = 15
TIMESTEPS = PRE_STEPS + FAULT_STEPS


@dataclass(frozen=True)
class CnnDataset:
    """Windowed phasor sequences with line / fault-type labels.

    ``x`` has shape (samples, 30, width): fifteen pre-fault steps followed
    by fifteen during-fault steps of the raw sequence-component feature
    vector (same column layout as the delta features).
    """

    x: np.ndarray
    loc_index: np.ndarray
    type_index: np.ndarray
    line_ids: tuple[str, ...]
    buses: tuple[str, ...]
    seed: int
    noise_sigma: float

    @property
    def width(self) -> int:
        return self.x.shape[2]


def _state_vector(record_v: dict, record_i: dict, buses) -> np.ndarray:
    """Raw sequence-component measurement vector for one network state."""
    row: list[float] = []
    for k, bus in enumerate(buses):
        v = features.A_INV @ features._phase_vector(record_v, bus)
        row.extend(features._seq_reals(v))
        if k == 0:
            i = features.A_INV @ np.array(
                [record_i.get(p, 0j) for p in ("A", "B", "C")]
            )
            row.extend(features._seq_reals(i))
    return np.asarray(row, dtype=np.float64)


def generate_cnn_dataset(model: FeederModel, config: ScenarioConfig) -> CnnDataset:
    """Random fault scenarios as 30-step measurement sequences.

    Each sample draws uniformly: a line, a position in (0, 1), one of the
    eleven fault types, rf in its range, rg from its choice set and an hour
    from the configured list.  Optional relative Gaussian noise perturbs
    every time step independently; with sigma zero the pre-fault steps are
    exact replicas.
    """
    if config.mode != "cnn":
        raise ValueError("config.mode must be 'cnn'")
    rng = np.random.default_rng(config.seed)
    engine = ScenarioEngine(model)
    line_ids = tuple(sorted(ln.id for ln in model.lines))
    buses = tuple(candidate_buses(model))
    rf_lo, rf_hi = (
        config.rf_ohm if isinstance(config.rf_ohm, tuple) else (config.rf_ohm, config.rf_ohm)
    )
    rg_choices = (
        config.rg_ohm if isinstance(config.rg_ohm, tuple) else (config.rg_ohm,)
    )

    width = features.FeatureLayout.for_buses(buses).width
    x = np.empty((config.samples, TIMESTEPS, width), dtype=np.float32)
    loc = np.empty(config.samples, dtype=np.uint16)
    typ = np.empty(config.samples, dtype=np.uint16)
    for s in range(config.samples):
        line = line_ids[rng.integers(len(line_ids))]
        position = float(rng.uniform(0.0, 1.0))
        while position == 0.0:
            position = float(rng.uniform(0.0, 1.0))
        kind = config.types[rng.integers(len(config.types))]
        rf = float(rng.uniform(rf_lo, rf_hi)) if rf_hi > rf_lo else float(rf_lo)
        rg = float(rg_choices[rng.integers(len(rg_choices))])
        hour = int(config.hours[rng.integers(len(config.hours))])
        spec = FaultSpec(
            line=line, position=position, kind=kind, rf_ohm=rf, rg_ohm=rg, hour=hour
        )
        record = engine.simulate(spec)
        pre = _state_vector(record.v_pre, record.i_pre, buses)
        fault = _state_vector(record.v_fault, record.i_fault, buses)
        window = np.vstack(
            [np.tile(pre, (PRE_STEPS, 1)), np.tile(fault, (FAULT_STEPS, 1))]
        )
        if config.noise_sigma > 0.0:
            window = window * (
                1.0 + config.noise_sigma * rng.standard_normal(window.shape)
            )
        x[s] = window.astype(np.float32)
        loc[s] = line_ids.index(line)
        typ[s] = kind.index
    return CnnDataset(
        x=x,
        loc_index=loc,
        type_index=typ,
        line_ids=line_ids,
        buses=buses,
        seed=config.seed,
        noise_sigma=config.noise_sigma,
    )
