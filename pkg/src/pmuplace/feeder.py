"""Unbalanced radial distribution feeder model and nodal admittance assembly.

The feeder is described by a JSON document (buses, lines, loads, DER units,
source, bases) and turned into a per-phase nodal system ``Y v = i`` in
per-unit.  Loads are modelled as constant shunt admittances, DER units as
constant current injections scaled by an hourly profile, and the upstream
grid as a voltage source behind a per-phase impedance (stamped as its Norton
equivalent).  Missing phases are simply absent rows: a single-phase lateral
contributes one node per bus, so every matrix stays at its reduced size
instead of being zero-padded.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

PHASES = ("A", "B", "C")
PHASE_ANGLES = {
    "A": 0.0,
    "B": -2.0 * math.pi / 3.0,
    "C": 2.0 * math.pi / 3.0,
}
DER_KINDS = ("PV", "WTG", "DG")


class FeederError(Exception):
    """Base class for feeder problems."""


class FeederFormatError(FeederError):
    """The feeder document cannot be parsed into the expected schema."""


class FeederValidationError(FeederError):
    """A parsed feeder violates a model invariant."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


def _phase_tuple(phases) -> tuple[str, ...]:
    if isinstance(phases, str):
        items = list(phases)
    else:
        items = [str(p) for p in phases]
    return tuple(p for p in PHASES if p in items)


@dataclass(frozen=True)
class Bus:
    id: str
    phases: tuple[str, ...]


@dataclass(frozen=True)
class Line:
    """Series line segment with a k x k per-unit impedance block."""

    id: str
    from_bus: str
    to_bus: str
    phases: tuple[str, ...]
    z: np.ndarray

    def admittance(self) -> np.ndarray:
        try:
            return np.linalg.inv(self.z)
        except np.linalg.LinAlgError:
            raise FeederValidationError(
                f"line {self.id!r}: singular impedance block"
            ) from None


@dataclass(frozen=True)
class Load:
    bus: str
    s: dict[str, complex]


@dataclass(frozen=True)
class DerUnit:
    bus: str
    kind: str
    rating_kw: float
    pf: float
    profile: tuple[float, ...]


@dataclass(frozen=True)
class SourceSpec:
    bus: str
    v_pu: float
    z: complex


@dataclass(frozen=True)
class BaseSpec:
    """Voltage (line-to-line, V) and three-phase power (VA) bases."""

    voltage_v: float
    power_va: float

    @property
    def z_ohm(self) -> float:
        return self.voltage_v**2 / self.power_va


@dataclass(frozen=True)
class FeederModel:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    loads: tuple[Load, ...]
    ders: tuple[DerUnit, ...]
    source: SourceSpec
    base: BaseSpec

    def __post_init__(self):
        _validate_model(self)

    def bus(self, bus_id: str) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def line(self, line_id: str) -> Line:
        for ln in self.lines:
            if ln.id == line_id:
                return ln
        raise KeyError(line_id)

    def bus_ids(self) -> list[str]:
        return sorted(b.id for b in self.buses)


def _validate_model(model: FeederModel) -> None:
    seen: set[str] = set()
    by_id: dict[str, Bus] = {}
    for bus in model.buses:
        if bus.id in seen:
            raise FeederValidationError(f"duplicate bus id {bus.id!r}")
        seen.add(bus.id)
        by_id[bus.id] = bus
        if not bus.phases:
            raise FeederValidationError(f"bus {bus.id!r}: empty phase set")
        if not set(bus.phases) <= set(PHASES):
            raise FeederValidationError(f"bus {bus.id!r}: unknown phase")

    line_ids: set[str] = set()
    for ln in model.lines:
        if ln.id in line_ids:
            raise FeederValidationError(f"duplicate line id {ln.id!r}")
        line_ids.add(ln.id)
        for end in (ln.from_bus, ln.to_bus):
            if end not in by_id:
                raise FeederValidationError(
                    f"line {ln.id!r}: references missing bus {end!r}"
                )
        if ln.from_bus == ln.to_bus:
            raise FeederValidationError(f"line {ln.id!r}: degenerate endpoints")
        if not ln.phases:
            raise FeederValidationError(f"line {ln.id!r}: empty phase set")
        for end in (ln.from_bus, ln.to_bus):
            if not set(ln.phases) <= set(by_id[end].phases):
                raise FeederValidationError(
                    f"line {ln.id!r}: phases {''.join(ln.phases)} not present "
                    f"at bus {end!r}"
                )
        k = len(ln.phases)
        if ln.z.shape != (k, k):
            raise FeederValidationError(
                f"line {ln.id!r}: impedance block must be {k}x{k}"
            )
        if not np.allclose(ln.z, ln.z.T, rtol=0.0, atol=0.0):
            raise FeederValidationError(f"line {ln.id!r}: impedance not symmetric")
        if np.any(ln.z.diagonal().real < 0.0):
            raise FeederValidationError(
                f"line {ln.id!r}: negative series resistance"
            )

    for load in model.loads:
        if load.bus not in by_id:
            raise FeederValidationError(f"load references missing bus {load.bus!r}")
        for phase, s in load.s.items():
            if phase not in by_id[load.bus].phases:
                raise FeederValidationError(
                    f"load at bus {load.bus!r}: phase {phase!r} not present"
                )
            if s.real < 0.0:
                raise FeederValidationError(
                    f"load at bus {load.bus!r}: negative active power"
                )

    for der in model.ders:
        if der.bus not in by_id:
            raise FeederValidationError(f"DER references missing bus {der.bus!r}")
        if der.kind not in DER_KINDS:
            raise FeederValidationError(f"DER at {der.bus!r}: unknown kind {der.kind!r}")
        if not 0.0 < der.pf <= 1.0:
            raise FeederValidationError(f"DER at {der.bus!r}: power factor out of (0, 1]")
        if der.rating_kw < 0.0:
            raise FeederValidationError(f"DER at {der.bus!r}: negative rating")
        if len(der.profile) != 24:
            raise FeederValidationError(f"DER at {der.bus!r}: profile must have 24 hours")
        if any(not 0.0 <= m <= 1.0 for m in der.profile):
            raise FeederValidationError(f"DER at {der.bus!r}: profile outside [0, 1]")

    if model.source.bus not in by_id:
        raise FeederValidationError(f"source bus {model.source.bus!r} not defined")
    if model.source.v_pu <= 0.0:
        raise FeederValidationError("source voltage must be positive")
    if model.source.z == 0:
        raise FeederValidationError("source impedance must be nonzero")
    if model.base.voltage_v <= 0.0 or model.base.power_va <= 0.0:
        raise FeederValidationError("bases must be positive")

    # connectivity: every bus reachable from the source over the line graph
    adj: dict[str, set[str]] = {b.id: set() for b in model.buses}
    for ln in model.lines:
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    frontier = [model.source.bus]
    reached = {model.source.bus}
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in reached:
                    reached.add(v)
                    nxt.append(v)
        frontier = nxt
    missing = sorted(set(by_id) - reached)
    if missing:
        raise FeederValidationError(f"buses not connected to source: {missing}")


# ---------------------------------------------------------------------------
# node indexing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NodeIndex:
    """Bijection between (bus, phase) pairs and matrix rows.

    Rows are ordered by bus id (ascending), then phase in A, B, C order.
    """

    nodes: tuple[tuple[str, str], ...]
    row_of: dict[tuple[str, str], int] = field(repr=False)

    @classmethod
    def from_model(cls, model: FeederModel) -> "NodeIndex":
        nodes = []
        for bus in sorted(model.buses, key=lambda b: b.id):
            for phase in bus.phases:
                nodes.append((bus.id, phase))
        return cls(tuple(nodes), {node: r for r, node in enumerate(nodes)})

    def __len__(self) -> int:
        return len(self.nodes)

    def row(self, bus: str, phase: str) -> int:
        return self.row_of[(bus, phase)]


@dataclass(frozen=True)
class NetworkSystem:
    """Assembled nodal system Y v = i (per-unit, complex)."""

    y: sparse.csc_matrix
    i: np.ndarray
    index: NodeIndex


def solve_network(system: NetworkSystem) -> np.ndarray:
    """Solve Y v = i with one step of iterative refinement."""
    lu = splu(system.y.tocsc())
    v = lu.solve(system.i)
    v = v + lu.solve(system.i - system.y @ v)
    return v


def kcl_residual(system: NetworkSystem, v: np.ndarray) -> float:
    """Relative KCL mismatch ``max|Yv - i| / max(1, max|i|)``."""
    mismatch = np.abs(system.y @ v - system.i).max()
    return float(mismatch / max(1.0, np.abs(system.i).max()))


# ---------------------------------------------------------------------------
# stamping
# ---------------------------------------------------------------------------


class _Triplets:
    """Mutable COO triplet accumulator."""

    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[complex] = []

    def add(self, r: int, c: int, v: complex) -> None:
        self.rows.append(r)
        self.cols.append(c)
        self.vals.append(v)

    def add_block(self, rows: list[int], cols: list[int], block: np.ndarray) -> None:
        for a, r in enumerate(rows):
            for b, c in enumerate(cols):
                self.add(r, c, block[a, b])

    def arrays(self):
        return (
            np.asarray(self.rows, dtype=np.int64),
            np.asarray(self.cols, dtype=np.int64),
            np.asarray(self.vals, dtype=np.complex128),
        )


def stamp_line_block(tri: _Triplets, yblk: np.ndarray, from_rows, to_rows) -> None:
    """Stamp a series branch admittance block between two node groups."""
    tri.add_block(from_rows, from_rows, yblk)
    tri.add_block(to_rows, to_rows, yblk)
    tri.add_block(from_rows, to_rows, -yblk)
    tri.add_block(to_rows, from_rows, -yblk)


def source_voltage(model: FeederModel, phase: str) -> complex:
    """Internal source EMF phasor for one phase (per-unit)."""
    return model.source.v_pu * cmath.exp(1j * PHASE_ANGLES[phase])


def der_injections(model: FeederModel, hour: int) -> dict[tuple[str, str], complex]:
    """Constant-current DER injections for one hour, keyed by (bus, phase).

    The unit's complex power (active rating at its power factor, scaled by
    the hourly profile) is shared equally across the phases present at its
    bus; the injection is ``conj(S) / conj(Vnom)`` with Vnom the 1 pu
    nominal-angle phasor.
    """
    out: dict[tuple[str, str], complex] = {}
    for der in model.ders:
        mult = der.profile[hour % 24]
        p = der.rating_kw * 1e3 / model.base.power_va * mult
        q = p * math.tan(math.acos(der.pf))
        phases = model.bus(der.bus).phases
        s_phase = complex(p, q) / len(phases)
        for phase in phases:
            vnom = cmath.exp(1j * PHASE_ANGLES[phase])
            out[(der.bus, phase)] = out.get((der.bus, phase), 0j) + (
                s_phase.conjugate() / vnom.conjugate()
            )
    return out


def assemble_network(model: FeederModel, hour: int) -> NetworkSystem:
    """Assemble the per-unit nodal system for one hour of the day.

    Stamps, in order: line series admittance blocks, the source Norton
    equivalent at the slack bus, constant-admittance loads (conj(S) at 1 pu
    nominal voltage), and DER current injections.  Output is bit-identical
    for identical inputs.
    """
    index = NodeIndex.from_model(model)
    tri = _Triplets()
    i_vec = np.zeros(len(index), dtype=np.complex128)

    for ln in sorted(model.lines, key=lambda l: l.id):
        yblk = ln.admittance()
        frows = [index.row(ln.from_bus, p) for p in ln.phases]
        trows = [index.row(ln.to_bus, p) for p in ln.phases]
        stamp_line_block(tri, yblk, frows, trows)

    ysrc = 1.0 / model.source.z
    for phase in model.bus(model.source.bus).phases:
        r = index.row(model.source.bus, phase)
        tri.add(r, r, ysrc)
        i_vec[r] += ysrc * source_voltage(model, phase)

    for load in sorted(model.loads, key=lambda l: l.bus):
        for phase in sorted(load.s):
            r = index.row(load.bus, phase)
            tri.add(r, r, load.s[phase].conjugate())

    for (bus, phase), inj in sorted(der_injections(model, hour).items()):
        i_vec[index.row(bus, phase)] += inj

    rows, cols, vals = tri.arrays()
    n = len(index)
    y = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    return NetworkSystem(y=y, i=i_vec, index=index)


# ---------------------------------------------------------------------------
# graph queries and reduced-order topology
# ---------------------------------------------------------------------------


def neighbors(model: FeederModel, bus: str, radius: int = 2) -> list[str]:
    """Buses within ``radius`` hops of ``bus`` on the line graph.

    Ordered nearest-first, ties broken by ascending bus id; the query bus is
    excluded.  At the refinement default radius of 2 the list is truncated
    to at most four entries.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    adj: dict[str, set[str]] = {b.id: set() for b in model.buses}
    for ln in model.lines:
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    if bus not in adj:
        raise KeyError(bus)
    out: list[str] = []
    visited = {bus}
    level = [bus]
    for _ in range(radius):
        reached = {v for u in level for v in adj[u]} - visited
        level = sorted(reached)
        out.extend(level)
        visited |= reached
        if not level:
            break
    if radius == 2:
        out = out[:4]
    return out


def positive_sequence_ybus(model: FeederModel) -> np.ndarray:
    """Single-phase equivalent bus admittance matrix (dense complex).

    Each line contributes its positive-sequence impedance: the mean of the
    phase self terms minus the mean of the mutual terms (the scalar value
    for single-phase lines).  The source shunt admittance is added at the
    slack bus.  Rows follow ascending bus id order.
    """
    order = model.bus_ids()
    pos = {b: i for i, b in enumerate(order)}
    n = len(order)
    y = np.zeros((n, n), dtype=np.complex128)
    for ln in model.lines:
        k = len(ln.phases)
        if k == 1:
            z1 = complex(ln.z[0, 0])
        else:
            diag = np.mean(np.diag(ln.z))
            mut = (np.sum(ln.z) - np.sum(np.diag(ln.z))) / (k * (k - 1))
            z1 = complex(diag - mut)
        if z1 == 0:
            raise FeederValidationError(
                f"line {ln.id!r}: zero positive-sequence impedance"
            )
        ybr = 1.0 / z1
        f, t = pos[ln.from_bus], pos[ln.to_bus]
        y[f, f] += ybr
        y[t, t] += ybr
        y[f, t] -= ybr
        y[t, f] -= ybr
    y[pos[model.source.bus], pos[model.source.bus]] += 1.0 / model.source.z
    return y


# ---------------------------------------------------------------------------
# JSON loading
# ---------------------------------------------------------------------------


def _req(obj: dict, key: str, where: str):
    if key not in obj:
        raise FeederFormatError(f"{where}: missing field {key!r}")
    return obj[key]


def _as_complex(value, where: str) -> complex:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise FeederFormatError(f"{where}: complex values are [re, im] pairs")
    re, im = value
    if not all(isinstance(x, (int, float)) for x in (re, im)):
        raise FeederFormatError(f"{where}: complex parts must be numbers")
    return complex(re, im)


def _as_zblock(value, k: int, where: str) -> np.ndarray:
    if not (isinstance(value, list) and len(value) == k):
        raise FeederFormatError(f"{where}: expected {k} impedance rows")
    out = np.zeros((k, k), dtype=np.complex128)
    for a, row in enumerate(value):
        if not (isinstance(row, list) and len(row) == k):
            raise FeederFormatError(f"{where}: row {a} must have {k} entries")
        for b, cell in enumerate(row):
            out[a, b] = _as_complex(cell, f"{where}[{a}][{b}]")
    return out


def load_feeder(path) -> FeederModel:
    """Parse and validate a feeder JSON document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FeederFormatError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}"
        ) from None
    except OSError as exc:
        raise FeederFormatError(f"{path}: {exc.strerror}") from None
    if not isinstance(doc, dict):
        raise FeederFormatError(f"{path}: top level must be an object")

    buses = []
    for k, item in enumerate(_req(doc, "buses", path)):
        where = f"buses[{k}]"
        phases = _phase_tuple(_req(item, "phases", where))
        buses.append(Bus(id=str(_req(item, "id", where)), phases=phases))

    lines = []
    for k, item in enumerate(_req(doc, "lines", path)):
        where = f"lines[{k}]"
        phases = _phase_tuple(_req(item, "phases", where))
        z = _as_zblock(_req(item, "z", where), len(phases), f"{where}.z")
        lines.append(
            Line(
                id=str(_req(item, "id", where)),
                from_bus=str(_req(item, "from", where)),
                to_bus=str(_req(item, "to", where)),
                phases=phases,
                z=z,
            )
        )

    loads = []
    for k, item in enumerate(doc.get("loads", [])):
        where = f"loads[{k}]"
        s_map = _req(item, "s", where)
        if not isinstance(s_map, dict):
            raise FeederFormatError(f"{where}.s: expected a phase map")
        s = {
            phase: _as_complex(val, f"{where}.s[{phase}]")
            for phase, val in sorted(s_map.items())
        }
        loads.append(Load(bus=str(_req(item, "bus", where)), s=s))

    ders = []
    for k, item in enumerate(doc.get("ders", [])):
        where = f"ders[{k}]"
        profile = _req(item, "profile", where)
        if not isinstance(profile, list):
            raise FeederFormatError(f"{where}.profile: expected a list")
        ders.append(
            DerUnit(
                bus=str(_req(item, "bus", where)),
                kind=str(_req(item, "kind", where)),
                rating_kw=float(_req(item, "rating_kw", where)),
                pf=float(_req(item, "pf", where)),
                profile=tuple(float(m) for m in profile),
            )
        )

    src = _req(doc, "source", path)
    source = SourceSpec(
        bus=str(_req(src, "bus", "source")),
        v_pu=float(_req(src, "v_pu", "source")),
        z=_as_complex(_req(src, "z", "source"), "source.z"),
    )
    base_doc = _req(doc, "base", path)
    base = BaseSpec(
        voltage_v=float(_req(base_doc, "voltage_v", "base")),
        power_va=float(_req(base_doc, "power_va", "base")),
    )
    return FeederModel(
        buses=tuple(buses),
        lines=tuple(lines),
        loads=tuple(loads),
        ders=tuple(ders),
        source=source,
        base=base,
    )


def candidate_buses(model: FeederModel) -> list[str]:
    """Measurement bus order: substation first, then ascending bus id."""
    rest = sorted(b.id for b in model.buses if b.id != model.source.bus)
    return [model.source.bus] + rest
