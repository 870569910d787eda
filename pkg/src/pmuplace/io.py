"""Dataset, report, and tensor file formats.

Three artifact families share these helpers: the delimited placement
dataset (one row per simulated scenario, metadata columns before the
feature block), the placement report and score curve emitted by the search
commands, and the PMUD binary tensor used for time-series exports.  Every
writer is deterministic: identical inputs produce identical bytes, and each
file carries the seed and a content hash of what produced it, either in
comment lines, report fields, or a JSON sidecar.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .faultsim import FAULT_TYPES, FaultType, PhasorRecord
from .features import BUS_WIDTH, SUBSTATION_WIDTH, FeatureLayout, FeatureMatrix
from .placement import PlacementResult


class DatasetFormatError(Exception):
    """A dataset or report file does not match its documented layout."""


PMUD_MAGIC = b"PMUD"
PMUD_VERSION = 1

_METADATA_COLUMNS = ("scenario", "line", "fault_type", "position", "rf_ohm", "rg_ohm", "hour")


def sha256_of_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_placement_csv(
    path: str | Path,
    records: Sequence[PhasorRecord],
    fm: FeatureMatrix,
    header_fields: dict,
) -> None:
    """Write one scenario per row: metadata columns, then the feature block.

    ``header_fields`` (seed, feeder name and hash, sweep parameters) are
    embedded as leading comment lines so a dataset is self-describing.
    """
    if len(records) != fm.x.shape[0]:
        raise ValueError("one phasor record per feature row required")
    lines = [f"# {key} = {value}" for key, value in header_fields.items()]
    columns = _METADATA_COLUMNS + tuple(fm.layout.column_names())
    lines.append(",".join(columns))
    for rec, row in zip(records, fm.x):
        spec = rec.spec
        cells = [
            f"fault {spec.kind.name} line {spec.line} hour {spec.hour}",
            spec.line,
            spec.kind.name,
            _fmt(spec.position),
            _fmt(spec.rf_ohm),
            _fmt(spec.rg_ohm),
            str(spec.hour),
        ]
        cells.extend(_fmt(v) for v in row)
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _layout_from_columns(columns: Sequence[str]) -> FeatureLayout:
    buses: list[str] = []
    for name in columns:
        if "_dV" in name:
            bus = name.rsplit("_dV", 1)[0]
            if not buses or buses[-1] != bus:
                if bus in buses:
                    raise DatasetFormatError(f"bus {bus} feature columns are split")
                buses.append(bus)
    if not buses:
        raise DatasetFormatError("no feature columns found")
    layout = FeatureLayout.for_buses(buses)
    if tuple(columns) != tuple(layout.column_names()):
        raise DatasetFormatError("feature columns do not match the documented layout")
    return layout


def read_placement_csv(path: str | Path) -> tuple[FeatureMatrix, dict]:
    """Parse a placement dataset back into a feature matrix and its header.

    The returned metadata dict holds the comment-line fields plus the
    per-row scenario metadata needed to reconstruct labels.
    """
    meta: dict = {}
    rows: list[list[str]] = []
    columns: list[str] | None = None
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if columns is None:
                columns = line.split(",")
                continue
            rows.append(line.split(","))
    if columns is None or not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    if tuple(columns[: len(_METADATA_COLUMNS)]) != _METADATA_COLUMNS:
        raise DatasetFormatError(f"{path}: unexpected metadata columns")
    layout = _layout_from_columns(columns[len(_METADATA_COLUMNS) :])
    n_meta = len(_METADATA_COLUMNS)
    x = np.empty((len(rows), layout.width), dtype=np.float64)
    labels = []
    for r, cells in enumerate(rows):
        if len(cells) != n_meta + layout.width:
            raise DatasetFormatError(f"{path}: row {r + 1} has {len(cells)} cells")
        try:
            kind = FaultType[cells[2]]
        except KeyError:
            raise DatasetFormatError(f"{path}: unknown fault type {cells[2]!r}") from None
        labels.append((cells[1], kind))
        x[r] = [float(v) for v in cells[n_meta:]]
    fm = FeatureMatrix(x=x, layout=layout, labels=tuple(labels))
    return fm, meta


def result_to_dict(result: PlacementResult, scorer: str, config: dict, fingerprint: str) -> dict:
    return {
        "selected": list(result.selected),
        "trajectory": [float(v) for v in result.trajectory],
        "refinements": [
            {
                "replaced": st.replaced,
                "replacement": st.replacement,
                "score_before": float(st.score_before),
                "score_after": float(st.score_after),
            }
            for st in result.refinements
        ],
        "recommended_count": int(result.recommended_count),
        "scorer": scorer,
        "config": config,
        "dataset_fingerprint": fingerprint,
    }


def write_report_json(path: str | Path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="ascii")


def read_report_json(path: str | Path) -> dict:
    try:
        report = json.loads(Path(path).read_text(encoding="ascii"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: not valid JSON ({exc})") from None
    for field in ("selected", "trajectory", "recommended_count", "scorer"):
        if field not in report:
            raise DatasetFormatError(f"{path}: report is missing {field!r}")
    return report


def write_curve_csv(path: str | Path, result: PlacementResult, header_fields: dict) -> None:
    """Score-versus-count table with the recommended count marked."""
    lines = [f"# {key} = {value}" for key, value in header_fields.items()]
    lines.append(f"# recommended_count = {result.recommended_count}")
    lines.append(f"# selected = {' '.join(result.selected)}")
    lines.append("pmu_count,best_score,recommended")
    for k, score in enumerate(result.trajectory, start=1):
        marker = 1 if k == result.recommended_count else 0
        lines.append(f"{k},{_fmt(score)},{marker}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


@dataclass(frozen=True)
class PmudFile:
    """In-memory view of one PMUD tensor file."""

    x: np.ndarray
    loc_index: np.ndarray
    type_index: np.ndarray
    n_loc: int

    def __post_init__(self):
        if self.x.ndim != 3:
            raise ValueError("tensor must be (samples, timesteps, width)")
        n = self.x.shape[0]
        if self.loc_index.shape != (n,) or self.type_index.shape != (n,):
            raise ValueError("one location and type label per sample required")


def write_pmud(path: str | Path, data: PmudFile) -> None:
    """Serialize the binary tensor layout.

    Little-endian throughout: the magic, a version word, four u32 dimension
    words (samples, timesteps, width, location count), row-major float32
    data, then the u16 location and type label arrays.
    """
    n, timesteps, width = data.x.shape
    if np.any(data.loc_index >= data.n_loc):
        raise ValueError("location label outside the declared range")
    if np.any(data.type_index >= len(FAULT_TYPES)):
        raise ValueError("fault type label outside the class range")
    with open(path, "wb") as fh:
        fh.write(PMUD_MAGIC)
        fh.write(np.array([PMUD_VERSION, n, timesteps, width, data.n_loc], dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(data.x, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(data.loc_index, dtype="<u2").tobytes())
        fh.write(np.ascontiguousarray(data.type_index, dtype="<u2").tobytes())


def read_pmud(path: str | Path) -> PmudFile:
    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:4] != PMUD_MAGIC:
        raise DatasetFormatError(f"{path}: not a PMUD tensor file")
    header = np.frombuffer(raw, dtype="<u4", count=5, offset=4)
    version, n, timesteps, width, n_loc = (int(v) for v in header)
    if version != PMUD_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    offset = 24
    data_bytes = 4 * n * timesteps * width
    label_bytes = 2 * n
    if len(raw) != offset + data_bytes + 2 * label_bytes:
        raise DatasetFormatError(f"{path}: truncated tensor payload")
    x = np.frombuffer(raw, dtype="<f4", count=n * timesteps * width, offset=offset)
    x = x.reshape(n, timesteps, width).copy()
    offset += data_bytes
    loc = np.frombuffer(raw, dtype="<u2", count=n, offset=offset).copy()
    offset += label_bytes
    typ = np.frombuffer(raw, dtype="<u2", count=n, offset=offset).copy()
    return PmudFile(x=x, loc_index=loc, type_index=typ, n_loc=n_loc)


def pmud_sidecar_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def write_pmud_meta(path: str | Path, meta: dict) -> None:
    """JSON sidecar for a PMUD file: seed, hashes, and label dictionaries.

    The binary layout has no room for provenance, so reproducibility
    metadata travels next to the tensor.
    """
    pmud_sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="ascii")


def read_pmud_meta(path: str | Path) -> dict:
    return json.loads(pmud_sidecar_path(path).read_text(encoding="ascii"))


def _largest_remainder(total: int, fractions: np.ndarray) -> np.ndarray:
    exact = fractions * total
    counts = np.floor(exact).astype(int)
    order = np.argsort(-(exact - counts), kind="stable")
    for k in range(total - counts.sum()):
        counts[order[k]] += 1
    return counts


def stratified_split_indices(
    type_index: np.ndarray,
    fractions: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> tuple[np.ndarray, ...]:
    """Deterministic stratified split by fault type.

    Global split sizes come from largest-remainder rounding of the whole
    sample count, so 10,000 samples at 70-15-15 always give exactly
    7,000/1,500/1,500.  Within each type, samples are shuffled by a seeded
    generator and allocated by largest remainder subject to the remaining
    global capacity, which keeps every per-type count within one sample of
    exact proportionality.  Returned index arrays are ascending.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any(fractions < 0.0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError("split fractions must be nonnegative and sum to one")
    type_index = np.asarray(type_index)
    rng = np.random.default_rng(seed)
    values = np.unique(type_index)
    groups = {int(v): np.flatnonzero(type_index == v) for v in values}

    # floor allocations for every type, then the per-split slack left by the
    # global largest-remainder totals; leftovers can only land in that slack,
    # so no later type's floors are ever crowded out
    floors = {v: np.floor(fractions * g.size).astype(int) for v, g in groups.items()}
    slack = _largest_remainder(type_index.size, fractions)
    for counts in floors.values():
        slack -= counts
    parts: list[list[np.ndarray]] = [[] for _ in fractions]
    for v in (int(v) for v in values):
        members = groups[v][rng.permutation(groups[v].size)]
        exact = fractions * members.size
        counts = floors[v].copy()
        order = np.argsort(-(exact - counts), kind="stable")
        spare = members.size - counts.sum()
        while spare > 0:
            assigned = False
            for s in order:
                if spare == 0:
                    break
                if slack[s] > 0:
                    counts[s] += 1
                    slack[s] -= 1
                    spare -= 1
                    assigned = True
            if not assigned:
                raise ValueError("split capacity exhausted; fractions do not fit")
        start = 0
        for s, count in enumerate(counts):
            parts[s].append(members[start : start + count])
            start += count
    out = []
    for chunks in parts:
        merged = np.concatenate(chunks) if chunks else np.empty(0, dtype=int)
        out.append(np.sort(merged))
    return tuple(out)
