"""Reader for PMUD waveform tensor files.

A PMUD file carries one dataset of fixed-length waveform windows with
two integer labels per window.  Layout, all little endian:

    bytes 0:4    magic ``PMUD``
    bytes 4:24   five uint32: format version (1), sample count n,
                 timesteps per window, feature width, location count
    then         n * timesteps * width float32, row major
    then         n uint16 location labels
    then         n uint16 fault type labels

A JSON sidecar named ``<file>.meta.json`` may sit next to the tensor
file with provenance and label names; it is optional here and passed
through untouched when present.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"PMUD"
SUPPORTED_VERSION = 1
_HEADER = struct.Struct("<4s5I")


class PmudFormatError(Exception):
    """Raised when a file does not decode as a supported PMUD tensor."""


@dataclass
class PmudDataset:
    """One loaded tensor file.

    x has shape (n, timesteps, width) as float32.  loc_index and
    type_index are int64 label vectors of length n.  meta holds the
    sidecar JSON when one was found, otherwise an empty dict.
    """

    x: np.ndarray
    loc_index: np.ndarray
    type_index: np.ndarray
    n_loc: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def timesteps(self) -> int:
        return self.x.shape[1]

    @property
    def width(self) -> int:
        return self.x.shape[2]

    def subset(self, index) -> "PmudDataset":
        """Return a new dataset restricted to the given sample index."""
        return PmudDataset(
            x=self.x[index],
            loc_index=self.loc_index[index],
            type_index=self.type_index[index],
            n_loc=self.n_loc,
            meta=self.meta,
        )


def read_pmud(path: str | Path) -> PmudDataset:
    """Load a PMUD tensor file and its sidecar if one exists."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise PmudFormatError(f"{path}: file too short for a PMUD header")
    magic, version, n, timesteps, width, n_loc = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise PmudFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != SUPPORTED_VERSION:
        raise PmudFormatError(
            f"{path}: unsupported format version {version}, expected {SUPPORTED_VERSION}"
        )
    body = n * timesteps * width * 4 + n * 2 + n * 2
    if len(raw) != _HEADER.size + body:
        raise PmudFormatError(
            f"{path}: expected {_HEADER.size + body} bytes for n={n}, got {len(raw)}"
        )
    at = _HEADER.size
    x = np.frombuffer(raw, dtype="<f4", count=n * timesteps * width, offset=at)
    x = x.reshape(n, timesteps, width).astype(np.float32)
    at += n * timesteps * width * 4
    loc = np.frombuffer(raw, dtype="<u2", count=n, offset=at).astype(np.int64)
    at += n * 2
    kind = np.frombuffer(raw, dtype="<u2", count=n, offset=at).astype(np.int64)
    if n and loc.max(initial=0) >= n_loc:
        raise PmudFormatError(
            f"{path}: location label {int(loc.max())} outside range for n_loc={n_loc}"
        )
    meta: dict = {}
    sidecar = path.with_name(path.name + ".meta.json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return PmudDataset(x=x, loc_index=loc, type_index=kind, n_loc=n_loc, meta=meta)
