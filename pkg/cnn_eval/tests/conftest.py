"""Shared fixtures: desk-scale datasets built through the pmuplace CLI.

The placement toolchain is consumed strictly through its command line
and the PMUD files it writes; nothing imports it.  Small synthetic
tensors for unit tests are written directly in the documented binary
layout.
"""

from __future__ import annotations

import json
import shutil
import struct
import subprocess
from pathlib import Path

import numpy as np
import pytest

PMUPLACE = shutil.which("pmuplace")


def run_cli(argv) -> int:
    """Invoke the cnn-eval entry point in process, returning its exit code."""
    from cnneval import cli

    try:
        return cli.main(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)


def write_pmud(path, x, loc, kind, n_loc, meta=None) -> Path:
    """Write a tensor file in the documented PMUD layout."""
    path = Path(path)
    x = np.asarray(x, dtype="<f4")
    n, timesteps, width = x.shape
    blob = struct.pack("<4s5I", b"PMUD", 1, n, timesteps, width, n_loc)
    blob += x.tobytes()
    blob += np.asarray(loc, dtype="<u2").tobytes()
    blob += np.asarray(kind, dtype="<u2").tobytes()
    path.write_bytes(blob)
    if meta is not None:
        path.with_name(path.name + ".meta.json").write_text(json.dumps(meta))
    return path


def make_tiny(n=24, timesteps=30, width=8, n_loc=3, seed=0):
    """Random in-memory dataset arrays for fast wiring tests."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, timesteps, width)).astype(np.float32)
    loc = rng.integers(0, n_loc, size=n).astype(np.int64)
    kind = rng.integers(0, 11, size=n).astype(np.int64)
    return x, loc, kind


def _sh(argv, cwd):
    proc = subprocess.run([str(a) for a in argv], cwd=cwd,
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(
            f"{argv[0]} failed ({proc.returncode}):\n{proc.stdout}\n{proc.stderr}"
        )
    return proc.stdout


def _write_report(path: Path, buses: list[str]) -> None:
    report = {
        "selected": buses,
        "trajectory": [round(0.5 + 0.04 * i, 3) for i in range(len(buses))],
        "refinements": [],
        "recommended_count": len(buses),
        "scorer": "correlation",
    }
    path.write_text(json.dumps(report, indent=1))


@pytest.fixture(scope="session")
def desk_data(tmp_path_factory):
    """5,000 simulated fault windows on the 34-bus feeder, split two ways.

    Returns a dict with train/val/test paths for a 5-sensor view
    (width 36) and a 9-sensor view (width 60) of the same scenarios.
    """
    if PMUPLACE is None:
        pytest.fail("pmuplace CLI not on PATH; the placement package must be installed")
    base = tmp_path_factory.mktemp("desk")
    _sh([PMUPLACE, "generate", "--feeder", "feeder34.json", "--mode", "cnn",
         "--samples", 5000, "--seed", 11, "--output", "waves.pmud"], cwd=base)
    meta = json.loads((base / "waves.pmud.meta.json").read_text())
    buses = meta["buses"]
    _write_report(base / "report5.json", [buses[i] for i in (0, 8, 16, 24, 33)])
    _write_report(base / "report9.json", [buses[i] for i in (0, 4, 8, 12, 16, 20, 24, 28, 33)])
    _sh([PMUPLACE, "export-cnn", "--dataset", "waves.pmud", "--report", "report5.json",
         "--output-dir", "w36", "--seed", 1], cwd=base)
    _sh([PMUPLACE, "export-cnn", "--dataset", "waves.pmud", "--report", "report9.json",
         "--output-dir", "w60", "--seed", 1], cwd=base)
    return {
        "w36": {name: base / "w36" / f"{name}.pmud" for name in ("train", "val", "test")},
        "w60": {name: base / "w60" / f"{name}.pmud" for name in ("train", "val", "test")},
    }
