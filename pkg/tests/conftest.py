"""Shared fixtures: bundled feeder models, small datasets, synthetic cases."""
import numpy as np
import pytest

from pmuplace.faultsim import FaultType, ScenarioConfig, generate_placement_dataset
from pmuplace.features import FeatureLayout, FeatureMatrix, build_feature_matrix
from pmuplace.feeder import (
    BaseSpec,
    Bus,
    FeederModel,
    Line,
    SourceSpec,
    candidate_buses,
    load_feeder,
)
from pmuplace import cli

PATH_BUSES = ("s", "b1", "b2", "b3", "b4", "b5")

# Target correlation matrix for the refinement counterexample, in PATH_BUSES
# order.  Greedy forward selection lands on {s, b1, b2, b4}; replacing b2
# with its neighbor b3 scores strictly higher once b4 is in, because b3 is
# nearly uncorrelated with b4 while b2 tracks both.  All greedy margins are
# at least 0.15, so sampled data reproduces the schedule reliably.
REFINEMENT_R = np.array(
    [
        [1.00, 0.05, 0.25, 0.40, 0.30, 0.55],
        [0.05, 1.00, 0.25, 0.40, 0.35, 0.55],
        [0.25, 0.25, 1.00, 0.55, 0.50, 0.55],
        [0.40, 0.40, 0.55, 1.00, 0.05, 0.55],
        [0.30, 0.35, 0.50, 0.05, 1.00, 0.55],
        [0.55, 0.55, 0.55, 0.55, 0.55, 1.00],
    ]
)


def data_path(name):
    return cli._DATA_DIR / name


def make_path_model(bus_ids=PATH_BUSES):
    """Single-phase path feeder with the source at the first bus."""
    z = np.array([[0.001 + 0.01j]])
    buses = tuple(Bus(id=b, phases=("A",)) for b in bus_ids)
    lines = tuple(
        Line(id=f"ln{i}", from_bus=bus_ids[i], to_bus=bus_ids[i + 1], phases=("A",), z=z)
        for i in range(len(bus_ids) - 1)
    )
    return FeederModel(
        buses=buses,
        lines=lines,
        loads=(),
        ders=(),
        source=SourceSpec(bus=bus_ids[0], v_pu=1.0, z=0.05j),
        base=BaseSpec(voltage_v=4160.0, power_va=1e6),
    )


def make_refinement_matrix(seed, n=4096):
    """Feature matrix whose bus correlations follow REFINEMENT_R.

    Every bus gets the same draw in all three sequence-magnitude slots, so
    column normalization keeps the correlation structure intact.  Values are
    shifted well above zero so magnitudes equal the raw draws.
    """
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(REFINEMENT_R)
    w = rng.standard_normal((n, len(PATH_BUSES))) @ chol.T + 10.0
    layout = FeatureLayout.for_buses(PATH_BUSES)
    x = np.zeros((n, layout.width))
    for i, bus in enumerate(PATH_BUSES):
        start, _ = layout.ranges[bus]
        for k in range(3):
            x[:, start + 2 * k] = w[:, i]
    labels = tuple(("L1", FaultType.AG) for _ in range(n))
    return FeatureMatrix(x=x, layout=layout, labels=labels)


def make_planted_matrix(seed, planted="b3", n_per=60):
    """Noise everywhere except one bus that cleanly separates two lines."""
    rng = np.random.default_rng(seed)
    layout = FeatureLayout.for_buses(PATH_BUSES)
    n = 2 * n_per
    x = rng.standard_normal((n, layout.width))
    y = np.array([0] * n_per + [1] * n_per)
    start, _ = layout.ranges[planted]
    for k in range(3):
        x[:, start + 2 * k] = np.where(y == 0, -1.0, 1.0) + 0.35 * rng.standard_normal(n)
        x[:, start + 2 * k + 1] = np.where(y == 0, 1.0, -1.0) + 0.35 * rng.standard_normal(n)
    labels = tuple((f"L{c}", FaultType.AG) for c in y)
    perm = rng.permutation(n)
    return FeatureMatrix(
        x=x[perm], layout=layout, labels=tuple(labels[p] for p in perm)
    )


@pytest.fixture(scope="session")
def feeder12():
    return load_feeder(data_path("feeder12.json"))


@pytest.fixture(scope="session")
def feeder34():
    return load_feeder(data_path("feeder34.json"))


@pytest.fixture(scope="session")
def records12(feeder12):
    config = ScenarioConfig(mode="placement", hours=(0, 12))
    return generate_placement_dataset(feeder12, config)


@pytest.fixture(scope="session")
def fm12(feeder12, records12):
    return build_feature_matrix(records12, candidate_buses(feeder12))


@pytest.fixture(scope="session")
def path_model():
    return make_path_model()


def run_cli(argv):
    """Invoke the command line in-process; argparse errors surface as code 2."""
    try:
        return cli.main(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
