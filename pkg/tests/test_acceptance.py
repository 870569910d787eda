"""Acceptance gate for the placement pipeline.

Each test prints one verdict line so a log scan shows every criterion and
its measured margin.  The heavy score-versus-count run on the 34-bus feeder
executes once and is shared by the selection-contract and plateau checks.
"""
import shutil
import subprocess
import time

import numpy as np
import pytest

from pmuplace.faultsim import FAULT_TYPES, FaultSpec, ScenarioEngine
from pmuplace.features import (
    from_sequence_components,
    normalize_columns,
    to_sequence_components,
)
from pmuplace.io import read_placement_csv
from pmuplace.placement import (
    PlacementConfig,
    PositiveSequenceSystem,
    ScorerKind,
    admittance_score,
    correlation_diversity,
    forward_select,
    fsnr,
)
from pmuplace.svm import CvConfig, SvmConfig, rbf_gram, train_binary

from conftest import make_planted_matrix, make_refinement_matrix, run_cli
from test_placement import diversity_oracle, random_admittance, tiny_fm
from test_svm import blob_dataset, oracle_bias, qp_oracle


@pytest.fixture
def verdict(capfd):
    """Print one [PASS]/[FAIL] line straight to the terminal, then assert."""

    def _verdict(ok: bool, label: str, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        with capfd.disabled():
            print(line, flush=True)
        assert ok, line

    return _verdict


@pytest.fixture(scope="module")
def dataset34(tmp_path_factory):
    """Four-hour placement sweep on the 34-bus feeder (1452 rows)."""
    path = tmp_path_factory.mktemp("accept") / "data34.csv"
    code = run_cli([
        "generate", "--feeder", "feeder34.json", "--hours", "0,6,12,18",
        "--seed", "0", "--output", str(path),
    ])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def curve34(dataset34, tmp_path_factory):
    """One full score-versus-count run with the shipped search defaults."""
    out = tmp_path_factory.mktemp("accept-curve") / "curve.csv"
    start = time.perf_counter()
    code = run_cli([
        "curve", "--dataset", str(dataset34), "--feeder", "feeder34.json",
        "--seed", "0", "--output", str(out),
    ])
    seconds = time.perf_counter() - start
    assert code == 0
    lines = out.read_text().splitlines()
    recommended = None
    for ln in lines:
        if ln.startswith("# recommended_count = "):
            recommended = int(ln.rpartition("=")[2])
    rows = [ln.split(",") for ln in lines[lines.index("pmu_count,best_score,recommended") + 1:]]
    trajectory = [float(r[1]) for r in rows]
    return {"trajectory": trajectory, "recommended": recommended,
            "seconds": seconds}


def test_network_solver_residuals(feeder34, verdict):
    engine = ScenarioEngine(feeder34)
    lines = sorted(feeder34.lines, key=lambda ln: ln.id)
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    worst = 0.0
    solved = 0
    while solved < 1000:
        line = lines[int(rng.integers(len(lines)))]
        kind = FAULT_TYPES[int(rng.integers(len(FAULT_TYPES)))]
        if not set(kind.phases) <= set(line.phases):
            continue
        spec = FaultSpec(
            line=line.id,
            position=float(rng.uniform(0.05, 0.95)),
            kind=kind,
            rf_ohm=float(rng.uniform(0.01, 10.0)),
            rg_ohm=float(rng.choice([1.0, 5.0, 10.0, 20.0])),
            hour=int(rng.integers(0, 24)),
        )
        worst = max(worst, engine.simulate(spec).residual)
        solved += 1
    seconds = time.perf_counter() - start
    verdict(
        worst < 1e-8 and seconds < 30.0,
        "network solver",
        f"1000 random faults on the 34-bus feeder, max scaled residual "
        f"{worst:.3e} (< 1e-8), {seconds:.2f} s (< 30 s)",
    )


def test_sequence_round_trip(verdict):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        va, vb, vc = (complex(a, b) for a, b in rng.standard_normal((3, 2)))
        back = from_sequence_components(to_sequence_components(va, vb, vc))
        worst = max(worst, *(abs(g - w) for g, w in zip(back, (va, vb, vc))))
    verdict(
        worst < 1e-12,
        "sequence transform",
        f"1000 random phasor triples round-trip, max error {worst:.3e} "
        f"(< 1e-12)",
    )


def test_svm_against_qp_oracle(verdict):
    worst_dual = worst_dec = worst_kkt = 0.0
    for seed in range(20):
        x, y = blob_dataset(seed)
        c = float((1.0, 10.0, 100.0)[seed % 3])
        gamma = float((0.5, 2.0, 8.0)[seed % 3])
        model = train_binary(
            x, y, SvmConfig(c=c, gamma=gamma, tol=1e-5, max_passes=200))
        gram = rbf_gram(x, gamma)
        alpha_ref, dual_ref = qp_oracle(gram, y, c)
        rel = abs(model.dual_objective - dual_ref) / max(1.0, abs(dual_ref))
        worst_dual = max(worst_dual, rel)

        probes = np.random.default_rng(1000 + seed).standard_normal(
            (25, x.shape[1]))
        ref_vals = rbf_gram(probes, gamma, x) @ (alpha_ref * y) + oracle_bias(
            gram, y, alpha_ref, c)
        worst_dec = max(
            worst_dec,
            float(np.abs(model.decision_values(probes) - ref_vals).max()),
        )

        margins = y * model.decision_values(x)
        alpha = np.zeros(x.shape[0])
        alpha[model.sv_index] = model.sv_alpha
        at_zero = alpha <= 1e-8 * c
        at_cap = alpha >= c * (1 - 1e-8)
        free = ~(at_zero | at_cap)
        kkt = 0.0
        if at_zero.any():
            kkt = max(kkt, float(np.max(1.0 - margins[at_zero])))
        if at_cap.any():
            kkt = max(kkt, float(np.max(margins[at_cap] - 1.0)))
        if free.any():
            kkt = max(kkt, float(np.max(np.abs(margins[free] - 1.0))))
        worst_kkt = max(worst_kkt, kkt)
    verdict(
        worst_dual < 1e-4 and worst_dec < 1e-3 and worst_kkt < 1e-3,
        "svm dual solver",
        f"20 random datasets against a projected-gradient reference: dual "
        f"gap {worst_dual:.2e} (< 1e-4), decision gap {worst_dec:.2e} "
        f"(< 1e-3), complementarity violation {worst_kkt:.2e} (< 1e-3)",
    )


def test_correlation_score_oracle(dataset34, verdict):
    fm, _meta = read_placement_csv(dataset34)
    fm = normalize_columns(fm)
    buses = list(fm.layout.buses)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        q = int(rng.integers(2, 9))
        extras = list(rng.choice(buses[1:], size=q - 1, replace=False))
        subset = [buses[0]] + extras
        got = correlation_diversity(fm, subset)
        worst = max(worst, abs(got - diversity_oracle(fm, subset)))
        assert 0.0 <= got <= q * (q - 1) / 2

    w = np.random.default_rng(3).random(60) + 1.0
    dup = correlation_diversity(tiny_fm([w, w.copy()]), ["s", "b1"])
    verdict(
        worst < 1e-10 and abs(dup) < 1e-12,
        "correlation diversity score",
        f"50 random bus subsets match an independent recomputation, max "
        f"difference {worst:.2e} (< 1e-10); duplicated measurements score "
        f"{dup:.1e}",
    )


def test_admittance_score_oracle(verdict):
    rng = np.random.default_rng(4)
    n = 20
    buses = tuple(f"n{i:02d}" for i in range(n))
    system = PositiveSequenceSystem(y=random_admittance(rng, n), buses=buses)
    worst = 0.0
    for _ in range(50):
        q = int(rng.integers(1, n))
        mon = list(rng.choice(buses, size=q, replace=False))
        a_idx = [i for i, b in enumerate(buses) if b in set(mon)]
        u_idx = [i for i in range(n) if i not in set(a_idx)]
        m = system.y[np.ix_(a_idx, u_idx)] @ np.linalg.inv(
            system.y[np.ix_(u_idx, u_idx)])
        want = float(np.linalg.svd(m, compute_uv=False)[0])
        got = admittance_score(system, mon)
        worst = max(worst, abs(got - want) / max(1.0, want))
    verdict(
        worst < 1e-8,
        "admittance partition score",
        f"50 random partitions of a 20-bus matrix match the dense singular "
        f"value, max relative error {worst:.2e} (< 1e-8)",
    )


def test_selection_contract(curve34, fm12, feeder12, path_model, verdict):
    trajectories = [("curve on 34-bus feeder", curve34["trajectory"])]

    for scorer in (ScorerKind.CORRELATION_DIVERSITY,
                   ScorerKind.ADMITTANCE_SPECTRAL):
        config = PlacementConfig(budget=5, scorer=scorer)
        fm = fm12 if scorer is ScorerKind.CORRELATION_DIVERSITY else None
        result = fsnr(fm, feeder12, config)
        trajectories.append((f"12-bus {scorer.value}", result.trajectory))

    fixture_config = PlacementConfig(
        budget=4, scorer=ScorerKind.CORRELATION_DIVERSITY, radius=2)
    wins = strict = 0
    for seed in range(10):
        fm = make_refinement_matrix(seed=seed)
        greedy = forward_select(fm, path_model, fixture_config)
        refined = fsnr(fm, path_model, fixture_config)
        trajectories.append((f"fixture greedy seed {seed}", greedy.trajectory))
        trajectories.append((f"fixture refined seed {seed}",
                             refined.trajectory))
        if refined.trajectory[-1] >= greedy.trajectory[-1] - 1e-12:
            wins += 1
        if refined.trajectory[-1] > greedy.trajectory[-1] + 1e-9:
            strict += 1

    planted_config = PlacementConfig(
        budget=2,
        scorer=ScorerKind.SVM_CV,
        svm=SvmConfig(c=10.0, gamma=50.0, tol=1e-3, max_passes=30),
        cv=CvConfig(folds=3),
    )
    recovered = 0
    for seed in range(20):
        fm = make_planted_matrix(seed=seed, planted="b3")
        result = fsnr(fm, path_model, planted_config)
        trajectories.append((f"planted seed {seed}", result.trajectory))
        if result.selected[-1] == "b3":
            recovered += 1

    monotone = True
    for name, traj in trajectories:
        for prev, nxt in zip(traj, traj[1:]):
            if nxt < prev - 1e-12:
                monotone = False
    verdict(
        monotone and wins == 10 and strict >= 1 and recovered >= 19,
        "selection contract",
        f"{len(trajectories)} trajectories non-decreasing; refinement >= "
        f"greedy on 10/10 fixture seeds ({strict} strict); informative bus "
        f"recovered {recovered}/20 (>= 19)",
    )


def test_plateau_recommendation(curve34, verdict):
    traj = curve34["trajectory"]
    rec = curve34["recommended"]
    gain_beyond = max(traj) - traj[rec - 1]
    verdict(
        rec is not None and rec <= 7 and gain_beyond < 0.005
        and curve34["seconds"] < 600.0,
        "plateau recommendation",
        f"recommended {rec} sensors (<= 7) on the 34-bus feeder, accuracy "
        f"gain beyond it {gain_beyond:.4f} (< 0.005), search took "
        f"{curve34['seconds']:.0f} s (< 600 s)",
    )


def test_pipeline_determinism(tmp_path, verdict):
    exe = shutil.which("pmuplace")
    assert exe, "console script not installed"

    def run_pipeline(workdir):
        workdir.mkdir()
        steps = [
            ["generate", "--feeder", "feeder12.json", "--hours", "0,12",
             "--seed", "1", "--output", "d.csv"],
            ["place", "--dataset", "d.csv", "--feeder", "feeder12.json",
             "--scorer", "correlation", "--budget", "4",
             "--output", "report.json"],
            ["generate", "--feeder", "feeder12.json", "--mode", "cnn",
             "--samples", "60", "--seed", "3", "--output", "c.pmud"],
            ["export-cnn", "--dataset", "c.pmud", "--report", "report.json",
             "--output-dir", "splits", "--seed", "2"],
        ]
        for step in steps:
            done = subprocess.run(
                [exe] + step, cwd=workdir, capture_output=True, text=True)
            assert done.returncode == 0, done.stderr

    run_pipeline(tmp_path / "run1")
    run_pipeline(tmp_path / "run2")

    artifacts = [
        "d.csv", "report.json", "report.png", "c.pmud", "c.pmud.meta.json",
        "splits/train.pmud", "splits/train.pmud.meta.json",
        "splits/val.pmud", "splits/val.pmud.meta.json",
        "splits/test.pmud", "splits/test.pmud.meta.json",
    ]
    mismatched = [
        name
        for name in artifacts
        if (tmp_path / "run1" / name).read_bytes()
        != (tmp_path / "run2" / name).read_bytes()
    ]
    verdict(
        not mismatched,
        "pipeline determinism",
        f"{len(artifacts)} artifacts byte-identical across two full runs"
        + (f"; mismatched: {mismatched}" if mismatched else ""),
    )
