"""PMU subset search: greedy forward selection with neighborhood refinement.

The substation PMU (voltages plus feeder-head currents) is always kept.
Each greedy round adds the candidate bus whose subset score is largest;
once more than three buses are selected and the score improved over the
previous round, the bus added in the round before the newest one is
revisited: its line-graph neighbors are tried as replacements and the best
swap is taken only on strict improvement.  Ties always resolve to the
ascending bus id.

Three subset scorers are available: cross-validated SVM accuracy on the
delta features, a correlation-distance diversity measure over sequence
magnitudes, and a spectral score on the positive-sequence admittance
partition (negated so every scorer is maximized).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .feeder import FeederModel, neighbors, positive_sequence_ybus
from .features import FeatureMatrix, normalize_columns, sequence_magnitude_blocks
from .svm import CvConfig, SvmConfig, cv_accuracy


class ScoringError(Exception):
    """A subset could not be scored; the message names subset and reason."""


class ScorerKind(Enum):
    SVM_CV = "svm_cv"
    CORRELATION_DIVERSITY = "correlation_diversity"
    ADMITTANCE_SPECTRAL = "admittance_spectral"


@dataclass(frozen=True)
class PlacementConfig:
    """Search budget, scorer choice and nested scorer settings."""

    budget: int
    scorer: ScorerKind = ScorerKind.SVM_CV
    svm: SvmConfig = field(default_factory=SvmConfig)
    cv: CvConfig = field(default_factory=CvConfig)
    target: str = "line"
    refine: bool = True
    radius: int = 2
    epsilon: float = 0.0025
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must allow at least the substation PMU")
        if self.target not in ("line", "kind"):
            raise ValueError("score target must be 'line' or 'kind'")
        if self.radius < 1:
            raise ValueError("neighborhood radius must be at least 1")
        if self.epsilon < 0.0:
            raise ValueError("plateau epsilon must be non-negative")


@dataclass(frozen=True)
class RefinementStep:
    replaced: str
    replacement: str
    score_before: float
    score_after: float


@dataclass(frozen=True)
class PlacementResult:
    """Selected buses (substation first), score trajectory and swap log."""

    selected: tuple[str, ...]
    trajectory: tuple[float, ...]
    refinements: tuple[RefinementStep, ...]
    recommended_count: int


@dataclass(frozen=True)
class PositiveSequenceSystem:
    """Reduced-order admittance matrix with its bus ordering."""

    y: np.ndarray
    buses: tuple[str, ...]

    @classmethod
    def from_model(cls, model: FeederModel) -> "PositiveSequenceSystem":
        return cls(y=positive_sequence_ybus(model), buses=tuple(model.bus_ids()))


def correlation_diversity(fm: FeatureMatrix, subset) -> float:
    """Sum of pairwise correlation distances over sequence magnitude columns.

    Columns of the stacked magnitude matrix are compared with the absolute
    Pearson correlation; a zero-variance column correlates perfectly by
    convention, contributing zero distance.  The result lies in
    [0, q(q-1)/2] for q selected buses.
    """
    blocks = sequence_magnitude_blocks(fm, subset)
    z = blocks.z
    q = z.shape[1]
    if q < 2:
        return 0.0
    centered = z - z.mean(axis=0)
    norms = np.linalg.norm(centered, axis=0)
    total = 0.0
    for i in range(q):
        for j in range(i + 1, q):
            if norms[i] == 0.0 or norms[j] == 0.0:
                rho = 1.0
            else:
                rho = float(
                    np.dot(centered[:, i], centered[:, j]) / (norms[i] * norms[j])
                )
            total += 1.0 - min(1.0, abs(rho))
    return total


def _largest_singular_value(m: np.ndarray) -> float:
    """Largest singular value; power iteration on M^H M above the dense cutoff."""
    if min(m.shape) == 0:
        return 0.0
    if max(m.shape) < 200:
        return float(np.linalg.svd(m, compute_uv=False)[0])
    v = np.full(m.shape[1], 1.0 / np.sqrt(m.shape[1]), dtype=np.complex128)
    sigma = 0.0
    for _ in range(500):
        w = m.conj().T @ (m @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v_next = w / nrm
        sigma_next = float(np.sqrt(nrm))
        if abs(sigma_next - sigma) <= 1e-12 * max(1.0, sigma_next):
            return sigma_next
        sigma = sigma_next
        v = v_next
    return sigma


def admittance_score(system: PositiveSequenceSystem, monitored) -> float:
    """Largest singular value of Y_au Y_uu^-1 for a monitored partition.

    ``a`` rows are monitored buses, ``u`` rows the rest; an empty ``u``
    partition scores zero.  Singular Y_uu raises a ScoringError naming the
    partition.
    """
    mon = set(monitored)
    missing = mon - set(system.buses)
    if missing:
        raise ScoringError(f"monitored buses not in system: {sorted(missing)}")
    a_idx = [i for i, b in enumerate(system.buses) if b in mon]
    u_idx = [i for i, b in enumerate(system.buses) if b not in mon]
    if not u_idx:
        return 0.0
    y_au = system.y[np.ix_(a_idx, u_idx)]
    y_uu = system.y[np.ix_(u_idx, u_idx)]
    try:
        m = np.linalg.solve(y_uu.T, y_au.T).T
    except np.linalg.LinAlgError:
        unmon = [system.buses[i] for i in u_idx]
        raise ScoringError(
            f"singular unmonitored partition {unmon}"
        ) from None
    return _largest_singular_value(m)


def score_subset(
    fm: FeatureMatrix | None,
    topology: PositiveSequenceSystem | None,
    subset,
    config: PlacementConfig,
) -> float:
    """Score one bus subset under the configured scorer.

    The feature matrix is expected already column-normalized; the svm_cv
    scorer reads the configured label target, the admittance scorer only
    needs the topology (score negated so that larger is better).
    """
    kind = config.scorer
    if kind is ScorerKind.ADMITTANCE_SPECTRAL:
        if topology is None:
            raise ScoringError("admittance scorer needs the feeder topology")
        return -admittance_score(topology, subset)
    if fm is None:
        raise ScoringError(f"scorer {kind.value} needs a feature dataset")
    if kind is ScorerKind.CORRELATION_DIVERSITY:
        return correlation_diversity(fm, subset)
    if kind is ScorerKind.SVM_CV:
        sub = fm.select(subset)
        labels = sub.line_labels if config.target == "line" else sub.kind_labels
        try:
            return cv_accuracy(sub.x, labels, config.svm, config.cv)
        except ValueError as exc:
            raise ScoringError(f"subset {sorted(subset)}: {exc}") from None
    raise ScoringError(f"unknown scorer {kind!r}")


def recommend_count(trajectory, epsilon: float = 0.0025) -> int:
    """Smallest PMU count whose score reaches the trajectory maximum
    within epsilon (counts are 1-based; the first entry is the
    substation-only score)."""
    traj = list(trajectory)
    if not traj:
        raise ValueError("empty trajectory")
    top = max(traj)
    for k, s in enumerate(traj):
        if s >= top - epsilon:
            return k + 1
    return len(traj)


def _argmax_by_bus(scores: dict[str, float]) -> tuple[str, float]:
    """Largest score; equal scores resolve to the ascending bus id."""
    best_bus = None
    best = -np.inf
    for bus in sorted(scores):
        if scores[bus] > best:
            best = scores[bus]
            best_bus = bus
    return best_bus, best


def _search(
    fm: FeatureMatrix | None,
    model: FeederModel,
    config: PlacementConfig,
    refine: bool,
) -> PlacementResult:
    topology = None
    if config.scorer is ScorerKind.ADMITTANCE_SPECTRAL:
        topology = PositiveSequenceSystem.from_model(model)

    if fm is not None:
        fm = normalize_columns(fm)
        layout_buses = list(fm.layout.buses)
    else:
        layout_buses = [model.source.bus] + sorted(
            b.id for b in model.buses if b.id != model.source.bus
        )

    substation = layout_buses[0]
    selected = [substation]
    available = sorted(layout_buses[1:])
    base_score = score_subset(fm, topology, selected, config)
    trajectory = [base_score]
    refinements: list[RefinementStep] = []

    while len(selected) < config.budget and available:
        candidate_scores = {
            p: score_subset(fm, topology, selected + [p], config) for p in available
        }
        p_star, current = _argmax_by_bus(candidate_scores)
        selected.append(p_star)
        available.remove(p_star)

        if refine and len(selected) > 3 and current > base_score:
            p_prev = selected[-2]
            nearby = [
                v
                for v in neighbors(model, p_prev, config.radius)
                if v in available
            ]
            if nearby:
                swap_scores = {}
                for v in nearby:
                    trial = [b for b in selected if b != p_prev] + [v]
                    swap_scores[v] = score_subset(fm, topology, trial, config)
                v_star, swapped = _argmax_by_bus(swap_scores)
                if swapped > current:
                    refinements.append(
                        RefinementStep(
                            replaced=p_prev,
                            replacement=v_star,
                            score_before=current,
                            score_after=swapped,
                        )
                    )
                    selected[selected.index(p_prev)] = v_star
                    available.remove(v_star)
                    available.append(p_prev)
                    available.sort()
                    current = swapped

        base_score = current
        trajectory.append(current)

    return PlacementResult(
        selected=tuple(selected),
        trajectory=tuple(trajectory),
        refinements=tuple(refinements),
        recommended_count=recommend_count(trajectory, config.epsilon),
    )


def fsnr(
    fm: FeatureMatrix | None, model: FeederModel, config: PlacementConfig
) -> PlacementResult:
    """Forward selection with neighborhood refinement (see module docstring)."""
    return _search(fm, model, config, refine=config.refine)


def forward_select(
    fm: FeatureMatrix | None, model: FeederModel, config: PlacementConfig
) -> PlacementResult:
    """Plain greedy forward selection; no refinement pass."""
    return _search(fm, model, config, refine=False)


def greedy_admittance_placement(
    system: PositiveSequenceSystem, substation: str, budget: int
) -> list[str]:
    """Greedy bus additions minimizing the admittance partition score.

    Starts from the substation; each round adds the bus whose monitored
    partition has the smallest largest-singular-value score, ties to the
    ascending bus id.  With every bus monitored the score sequence ends at
    zero.
    """
    if budget < 1:
        raise ValueError("budget must be at least one")
    if substation not in system.buses:
        raise ScoringError(f"substation {substation!r} not in system")
    selected = [substation]
    available = sorted(b for b in system.buses if b != substation)
    while len(selected) < budget and available:
        scores = {b: admittance_score(system, selected + [b]) for b in available}
        best_bus = None
        best = np.inf
        for bus in sorted(scores):
            if scores[bus] < best:
                best = scores[bus]
                best_bus = bus
        selected.append(best_bus)
        available.remove(best_bus)
    return selected
