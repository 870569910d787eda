"""Soft-margin RBF support vector machine trained by sequential minimal
optimization.

The dual problem
    max  sum(a) - 0.5 * sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t. 0 <= a_i <= C,  sum_i a_i y_i = 0
is solved with maximal-violating-pair working-set selection: each step
updates the pair (i, j) with the largest first-order KKT violation, taking
the analytic two-variable optimum clipped to the box.  Selection scans in
index order, so ties resolve to the lowest index and training is fully
deterministic.  Multiclass problems use one-vs-rest with shared kernel
rows; model selection scores are stratified k-fold cross-validated
accuracies.

The pairwise kernel loop is the only hot path; the dense-matrix variant is
compiled with numba and adds active-set shrinking, while training sets too
large for a materialized kernel fall back to a plain cached-row loop with
the same selection rule and stopping criterion.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


SV_EPS = 1e-8


@dataclass(frozen=True)
class SvmConfig:
    """Binary SVM hyperparameters and solver budgets."""

    c: float = 1500.0
    gamma: float = 500.0
    tol: float = 1e-3
    max_passes: int = 60
    cache_entries: int = 2048
    seed: int = 0

    def __post_init__(self):
        if self.c <= 0.0:
            raise ValueError("C must be positive")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.tol <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_passes < 1:
            raise ValueError("at least one optimization pass required")
        if self.cache_entries < 1:
            raise ValueError("kernel cache needs at least one entry")


@dataclass(frozen=True)
class CvConfig:
    """Cross-validation policy: fold count, stratification, fold seed."""

    folds: int = 5
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("cross-validation needs at least two folds")


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2) for a single vector pair."""
    diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.exp(-gamma * np.dot(diff, diff)))


def _sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    xx = np.sum(x * x, axis=1)[:, None]
    yy = np.sum(y * y, axis=1)[None, :]
    d2 = xx + yy - 2.0 * (x @ y.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def rbf_gram(x: np.ndarray, gamma: float, y: np.ndarray | None = None) -> np.ndarray:
    """Dense kernel matrix between row sets (x vs itself when y is None)."""
    x = np.asarray(x, dtype=np.float64)
    other = x if y is None else np.asarray(y, dtype=np.float64)
    return np.exp(-gamma * _sq_dists(x, other))


class KernelCache:
    """Kernel rows on demand with least-recently-used eviction.

    Holds at most ``max_entries`` full rows; a hit refreshes recency.  Keys
    are row indices of the training matrix handed in at construction.
    """

    def __init__(self, x: np.ndarray, gamma: float, max_entries: int):
        if max_entries < 1:
            raise ValueError("cache budget must be at least one row")
        self.x = np.asarray(x, dtype=np.float64)
        self.gamma = gamma
        self.max_entries = max_entries
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def row(self, i: int) -> np.ndarray:
        cached = self._rows.get(i)
        if cached is not None:
            self.hits += 1
            self._rows.move_to_end(i)
            return cached
        self.misses += 1
        diff = self.x - self.x[i]
        row = np.exp(-self.gamma * np.einsum("ij,ij->i", diff, diff))
        self._rows[i] = row
        if len(self._rows) > self.max_entries:
            self._rows.popitem(last=False)
        return row

    def __len__(self) -> int:
        return len(self._rows)


@njit(cache=True)
def _smo_dense(gram, y, c, tol, max_iter):  # pragma: no cover - numba path
    """Maximal-violating-pair SMO over a dense kernel matrix.

    Keeps an active set: variables settled at a box bound whose violation
    score lies safely inside the current (m, M) window stop receiving
    gradient updates.  When the active set converges, the full gradient is
    reconstructed from the support vectors and the KKT check is repeated
    globally, so shrinking never relaxes the stopping criterion.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    active = np.arange(n)
    n_active = n
    shrink_period = n if n < 1000 else 1000
    snap = 1e-12 * (1.0 if c < 1.0 else c)
    it = 0
    gap = 1e300

    # selection state over the active set
    m_val = -1e300
    big_m = 1e300
    i = -1
    j = -1
    for idx in range(n_active):
        t = active[idx]
        v = -y[t] * grad[t]
        if ((y[t] > 0.0 and alpha[t] < c) or (y[t] < 0.0 and alpha[t] > 0.0)) and v > m_val:
            m_val = v
            i = t
        if ((y[t] > 0.0 and alpha[t] > 0.0) or (y[t] < 0.0 and alpha[t] < c)) and v < big_m:
            big_m = v
            j = t

    while it < max_iter:
        gap = m_val - big_m
        if i < 0 or j < 0 or gap <= tol:
            if n_active == n:
                break
            # reconstruct stale gradients from the support vectors, then
            # re-run selection over everything
            flags = np.zeros(n, dtype=np.bool_)
            for idx in range(n_active):
                flags[active[idx]] = True
            for t in range(n):
                if not flags[t]:
                    acc = 0.0
                    for s in range(n):
                        if alpha[s] > 0.0:
                            acc += alpha[s] * y[s] * gram[t, s]
                    grad[t] = y[t] * acc - 1.0
            active = np.arange(n)
            n_active = n
            m_val = -1e300
            big_m = 1e300
            i = -1
            j = -1
            for t in range(n):
                v = -y[t] * grad[t]
                if ((y[t] > 0.0 and alpha[t] < c) or (y[t] < 0.0 and alpha[t] > 0.0)) and v > m_val:
                    m_val = v
                    i = t
                if ((y[t] > 0.0 and alpha[t] > 0.0) or (y[t] < 0.0 and alpha[t] < c)) and v < big_m:
                    big_m = v
                    j = t
            continue

        eta = gram[i, i] + gram[j, j] - 2.0 * gram[i, j]
        if eta <= 1e-12:
            eta = 1e-12
        step = gap / eta
        cap_i = (c - alpha[i]) if y[i] > 0.0 else alpha[i]
        cap_j = alpha[j] if y[j] > 0.0 else (c - alpha[j])
        if step > cap_i:
            step = cap_i
        if step > cap_j:
            step = cap_j
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        if alpha[i] < snap:
            alpha[i] = 0.0
        elif alpha[i] > c - snap:
            alpha[i] = c
        if alpha[j] < snap:
            alpha[j] = 0.0
        elif alpha[j] > c - snap:
            alpha[j] = c
        it += 1

        if it % shrink_period == 0 and n_active > 16:
            kept = 0
            for idx in range(n_active):
                t = active[idx]
                v = -y[t] * grad[t]
                shrinkable = False
                if alpha[t] == 0.0:
                    shrinkable = v < big_m if y[t] > 0.0 else v > m_val
                elif alpha[t] == c:
                    shrinkable = v > m_val if y[t] > 0.0 else v < big_m
                if not shrinkable or t == i or t == j:
                    active[kept] = t
                    kept += 1
            n_active = kept

        # fused gradient update and next-pair selection over the active set
        m_val = -1e300
        big_m = 1e300
        ni = -1
        nj = -1
        for idx in range(n_active):
            t = active[idx]
            grad[t] += step * y[t] * (gram[t, i] - gram[t, j])
            v = -y[t] * grad[t]
            if ((y[t] > 0.0 and alpha[t] < c) or (y[t] < 0.0 and alpha[t] > 0.0)) and v > m_val:
                m_val = v
                ni = t
            if ((y[t] > 0.0 and alpha[t] > 0.0) or (y[t] < 0.0 and alpha[t] < c)) and v < big_m:
                big_m = v
                nj = t
        i = ni
        j = nj

    if n_active < n:
        # iteration budget ran out while shrunk: bring every stale gradient
        # back in sync so bias and dual objective read correctly
        flags = np.zeros(n, dtype=np.bool_)
        for idx in range(n_active):
            flags[active[idx]] = True
        for t in range(n):
            if not flags[t]:
                acc = 0.0
                for s in range(n):
                    if alpha[s] > 0.0:
                        acc += alpha[s] * y[s] * gram[t, s]
                grad[t] = y[t] * acc - 1.0
    return alpha, grad, it, gap


def _smo_cached(cache: KernelCache, y, c, tol, max_iter):
    """Row-cache twin of the dense loop, for training sets beyond the budget."""
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    gap = 0.0
    while it < max_iter:
        neg_yg = -y * grad
        up = ((y > 0.0) & (alpha < c)) | ((y < 0.0) & (alpha > 0.0))
        low = ((y > 0.0) & (alpha > 0.0)) | ((y < 0.0) & (alpha < c))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, neg_yg, -np.inf)))
        j = int(np.argmin(np.where(low, neg_yg, np.inf)))
        gap = neg_yg[i] - neg_yg[j]
        if gap <= tol:
            break
        row_i = cache.row(i)
        row_j = cache.row(j)
        eta = max(row_i[i] + row_j[j] - 2.0 * row_i[j], 1e-12)
        step = gap / eta
        cap_i = (c - alpha[i]) if y[i] > 0.0 else alpha[i]
        cap_j = alpha[j] if y[j] > 0.0 else (c - alpha[j])
        step = min(step, cap_i, cap_j)
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        snap = 1e-12 * max(1.0, c)
        for t in (i, j):
            if alpha[t] < snap:
                alpha[t] = 0.0
            elif alpha[t] > c - snap:
                alpha[t] = c
        grad += step * y * (row_i - row_j)
        it += 1
    return alpha, grad, it, gap


@dataclass(frozen=True)
class BinarySvmModel:
    """Support vectors, their coefficients and the bias of one margin."""

    sv_x: np.ndarray
    sv_alpha: np.ndarray
    sv_y: np.ndarray
    sv_index: np.ndarray
    bias: float
    gamma: float
    dual_objective: float
    kkt_gap: float
    iterations: int
    converged: bool

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.sv_x.shape[0] == 0:
            return np.full(x.shape[0], self.bias)
        cross = rbf_gram(x, self.gamma, self.sv_x)
        return cross @ (self.sv_alpha * self.sv_y) + self.bias


def decision_value(model: BinarySvmModel, x: np.ndarray) -> float:
    """Signed margin distance of one sample."""
    return float(model.decision_values(x)[0])


def _validate_training_input(x: np.ndarray, y: np.ndarray) -> None:
    if x.ndim != 2:
        raise ValueError("training data must be a 2-d array")
    if x.shape[0] != y.shape[0]:
        raise ValueError("one label per row required")
    if not np.all(np.isfinite(x)):
        raise ValueError("training data contains non-finite values")


def train_binary(
    x: np.ndarray,
    y: Sequence[int] | np.ndarray,
    config: SvmConfig,
    gram: np.ndarray | None = None,
) -> BinarySvmModel:
    """Train one soft-margin RBF-SVM on +-1 labels.

    A precomputed kernel matrix short-circuits kernel evaluation (used by
    cross-validation, which shares one matrix across all one-vs-rest
    problems).  Otherwise rows come from an LRU cache; when the training
    set fits the budget the whole matrix is materialized up front.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _validate_training_input(x, y)
    classes = np.unique(y)
    if not np.array_equal(classes, np.array([-1.0, 1.0])):
        raise ValueError("binary training requires both labels -1 and +1")

    n = x.shape[0]
    max_iter = config.max_passes * n
    if gram is not None:
        alpha, grad, iters, gap = _smo_dense(
            np.ascontiguousarray(gram, dtype=np.float64),
            y,
            float(config.c),
            float(config.tol),
            int(max_iter),
        )
    elif n <= config.cache_entries:
        full = rbf_gram(x, config.gamma)
        alpha, grad, iters, gap = _smo_dense(
            full, y, float(config.c), float(config.tol), int(max_iter)
        )
    else:
        cache = KernelCache(x, config.gamma, config.cache_entries)
        alpha, grad, iters, gap = _smo_cached(
            cache, y, float(config.c), float(config.tol), int(max_iter)
        )

    neg_yg = -y * grad
    eps_b = SV_EPS * max(1.0, config.c)
    free = (alpha > eps_b) & (alpha < config.c - eps_b)
    if free.any():
        bias = float(np.mean(neg_yg[free]))
    else:
        up = ((y > 0.0) & (alpha < config.c)) | ((y < 0.0) & (alpha > 0.0))
        low = ((y > 0.0) & (alpha > 0.0)) | ((y < 0.0) & (alpha < config.c))
        hi = neg_yg[up].max() if up.any() else 0.0
        lo = neg_yg[low].min() if low.any() else 0.0
        bias = float((hi + lo) / 2.0)

    dual = float(0.5 * np.sum(alpha) - 0.5 * np.dot(alpha, grad))
    keep = alpha > SV_EPS
    idx = np.nonzero(keep)[0]
    return BinarySvmModel(
        sv_x=x[idx].copy(),
        sv_alpha=alpha[idx].copy(),
        sv_y=y[idx].copy(),
        sv_index=idx,
        bias=bias,
        gamma=config.gamma,
        dual_objective=dual,
        kkt_gap=float(gap),
        iterations=int(iters),
        converged=bool(gap <= config.tol),
    )


@dataclass(frozen=True)
class MulticlassSvmModel:
    """One-vs-rest ensemble; prediction takes the largest margin."""

    classes: tuple
    models: tuple[BinarySvmModel, ...]

    def decision_matrix(self, x: np.ndarray) -> np.ndarray:
        return np.column_stack([m.decision_values(x) for m in self.models])


def train_ovr(
    x: np.ndarray,
    labels: Sequence | np.ndarray,
    config: SvmConfig,
    gram: np.ndarray | None = None,
) -> MulticlassSvmModel:
    """Train one binary margin per class (sorted order) against the rest."""
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise ValueError("multiclass training requires at least two classes")
    models = []
    for cls in classes:
        y = np.where(labels == cls, 1.0, -1.0)
        models.append(train_binary(x, y, config, gram=gram))
    return MulticlassSvmModel(classes=tuple(classes), models=tuple(models))


def predict(model: MulticlassSvmModel, x: np.ndarray) -> np.ndarray:
    """Class of the largest decision value; ties go to the lowest class."""
    scores = model.decision_matrix(x)
    picks = np.argmax(scores, axis=1)
    return np.array([model.classes[p] for p in picks])


def _predict_with_cross(
    model: MulticlassSvmModel, cross: np.ndarray
) -> np.ndarray:
    """Predict from a precomputed test-vs-train kernel block."""
    scores = np.empty((cross.shape[0], len(model.models)))
    for k, m in enumerate(model.models):
        scores[:, k] = cross[:, m.sv_index] @ (m.sv_alpha * m.sv_y) + m.bias
    picks = np.argmax(scores, axis=1)
    return np.array([model.classes[p] for p in picks])


def fold_assignments(
    labels: np.ndarray, cv: CvConfig
) -> np.ndarray:
    """Deterministic fold index per sample.

    Stratified mode shuffles each class with the seeded generator and deals
    the indices round-robin, so per-fold class counts differ by at most
    one.  Every class must have at least ``folds`` members.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    rng = np.random.default_rng(cv.seed)
    folds = np.empty(n, dtype=np.int64)
    if cv.stratified:
        for cls in sorted(set(labels.tolist())):
            idx = np.nonzero(labels == cls)[0]
            if idx.size < cv.folds:
                raise ValueError(
                    f"class {cls!r} has {idx.size} samples, fewer than "
                    f"{cv.folds} folds"
                )
            perm = idx[rng.permutation(idx.size)]
            folds[perm] = np.arange(perm.size) % cv.folds
    else:
        if n < cv.folds:
            raise ValueError("fewer samples than folds")
        perm = rng.permutation(n)
        folds[perm] = np.arange(n) % cv.folds
    return folds


def cv_accuracy(
    x: np.ndarray,
    labels: Sequence | np.ndarray,
    config: SvmConfig,
    cv: CvConfig | None = None,
) -> float:
    """Mean held-out one-vs-rest accuracy over seeded stratified folds."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    cv = cv or CvConfig(seed=config.seed)
    assign = fold_assignments(labels, cv)
    gram = rbf_gram(x, config.gamma)
    accs = []
    for f in range(cv.folds):
        te = assign == f
        tr = ~te
        tr_idx = np.nonzero(tr)[0]
        te_idx = np.nonzero(te)[0]
        sub = train_ovr(
            x[tr_idx], labels[tr_idx], config, gram=gram[np.ix_(tr_idx, tr_idx)]
        )
        pred = _predict_with_cross(sub, gram[np.ix_(te_idx, tr_idx)])
        accs.append(float(np.mean(pred == labels[te_idx])))
    return float(np.mean(accs))
