"""Training loop for the dual-head classifier.

Both heads are scored with cross entropy and the two losses are added
with equal weight.  The optimiser is Adam with a small weight decay,
and the learning rate decays exponentially per epoch, so the rate at
epoch t is lr * decay ** t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from cnneval.model import DualHeadCnn, N_FAULT_TYPES
from cnneval.pmud import PmudDataset


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings.

    epochs defaults to a desk-scale run; production-quality accuracy
    on large corpora wants several hundred.
    """

    epochs: int = 60
    batch_size: int = 128
    learning_rate: float = 5e-4
    weight_decay: float = 1e-6
    lr_decay: float = 0.987
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")


@dataclass
class TrainHistory:
    """Per-epoch record of one training run.

    lr holds the learning rate in effect at the start of each epoch.
    The validation lists stay empty when no validation set was given.
    """

    lr: list[float] = field(default_factory=list)
    loss_type: list[float] = field(default_factory=list)
    loss_loc: list[float] = field(default_factory=list)
    val_type_accuracy: list[float] = field(default_factory=list)
    val_loc_accuracy: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.lr)


def _check_compatible(model: DualHeadCnn, data: PmudDataset, role: str) -> None:
    cfg = model.config
    if data.timesteps != cfg.timesteps or data.width != cfg.d:
        raise ValueError(
            f"{role} set shape ({data.timesteps} timesteps, {data.width} features) "
            f"does not match the model ({cfg.timesteps} timesteps, {cfg.d} features)"
        )
    if len(data) == 0:
        raise ValueError(f"{role} set is empty")
    if data.loc_index.max(initial=0) >= cfg.n_loc:
        raise ValueError(
            f"{role} set has location label {int(data.loc_index.max())} "
            f"but the model has {cfg.n_loc} location classes"
        )
    if data.type_index.max(initial=0) >= N_FAULT_TYPES:
        raise ValueError(
            f"{role} set has fault type label {int(data.type_index.max())} "
            f"but the model has {N_FAULT_TYPES} fault type classes"
        )


def predict(
    model: DualHeadCnn, x: np.ndarray, batch_size: int = 256
) -> tuple[np.ndarray, np.ndarray]:
    """Argmax predictions of both heads for a (n, timesteps, d) array."""
    model.eval()
    kinds = []
    locs = []
    with torch.no_grad():
        for start in range(0, x.shape[0], batch_size):
            batch = torch.from_numpy(np.ascontiguousarray(x[start : start + batch_size]))
            type_logits, loc_logits = model(batch)
            kinds.append(type_logits.argmax(dim=1).numpy())
            locs.append(loc_logits.argmax(dim=1).numpy())
    return np.concatenate(kinds), np.concatenate(locs)


def _accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(pred == truth))


def _refresh_batch_norm(model: DualHeadCnn, x: torch.Tensor, batch_size: int) -> None:
    """Recompute batch-norm running statistics over the training data.

    Momentum-averaged statistics lag the final weights; replacing them
    with the exact cumulative statistics makes evaluation-mode output
    consistent with the network as last trained.
    """
    norms = [m for m in model.modules() if isinstance(m, nn.BatchNorm1d)]
    momenta = [m.momentum for m in norms]
    for m in norms:
        m.reset_running_stats()
        m.momentum = None
    model.train()
    with torch.no_grad():
        for start in range(0, x.shape[0], batch_size):
            model(x[start : start + batch_size])
    for m, momentum in zip(norms, momenta):
        m.momentum = momentum
    model.eval()


def train(
    model: DualHeadCnn,
    train_set: PmudDataset,
    config: TrainConfig,
    val_set: PmudDataset | None = None,
) -> TrainHistory:
    """Fit the model in place and return the per-epoch history.

    Before the first epoch the model's input-standardisation buffers
    are calibrated from the training set; evaluation reuses the stored
    statistics.  After the last epoch the batch-norm running statistics
    are recomputed over the training set, so evaluation-mode behaviour
    reflects the final weights rather than a momentum average.

    Raises ValueError when a dataset does not match the model shape and
    RuntimeError when the loss stops being finite.
    """
    _check_compatible(model, train_set, "training")
    if val_set is not None:
        _check_compatible(model, val_set, "validation")

    torch.manual_seed(config.seed)
    x = torch.from_numpy(np.ascontiguousarray(train_set.x))
    y_type = torch.from_numpy(train_set.type_index)
    y_loc = torch.from_numpy(train_set.loc_index)
    model.calibrate_input(x)

    optimiser = torch.optim.Adam(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    scheduler = torch.optim.lr_scheduler.ExponentialLR(optimiser, gamma=config.lr_decay)
    criterion = nn.CrossEntropyLoss()
    shuffler = torch.Generator().manual_seed(config.seed)

    history = TrainHistory()
    n = len(train_set)
    for epoch in range(config.epochs):
        history.lr.append(optimiser.param_groups[0]["lr"])
        model.train()
        order = torch.randperm(n, generator=shuffler)
        type_sum = 0.0
        loc_sum = 0.0
        seen = 0
        for start in range(0, n, config.batch_size):
            take = order[start : start + config.batch_size]
            optimiser.zero_grad()
            type_logits, loc_logits = model(x[take])
            loss_type = criterion(type_logits, y_type[take])
            loss_loc = criterion(loc_logits, y_loc[take])
            loss = loss_type + loss_loc
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch starting at sample {start}"
                )
            loss.backward()
            optimiser.step()
            type_sum += loss_type.item() * len(take)
            loc_sum += loss_loc.item() * len(take)
            seen += len(take)
        history.loss_type.append(type_sum / seen)
        history.loss_loc.append(loc_sum / seen)
        if val_set is not None:
            kind_pred, loc_pred = predict(model, val_set.x, config.batch_size)
            history.val_type_accuracy.append(_accuracy(kind_pred, val_set.type_index))
            history.val_loc_accuracy.append(_accuracy(loc_pred, val_set.loc_index))
        scheduler.step()
    _refresh_batch_norm(model, x, config.batch_size)
    return history
