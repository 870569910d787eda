"""Evaluation harness for dual-head waveform classifiers.

The package trains and scores a 1D convolutional network that reads
multi-channel PMU waveform windows and predicts, from the same trunk,
the fault type and the faulted line.  Data arrives as PMUD tensor
files produced by the placement toolchain; nothing here imports that
toolchain, the binary format is the contract.
"""

from cnneval.model import (
    CnnConfig,
    DualHeadCnn,
    ModelConfigError,
    N_FAULT_TYPES,
    REPORTED_INPUT_OFFSET,
    build_model,
    flatten_width,
    param_count,
)
from cnneval.pmud import PmudDataset, PmudFormatError, read_pmud
from cnneval.train import TrainConfig, TrainHistory, predict, train
from cnneval.metrics import HeadMetrics, MetricsReport, confusion_matrix, evaluate, head_metrics

__all__ = [
    "CnnConfig",
    "DualHeadCnn",
    "HeadMetrics",
    "MetricsReport",
    "ModelConfigError",
    "N_FAULT_TYPES",
    "PmudDataset",
    "PmudFormatError",
    "REPORTED_INPUT_OFFSET",
    "TrainConfig",
    "TrainHistory",
    "build_model",
    "confusion_matrix",
    "evaluate",
    "flatten_width",
    "head_metrics",
    "param_count",
    "predict",
    "read_pmud",
    "train",
]
