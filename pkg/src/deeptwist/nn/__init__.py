"""Minimal feed-forward training engine."""

from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, load_mnist, load_mnist_idx
from .model import (
    LENET_300_100,
    Layer,
    MlpModel,
    cross_entropy,
    evaluate,
    forward,
    loss_and_backward,
    predict_logits,
)
from .optim import OptimizerState, make_optimizer, optimizer_step
from .train import TrainResult, train

__all__ = [
    "load_checkpoint",
    "save_checkpoint",
    "Dataset",
    "load_mnist",
    "load_mnist_idx",
    "LENET_300_100",
    "Layer",
    "MlpModel",
    "cross_entropy",
    "evaluate",
    "forward",
    "loss_and_backward",
    "predict_logits",
    "OptimizerState",
    "make_optimizer",
    "optimizer_step",
    "TrainResult",
    "train",
]
