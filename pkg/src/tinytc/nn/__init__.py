"""Minimal 1D-CNN engine: layers with exact backpropagation, Adam, training loop, metrics."""

from tinytc.nn.layers import (
    AvgPool1D,
    BatchNorm,
    Conv1D,
    Dense,
    Dropout,
    GlobalAvgPool,
    Layer,
    MaxPool1D,
    ReLU,
    Softmax,
    conv_output_length,
)
from tinytc.nn.metrics import Metrics, classification_metrics, confusion_matrix, evaluate
from tinytc.nn.model import Model, cross_entropy
from tinytc.nn.optim import AdamState, adam_step
from tinytc.nn.training import EarlyStopping, History, ReduceLROnPlateau, TrainConfig, train

__all__ = [
    "AdamState", "AvgPool1D", "BatchNorm", "Conv1D", "Dense", "Dropout", "EarlyStopping",
    "GlobalAvgPool", "History", "Layer", "MaxPool1D", "Metrics", "Model", "ReLU",
    "ReduceLROnPlateau", "Softmax", "TrainConfig", "adam_step", "classification_metrics",
    "confusion_matrix", "conv_output_length", "cross_entropy", "evaluate", "train",
]
