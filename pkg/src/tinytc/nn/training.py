from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from tinytc.errors import EmptyDataset
from tinytc.nn.model import Model, cross_entropy
from tinytc.nn.optim import AdamState, adam_step


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    batch: int = 128
    max_epochs: int = 100
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    min_lr: float = 1e-5
    early_stop_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must be in (0, 1)")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.batch < 1 or self.max_epochs < 1 or self.lr0 <= 0:
            raise ValueError("batch, max_epochs and lr0 must be positive")

    def replace(self, **changes) -> "TrainConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return TrainConfig(**values)


class ReduceLROnPlateau:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, lr: float, factor: float, patience: int, min_lr: float = 0.0):
        self.lr, self.factor, self.patience, self.min_lr = lr, factor, patience, min_lr
        self.best = math.inf
        self.wait = 0

    def update(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.wait = 0
        return self.lr


class EarlyStopping:
    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; True means stop now."""
        if val_loss < self.best:
            self.best, self.best_epoch, self.wait = val_loss, epoch, 0
            return False
        self.wait += 1
        return self.wait >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class History:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch - 1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc", "lr"])
        for r in self.epochs:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_acc), repr(r.lr)])
        return buf.getvalue()


def _loss_and_acc(model: Model, X, y, batch_size=512) -> tuple[float, float]:
    probs = model.predict_proba(X, batch_size)
    return cross_entropy(probs, y), float((probs.argmax(axis=1) == y).mean())


def train(model: Model, X_train, y_train, X_val, y_val, cfg: TrainConfig, progress=None) -> tuple[Model, History]:
    """Adam training with plateau decay and early stopping.

    The returned model carries the parameters (and batch-norm statistics) of
    the epoch with the lowest validation loss.
    """
    X_train, y_train = np.asarray(X_train), np.asarray(y_train)
    X_val, y_val = np.asarray(X_val), np.asarray(y_val)
    if len(X_train) == 0 or len(X_val) == 0:
        raise EmptyDataset("training and validation sets must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    plateau = ReduceLROnPlateau(cfg.lr0, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr)
    stopper = EarlyStopping(cfg.early_stop_patience)
    history = History()
    best_state = model.get_state()
    lr = cfg.lr0
    n = len(X_train)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch):
            idx = order[start:start + cfg.batch]
            probs = model.forward(X_train[idx], "train")
            total += cross_entropy(probs, y_train[idx]) * len(idx)
            grads = model.backward(y_train[idx])
            adam_step(model.named_params(), grads, state, lr)
        val_loss, val_acc = _loss_and_acc(model, X_val, y_val)
        history.epochs.append(EpochRecord(epoch, total / n, val_loss, val_acc, lr))
        if progress is not None:
            progress(history.epochs[-1])
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best_state = model.get_state()
        if stop:
            break
        lr = plateau.update(val_loss)
    history.best_epoch = max(stopper.best_epoch, 1)
    model.set_state(best_state)
    return model, history
