from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tinytc.errors import EmptyCalibrationSet
from tinytc.nn.model import Model


@dataclass(frozen=True)
class CalibrationStats:
    """Per-edge (min, max); edge 0 is the model input, edge ``i + 1`` the output of layer ``i``."""

    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.mins)

    def edge(self, i: int) -> tuple[float, float]:
        return self.mins[i], self.maxs[i]

    def merge(self, other: "CalibrationStats") -> "CalibrationStats":
        if len(self) != len(other):
            raise ValueError("cannot merge statistics of different graphs")
        return CalibrationStats(tuple(map(min, self.mins, other.mins)), tuple(map(max, self.maxs, other.maxs)))


def calibrate(model: Model, X, batch_size: int = 256) -> CalibrationStats:
    """Running min/max of every activation edge over a representative set (infer mode)."""
    X = np.asarray(X)
    if len(X) == 0:
        raise EmptyCalibrationSet("calibration needs at least one record")
    n_edges = len(model.layers) + 1
    mins = np.full(n_edges, np.inf)
    maxs = np.full(n_edges, -np.inf)
    for start in range(0, len(X), batch_size):
        h = model._as_batch(X[start:start + batch_size])
        mins[0] = min(mins[0], float(h.min()))
        maxs[0] = max(maxs[0], float(h.max()))
        for i, layer in enumerate(model.layers):
            h = layer.forward(h, False)
            mins[i + 1] = min(mins[i + 1], float(h.min()))
            maxs[i + 1] = max(maxs[i + 1], float(h.max()))
    return CalibrationStats(tuple(mins.tolist()), tuple(maxs.tolist()))
