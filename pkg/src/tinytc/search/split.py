from __future__ import annotations

import numpy as np

from tinytc.errors import ClassTooSmall


def holdout_split(y, fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (train_idx, val_idx), both sorted.

    Each class contributes ``round(n_c * fraction)`` validation records,
    clamped so both sides keep at least one record of every class.
    """
    y = np.asarray(y)
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if len(members) < 2:
            raise ClassTooSmall(f"class {cls} has {len(members)} record(s); need at least 2")
        n_val = min(max(int(round(len(members) * fraction)), 1), len(members) - 1)
        perm = rng.permutation(members)
        val_idx.append(perm[:n_val])
        train_idx.append(perm[n_val:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(val_idx))


def stratified_sample(y, n: int, seed: int = 0) -> np.ndarray:
    """Up to ``n`` indices drawn proportionally per class (at least one per class)."""
    y = np.asarray(y)
    if n >= len(y):
        return np.arange(len(y))
    rng = np.random.default_rng(seed)
    picked = []
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        k = max(1, int(round(n * len(members) / len(y))))
        picked.append(rng.permutation(members)[:k])
    return np.sort(np.concatenate(picked))
