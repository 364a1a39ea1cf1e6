from __future__ import annotations

from dataclasses import replace

import numpy as np

from tinytc.arch.genome import (
    DEPTH_LIMIT,
    DROPOUT_RANGE,
    DROPOUT_STEP,
    FILTER_RANGE,
    INPUT_LENGTH,
    KERNEL_RANGE,
    POOL_KINDS,
    STRIDE_RANGE,
    ArchGenome,
    random_gene,
)
from tinytc.errors import InvalidGenome

MUTATION_KINDS = ("add", "remove", "perturb", "toggle")
MAX_RESAMPLES = 200


def _other(rng, values, current):
    choices = [v for v in values if v != current]
    return choices[int(rng.integers(0, len(choices)))]


def _perturb(gene, rng):
    fields = ["filters", "kernel", "stride", "dropout"]
    if gene.pool != "none":
        fields.append("pool_size")
    name = fields[int(rng.integers(0, len(fields)))]
    if name == "filters":
        lo, hi = FILTER_RANGE
        if rng.random() < 0.5:
            step = int(rng.integers(1, 17)) * (1 if rng.random() < 0.5 else -1)
            value = min(max(gene.filters + step, lo), hi)
            if value == gene.filters:
                value = min(max(gene.filters - step, lo), hi)
        else:
            value = _other(rng, range(lo, hi + 1), gene.filters)
    elif name == "kernel":
        value = _other(rng, range(KERNEL_RANGE[0], KERNEL_RANGE[1] + 1), gene.kernel)
    elif name == "stride":
        value = _other(rng, range(STRIDE_RANGE[0], STRIDE_RANGE[1] + 1), gene.stride)
    elif name == "dropout":
        n = int(round((DROPOUT_RANGE[1] - DROPOUT_RANGE[0]) / DROPOUT_STEP))
        grid = [round(DROPOUT_RANGE[0] + DROPOUT_STEP * i, 2) for i in range(n + 1)]
        value = _other(rng, grid, round(gene.dropout, 2))
    else:
        value = 5 - gene.pool_size
    return replace(gene, **{name: value})


def _toggle(gene, rng):
    if rng.random() < 0.5:
        return replace(gene, padding="same" if gene.padding == "valid" else "valid")
    return replace(gene, pool=_other(rng, POOL_KINDS, gene.pool))


def apply_mutation(parent: ArchGenome, kind: str, rng: np.random.Generator) -> ArchGenome:
    blocks = list(parent.blocks)
    if kind == "add":
        blocks.insert(int(rng.integers(0, len(blocks) + 1)), random_gene(rng))
    elif kind == "remove":
        blocks.pop(int(rng.integers(0, len(blocks))))
    elif kind == "perturb":
        i = int(rng.integers(0, len(blocks)))
        blocks[i] = _perturb(blocks[i], rng)
    elif kind == "toggle":
        i = int(rng.integers(0, len(blocks)))
        blocks[i] = _toggle(blocks[i], rng)
    else:
        raise ValueError(f"unknown mutation kind {kind!r}")
    return parent.with_blocks(blocks)


def allowed_kinds(parent: ArchGenome, depth_limit: int = DEPTH_LIMIT) -> tuple[str, ...]:
    kinds = list(MUTATION_KINDS)
    if len(parent.blocks) <= 1:
        kinds.remove("remove")
    if len(parent.blocks) >= depth_limit:
        kinds.remove("add")
    return tuple(kinds)


def mutate(parent: ArchGenome, rng: np.random.Generator, input_len: int = INPUT_LENGTH,
           depth_limit: int = DEPTH_LIMIT) -> ArchGenome:
    """Apply exactly one mutation drawn uniformly from the kinds legal for ``parent``.

    Draws that collapse the spatial width are discarded and redrawn; the child
    respects gene ranges and the depth limit but may exceed a hardware budget.
    """
    kinds = allowed_kinds(parent, depth_limit)
    for _ in range(MAX_RESAMPLES):
        kind = kinds[int(rng.integers(0, len(kinds)))]
        child = apply_mutation(parent, kind, rng)
        if child.is_valid(input_len, depth_limit):
            return child
    raise InvalidGenome("no structurally valid mutation found")
