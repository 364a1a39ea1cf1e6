"""Searchable description of a sequential 1D-CNN."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

from tinytc.errors import CollapsedWidth, InvalidGenome
from tinytc.nn.layers import (
    AvgPool1D,
    BatchNorm,
    Conv1D,
    Dense,
    Dropout,
    GlobalAvgPool,
    MaxPool1D,
    ReLU,
    Softmax,
    conv_output_length,
)
from tinytc.nn.model import Model

INPUT_LENGTH = 784
DEPTH_LIMIT = 6

FILTER_RANGE = (16, 140)
KERNEL_RANGE = (3, 7)
STRIDE_RANGE = (1, 6)
POOL_SIZE_RANGE = (2, 3)
DROPOUT_RANGE = (0.1, 0.5)
DROPOUT_STEP = 0.05
PADDINGS = ("same", "valid")
POOL_KINDS = ("none", "max", "avg")


@dataclass(frozen=True)
class BlockGene:
    filters: int
    kernel: int
    stride: int
    padding: str = "valid"
    pool: str = "none"
    pool_size: int = 2
    dropout: float = 0.1

    def __post_init__(self):
        # pool_size means nothing without a pool; pin it so equal networks compare equal
        if self.pool == "none" and self.pool_size != POOL_SIZE_RANGE[0]:
            object.__setattr__(self, "pool_size", POOL_SIZE_RANGE[0])

    def validate(self) -> None:
        def within(name, value, bounds):
            if not bounds[0] <= value <= bounds[1]:
                raise InvalidGenome(f"{name}={value} outside {bounds}")
        within("filters", self.filters, FILTER_RANGE)
        within("kernel", self.kernel, KERNEL_RANGE)
        within("stride", self.stride, STRIDE_RANGE)
        within("pool_size", self.pool_size, POOL_SIZE_RANGE)
        if not DROPOUT_RANGE[0] - 1e-9 <= self.dropout <= DROPOUT_RANGE[1] + 1e-9:
            raise InvalidGenome(f"dropout={self.dropout} outside {DROPOUT_RANGE}")
        if self.padding not in PADDINGS:
            raise InvalidGenome(f"padding {self.padding!r}")
        if self.pool not in POOL_KINDS:
            raise InvalidGenome(f"pool {self.pool!r}")

    def to_text(self) -> str:
        pool = "none" if self.pool == "none" else f"{self.pool}{self.pool_size}"
        return (f"conv f={self.filters} k={self.kernel} s={self.stride} pad={self.padding} "
                f"pool={pool} drop={self.dropout:.2f}")


@dataclass(frozen=True)
class ArchGenome:
    blocks: tuple[BlockGene, ...]
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def validate(self, input_len: int = INPUT_LENGTH, depth_limit: int = DEPTH_LIMIT) -> None:
        """Raise :class:`InvalidGenome` or :class:`CollapsedWidth` unless instantiable."""
        if not 1 <= len(self.blocks) <= depth_limit:
            raise InvalidGenome(f"block count {len(self.blocks)} outside [1, {depth_limit}]")
        if self.n_classes < 2:
            raise InvalidGenome("n_classes must be >= 2")
        for b in self.blocks:
            b.validate()
        block_lengths(self, input_len)

    def is_valid(self, input_len: int = INPUT_LENGTH, depth_limit: int = DEPTH_LIMIT) -> bool:
        try:
            self.validate(input_len, depth_limit)
        except (InvalidGenome, CollapsedWidth):
            return False
        return True

    def to_text(self) -> str:
        return f"classes={self.n_classes}\n" + "".join(b.to_text() + "\n" for b in self.blocks)

    @classmethod
    def from_text(cls, text: str) -> "ArchGenome":
        return parse_genome(text)

    def with_blocks(self, blocks) -> "ArchGenome":
        return replace(self, blocks=tuple(blocks))


_BLOCK_RE = re.compile(
    r"conv\s+f=(\d+)\s+k=(\d+)\s+s=(\d+)\s+pad=(same|valid)\s+pool=(none|max[23]|avg[23])\s+drop=([0-9.]+)$"
)


def parse_genome(text: str) -> ArchGenome:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
    if not lines or not lines[0].startswith("classes="):
        raise InvalidGenome("genome text must start with 'classes=N'")
    try:
        n_classes = int(lines[0].split("=", 1)[1])
    except ValueError:
        raise InvalidGenome(f"bad header {lines[0]!r}") from None
    blocks = []
    for ln in lines[1:]:
        m = _BLOCK_RE.match(ln)
        if not m:
            raise InvalidGenome(f"cannot parse block line {ln!r}")
        f, k, s, pad, pool, drop = m.groups()
        kind, size = ("none", 2) if pool == "none" else (pool[:3], int(pool[3]))
        blocks.append(BlockGene(int(f), int(k), int(s), pad, kind, size, round(float(drop), 2)))
    return ArchGenome(tuple(blocks), n_classes)


def block_lengths(genome: ArchGenome, input_len: int = INPUT_LENGTH) -> list[tuple[int, int]]:
    """Per block: (conv output length, block output length after pooling)."""
    length = input_len
    out = []
    for i, b in enumerate(genome.blocks):
        conv_len = conv_output_length(length, b.kernel, b.stride, b.padding)
        if conv_len < 1:
            raise CollapsedWidth(f"block {i}: conv k={b.kernel} s={b.stride} {b.padding} on length {length}")
        length = conv_len if b.pool == "none" else conv_len // b.pool_size
        if length < 1:
            raise CollapsedWidth(f"block {i}: pool {b.pool_size} on length {conv_len}")
        out.append((conv_len, length))
    return out


def instantiate(genome: ArchGenome, input_len: int = INPUT_LENGTH, seed: int = 0, dtype=np.float32) -> Model:
    genome.validate(input_len)
    layers = []
    in_ch = 1
    for b in genome.blocks:
        layers += [Conv1D(in_ch, b.filters, b.kernel, b.stride, b.padding), BatchNorm(b.filters), ReLU()]
        if b.pool == "max":
            layers.append(MaxPool1D(b.pool_size))
        elif b.pool == "avg":
            layers.append(AvgPool1D(b.pool_size))
        layers.append(Dropout(b.dropout))
        in_ch = b.filters
    layers += [GlobalAvgPool(), Dense(in_ch, genome.n_classes), Softmax()]
    return Model(layers, (1, input_len), rng_seed=seed, dtype=dtype)


def genome_from_model(model) -> ArchGenome:
    """Recover the genome of a model built by :func:`instantiate` (BN/dropout optional)."""
    blocks, current = [], None
    for layer in model.layers:
        kind = getattr(layer, "kind", "")
        if kind in ("conv1d", "qconv1d"):
            if current:
                blocks.append(BlockGene(**current))
            current = dict(filters=layer.out_ch, kernel=layer.kernel, stride=layer.stride, padding=layer.padding)
        elif kind in ("maxpool1d", "avgpool1d", "qmaxpool1d", "qavgpool1d") and current:
            current.update(pool=kind.lstrip("q")[:3], pool_size=layer.size)
        elif kind == "dropout" and current:
            current["dropout"] = round(layer.rate, 2)
        elif kind in ("dense", "qdense"):
            n_classes = layer.n_out
    if current:
        blocks.append(BlockGene(**current))
    return ArchGenome(tuple(blocks), n_classes)


def paper_architecture(n_classes: int = 11) -> ArchGenome:
    """Three-block network found by the reference search, pooling placement reconstructed."""
    return ArchGenome((
        BlockGene(129, 7, 5, "valid", "none", 2, 0.1),
        BlockGene(110, 4, 2, "valid", "avg", 2, 0.1),
        BlockGene(38, 7, 2, "valid", "max", 2, 0.1),
    ), n_classes)


def default_parent(n_classes: int) -> ArchGenome:
    return ArchGenome((BlockGene(32, 5, 2, "valid", "max", 2, 0.2),), n_classes)


def random_gene(rng: np.random.Generator) -> BlockGene:
    steps = int(round((DROPOUT_RANGE[1] - DROPOUT_RANGE[0]) / DROPOUT_STEP))
    return BlockGene(
        filters=int(rng.integers(FILTER_RANGE[0], FILTER_RANGE[1] + 1)),
        kernel=int(rng.integers(KERNEL_RANGE[0], KERNEL_RANGE[1] + 1)),
        stride=int(rng.integers(STRIDE_RANGE[0], STRIDE_RANGE[1] + 1)),
        padding=PADDINGS[int(rng.integers(0, 2))],
        pool=POOL_KINDS[int(rng.integers(0, 3))],
        pool_size=int(rng.integers(POOL_SIZE_RANGE[0], POOL_SIZE_RANGE[1] + 1)),
        dropout=round(DROPOUT_RANGE[0] + DROPOUT_STEP * int(rng.integers(0, steps + 1)), 2),
    )


def random_genome(rng: np.random.Generator, n_classes: int = 4, input_len: int = INPUT_LENGTH,
                  depth_limit: int = DEPTH_LIMIT, max_tries: int = 1000) -> ArchGenome:
    """Uniformly drawn depth and genes, resampled until the genome is instantiable."""
    for _ in range(max_tries):
        depth = int(rng.integers(1, depth_limit + 1))
        g = ArchGenome(tuple(random_gene(rng) for _ in range(depth)), n_classes)
        if g.is_valid(input_len, depth_limit):
            return g
    raise InvalidGenome("could not draw a valid genome")
