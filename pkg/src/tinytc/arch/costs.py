"""Hardware cost models: parameter count, peak activation size, FLOPs.

FLOP convention (one inference, batch of one):

* conv:    out_len * out_ch * (2 * kernel * in_ch) + out_len * out_ch   (MAC = 2, plus bias)
* batchnorm (folded affine): 2 * elements
* relu:    elements
* pooling: input elements
* dropout: 0 (identity at inference)
* global average pool: input elements
* dense:   2 * in * out + out
* softmax: 3 * classes
"""

from __future__ import annotations

from dataclasses import dataclass, field

from tinytc.arch.genome import INPUT_LENGTH, ArchGenome, block_lengths


@dataclass(frozen=True)
class HardwareBudget:
    param_limit: int = 128_000
    tensor_limit: int = 24_000
    flop_limit: int = 12_000_000

    def __post_init__(self):
        if min(self.param_limit, self.tensor_limit, self.flop_limit) < 0:
            raise ValueError("budget limits must be non-negative")


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    channels: int
    length: int
    params: int
    flops: int

    @property
    def elements(self) -> int:
        return self.channels * self.length


@dataclass
class CostReport:
    params: int
    max_tensor: int
    flops: int
    per_layer: list[LayerCost] = field(default_factory=list)
    input_elements: int = INPUT_LENGTH
    bn_stat_elements: int = 0

    @property
    def params_flash_bytes_f32(self) -> int:
        return self.params * 4

    @property
    def params_flash_bytes_int8(self) -> int:
        return self.params

    @property
    def max_tensor_ram_bytes_f32(self) -> int:
        return self.max_tensor * 4

    @property
    def max_tensor_ram_bytes_int8(self) -> int:
        return self.max_tensor


def cost_report(genome: ArchGenome, input_len: int = INPUT_LENGTH) -> CostReport:
    lengths = block_lengths(genome, input_len)
    rows: list[LayerCost] = []
    ch, length = 1, input_len
    bn_stats = 0
    for i, (b, (conv_len, out_len)) in enumerate(zip(genome.blocks, lengths)):
        elems = b.filters * conv_len
        rows.append(LayerCost(f"block{i}.conv", "conv1d", b.filters, conv_len,
                              ch * b.kernel * b.filters + b.filters,
                              elems * 2 * b.kernel * ch + elems))
        rows.append(LayerCost(f"block{i}.bn", "batchnorm", b.filters, conv_len, 2 * b.filters, 2 * elems))
        rows.append(LayerCost(f"block{i}.relu", "relu", b.filters, conv_len, 0, elems))
        if b.pool != "none":
            rows.append(LayerCost(f"block{i}.pool", f"{b.pool}pool1d", b.filters, out_len, 0, elems))
        rows.append(LayerCost(f"block{i}.dropout", "dropout", b.filters, out_len, 0, 0))
        bn_stats += 2 * b.filters
        ch, length = b.filters, out_len
    k = genome.n_classes
    rows.append(LayerCost("head.gap", "gap", ch, 1, 0, ch * length))
    rows.append(LayerCost("head.dense", "dense", k, 1, ch * k + k, 2 * ch * k + k))
    rows.append(LayerCost("head.softmax", "softmax", k, 1, 0, 3 * k))
    return CostReport(
        params=sum(r.params for r in rows),
        max_tensor=max([input_len] + [r.elements for r in rows]),
        flops=sum(r.flops for r in rows),
        per_layer=rows,
        input_elements=input_len,
        bn_stat_elements=bn_stats,
    )


def count_params(genome: ArchGenome) -> int:
    return cost_report(genome).params


def max_tensor(genome: ArchGenome, input_len: int = INPUT_LENGTH) -> int:
    return cost_report(genome, input_len).max_tensor


def count_flops(genome: ArchGenome, input_len: int = INPUT_LENGTH) -> int:
    return cost_report(genome, input_len).flops


@dataclass(frozen=True)
class Violation:
    metric: str
    value: int
    limit: int

    def __str__(self) -> str:
        return f"{self.metric}={self.value} not < {self.limit}"


def check_constraints(genome: ArchGenome, budget: HardwareBudget, input_len: int = INPUT_LENGTH,
                      report: CostReport | None = None) -> list[Violation]:
    """Strict-inequality budget check; an empty list means the genome fits."""
    r = report or cost_report(genome, input_len)
    checks = (("params", r.params, budget.param_limit),
              ("max_tensor", r.max_tensor, budget.tensor_limit),
              ("flops", r.flops, budget.flop_limit))
    return [Violation(m, v, lim) for m, v, lim in checks if not v < lim]


def satisfies(genome: ArchGenome, budget: HardwareBudget, input_len: int = INPUT_LENGTH) -> bool:
    return not check_constraints(genome, budget, input_len)
