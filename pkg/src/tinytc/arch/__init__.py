"""Architecture genomes, mutation, model instantiation and hardware cost models."""

from tinytc.arch.costs import (
    CostReport,
    HardwareBudget,
    LayerCost,
    Violation,
    check_constraints,
    cost_report,
    count_flops,
    count_params,
    max_tensor,
    satisfies,
)
from tinytc.arch.genome import (
    DEPTH_LIMIT,
    INPUT_LENGTH,
    ArchGenome,
    BlockGene,
    default_parent,
    genome_from_model,
    instantiate,
    paper_architecture,
    parse_genome,
    random_gene,
    random_genome,
)
from tinytc.arch.mutation import MUTATION_KINDS, allowed_kinds, apply_mutation, mutate

__all__ = [
    "DEPTH_LIMIT", "INPUT_LENGTH", "MUTATION_KINDS", "ArchGenome", "BlockGene", "CostReport",
    "HardwareBudget", "LayerCost", "Violation", "allowed_kinds", "apply_mutation",
    "check_constraints", "cost_report", "count_flops", "count_params", "default_parent",
    "genome_from_model", "instantiate", "max_tensor", "mutate", "paper_architecture",
    "parse_genome", "random_gene", "random_genome", "satisfies",
]
