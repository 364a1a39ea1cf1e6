"""Evolutionary hardware-constrained architecture search."""

from tinytc.search.checkpoint import read_checkpoint, write_checkpoint
from tinytc.search.engine import (
    Candidate,
    EvolutionarySearch,
    GenerationSummary,
    SearchConfig,
    SearchLog,
    candidate_seed,
    evaluate_candidate,
    evaluate_genome,
    run_search,
)
from tinytc.search.split import holdout_split, stratified_sample

__all__ = [
    "Candidate", "EvolutionarySearch", "GenerationSummary", "SearchConfig", "SearchLog",
    "candidate_seed", "evaluate_candidate", "evaluate_genome", "holdout_split",
    "read_checkpoint", "run_search", "stratified_sample", "write_checkpoint",
]
