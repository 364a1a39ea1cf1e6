"""(1 + λ) evolutionary architecture search under hard hardware budgets."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from tinytc.arch.costs import HardwareBudget, check_constraints, cost_report
from tinytc.arch.genome import DEPTH_LIMIT, INPUT_LENGTH, ArchGenome, default_parent, instantiate, parse_genome
from tinytc.arch.mutation import mutate
from tinytc.errors import EmptyDataset, InfeasibleStart, SearchError
from tinytc.nn.training import TrainConfig, train
from tinytc.search.split import holdout_split

log = logging.getLogger(__name__)


@dataclass
class SearchConfig:
    generations: int = 100
    children: int = 10
    runs: int = 3
    holdout: float = 0.2
    budget: HardwareBudget = field(default_factory=HardwareBudget)
    seed: int = 0
    train: TrainConfig = field(default_factory=lambda: TrainConfig(max_epochs=100))
    max_attempts: int = 200
    elitist: bool = True
    aggregate: str = "best"
    input_len: int = INPUT_LENGTH
    depth_limit: int = DEPTH_LIMIT
    workers: int = 1

    def __post_init__(self):
        if min(self.generations, self.children, self.runs, self.max_attempts) < 1:
            raise ValueError("generations, children, runs and max_attempts must be >= 1")
        if not 0.0 < self.holdout < 1.0:
            raise ValueError("holdout must be in (0, 1)")
        if self.aggregate not in ("best", "mean"):
            raise ValueError("aggregate must be 'best' or 'mean'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        d = dict(d)
        d["budget"] = HardwareBudget(**d.get("budget", {}))
        d["train"] = TrainConfig(**d.get("train", {}))
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def config_hash(self) -> bytes:
        """SHA-256 over every field that influences the trajectory (``workers`` excluded)."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()


@dataclass
class Candidate:
    id: int
    generation: int
    child_index: int
    genome: ArchGenome
    params: int
    max_tensor: int
    flops: int
    seed: int
    parent_id: int | None = None
    run_accuracies: list[float] = field(default_factory=list)
    fitness: float | None = None
    status: str = "pending"
    error: str = ""

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "generation": self.generation,
            "child_index": self.child_index,
            "parent_id": self.parent_id,
            "genome": self.genome.to_text(),
            "params": self.params,
            "max_tensor": self.max_tensor,
            "flops": self.flops,
            "seed": self.seed,
            "run_accuracies": self.run_accuracies,
            "fitness": self.fitness,
            "status": self.status,
            "error": self.error,
        }

    @classmethod
    def from_record(cls, r: dict) -> "Candidate":
        r = dict(r)
        r["genome"] = parse_genome(r["genome"])
        return cls(**r)


@dataclass
class GenerationSummary:
    generation: int
    parent_id: int
    children_trained: int
    rejected: int
    starvation: bool
    best_fitness: float
    elapsed_s: float = 0.0

    CSV_FIELDS = ("generation", "parent_id", "children_trained", "rejected", "starvation", "best_fitness")


@dataclass
class SearchLog:
    candidates: list[Candidate] = field(default_factory=list)
    generations: list[GenerationSummary] = field(default_factory=list)

    @property
    def best_trajectory(self) -> list[float]:
        return [g.best_fitness for g in self.generations]

    def to_ndjson(self) -> str:
        return "".join(json.dumps(c.to_record(), sort_keys=True) + "\n" for c in self.candidates)

    def generations_csv(self) -> str:
        lines = [",".join(GenerationSummary.CSV_FIELDS)]
        for g in self.generations:
            lines.append(",".join(repr(getattr(g, f)) if isinstance(getattr(g, f), float) else str(getattr(g, f))
                                  for f in GenerationSummary.CSV_FIELDS))
        return "\n".join(lines) + "\n"


def candidate_seed(base_seed: int, generation: int, child_index: int, n_children: int) -> int:
    return int(base_seed) ^ (generation * n_children + child_index)


def evaluate_genome(genome: ArchGenome, X_train, y_train, X_val, y_val, train_cfg: TrainConfig,
                    seed: int, runs: int, aggregate: str = "best") -> tuple[list[float], float | None, str]:
    """Multi-start training; run ``r`` uses seed ``seed + r``.

    Returns ``(per-run accuracies, fitness, error text)``. Fitness is the best
    (or mean) holdout accuracy at each run's best epoch, ``None`` if every run
    failed.
    """
    accs, errors = [], []
    for r in range(runs):
        s = seed + r
        try:
            model = instantiate(genome, X_train.shape[-1], seed=s)
            _, hist = train(model, X_train, y_train, X_val, y_val, train_cfg.replace(seed=s))
            accs.append(float(hist.best.val_acc))
        except (ArithmeticError, ValueError, MemoryError) as exc:
            errors.append(f"run {r}: {exc}")
    if not accs:
        return accs, None, "; ".join(errors)
    fitness = max(accs) if aggregate == "best" else float(np.mean(accs))
    return accs, fitness, "; ".join(errors)


def evaluate_candidate(cand: Candidate, data, cfg: SearchConfig) -> Candidate:
    X_tr, y_tr, X_val, y_val = data
    accs, fitness, err = evaluate_genome(cand.genome, X_tr, y_tr, X_val, y_val, cfg.train,
                                         cand.seed, cfg.runs, cfg.aggregate)
    cand.run_accuracies, cand.fitness, cand.error = accs, fitness, err
    cand.status = "trained" if fitness is not None else "failed"
    return cand


_WORKER_DATA = None


def _init_worker(data):
    global _WORKER_DATA
    _WORKER_DATA = data


def _worker_eval(args):
    cand, cfg = args
    return evaluate_candidate(cand, _WORKER_DATA, cfg)


def _selection_key(c: Candidate):
    return (-c.fitness, c.flops, c.params, c.id)


def data_fingerprint(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float32).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.int64).tobytes())
    return h.hexdigest()


class EvolutionarySearch:
    """Mutate the parent, discard over-budget children, train, keep the best.

    Call :meth:`run` for the whole search or :meth:`step` per generation;
    :meth:`checkpoint` / :meth:`resume` make the search restartable with an
    identical trajectory.
    """

    def __init__(self, cfg: SearchConfig, X, y, initial: ArchGenome | None = None):
        X = np.asarray(X, dtype=np.float32)
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0:
            raise EmptyDataset("no records to search on")
        self.cfg = cfg
        self.X, self.y = X, y
        self.n_classes = int(y.max()) + 1
        tr, va = holdout_split(y, cfg.holdout, cfg.seed)
        self.data = (X[tr], y[tr], X[va], y[va])
        self.fingerprint = data_fingerprint(X, y)
        self.initial = initial or default_parent(self.n_classes)
        violations = check_constraints(self.initial, cfg.budget, cfg.input_len)
        if violations:
            raise InfeasibleStart("initial parent violates budget: " + ", ".join(map(str, violations)))
        self.rng = np.random.default_rng([cfg.seed, 2])
        self.log = SearchLog()
        self.generation = -1
        self.parent: Candidate | None = None
        self.next_id = 0
        self._executor = None

    # candidate bookkeeping ----------------------------------------------

    def _new_candidate(self, genome, generation, child_index, parent_id) -> Candidate:
        r = cost_report(genome, self.cfg.input_len)
        c = Candidate(self.next_id, generation, child_index, genome, r.params, r.max_tensor, r.flops,
                      candidate_seed(self.cfg.seed, generation, child_index, self.cfg.children), parent_id)
        self.next_id += 1
        return c

    def _evaluate(self, cands: list[Candidate]) -> list[Candidate]:
        if self.cfg.workers > 1 and len(cands) > 1:
            if self._executor is None:
                self._executor = ProcessPoolExecutor(self.cfg.workers, initializer=_init_worker,
                                                     initargs=(self.data,))
            return list(self._executor.map(_worker_eval, [(c, self.cfg) for c in cands]))
        return [evaluate_candidate(c, self.data, self.cfg) for c in cands]

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    @property
    def best_fitness(self) -> float:
        vals = [c.fitness for c in self.log.candidates if c.fitness is not None]
        return max(vals) if vals else -math.inf

    @property
    def done(self) -> bool:
        return self.generation >= self.cfg.generations

    # driving ------------------------------------------------------------

    def start(self) -> None:
        if self.generation >= 0:
            return
        t0 = time.perf_counter()
        cand = self._evaluate([self._new_candidate(self.initial, 0, 0, None)])[0]
        if cand.fitness is None:
            raise SearchError(f"initial parent failed to train: {cand.error}")
        self.log.candidates.append(cand)
        self.parent = cand
        self.generation = 0
        self.log.generations.append(GenerationSummary(0, cand.id, 1, 0, False, self.best_fitness,
                                                      time.perf_counter() - t0))

    def step(self) -> GenerationSummary:
        self.start()
        cfg = self.cfg
        g = self.generation + 1
        t0 = time.perf_counter()
        children, rejected, starved = [], 0, False
        for c in range(cfg.children):
            for _attempt in range(cfg.max_attempts):
                genome = mutate(self.parent.genome, self.rng, cfg.input_len, cfg.depth_limit)
                if not check_constraints(genome, cfg.budget, cfg.input_len):
                    children.append(self._new_candidate(genome, g, c, self.parent.id))
                    break
                rejected += 1
            else:
                starved = True
                log.warning("generation %d slot %d: mutation starvation after %d attempts", g, c, cfg.max_attempts)
        children = self._evaluate(children)
        self.log.candidates.extend(children)
        trained = [c for c in children if c.fitness is not None]
        if trained:
            best_child = min(trained, key=_selection_key)
            if not cfg.elitist or best_child.fitness > self.parent.fitness:
                self.parent = best_child
        self.generation = g
        summary = GenerationSummary(g, self.parent.id, len(trained), rejected, starved, self.best_fitness,
                                    time.perf_counter() - t0)
        self.log.generations.append(summary)
        log.info("generation %d: parent %d fitness %.4f (%d trained, %d rejected)",
                 g, self.parent.id, self.parent.fitness, len(trained), rejected)
        return summary

    def run(self, checkpoint_path=None, stop_after: int | None = None) -> tuple[ArchGenome, SearchLog]:
        """Run to completion (or until generation ``stop_after``), checkpointing each generation."""
        try:
            self.start()
            if checkpoint_path is not None and self.generation == 0:
                self.checkpoint(checkpoint_path)
            while not self.done and (stop_after is None or self.generation < stop_after):
                self.step()
                if checkpoint_path is not None:
                    self.checkpoint(checkpoint_path)
        finally:
            self.close()
        return self.parent.genome, self.log

    # persistence --------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "config": self.cfg.to_dict(),
            "data_fingerprint": self.fingerprint,
            "initial": self.initial.to_text(),
            "generation": self.generation,
            "next_id": self.next_id,
            "parent_id": None if self.parent is None else self.parent.id,
            "rng_state": self.rng.bit_generator.state,
            "candidates": [c.to_record() for c in self.log.candidates],
            "generations": [asdict(s) for s in self.log.generations],
            "log_offset": len(self.log.candidates),
        }

    def checkpoint(self, path) -> int:
        from tinytc.search.checkpoint import write_checkpoint
        return write_checkpoint(path, self.state_dict(), self.cfg.config_hash())

    @classmethod
    def from_state(cls, state: dict, X, y, cfg: SearchConfig | None = None) -> "EvolutionarySearch":
        saved_cfg = SearchConfig.from_dict(state["config"])
        if cfg is None:
            cfg = saved_cfg
        elif cfg.config_hash() != saved_cfg.config_hash():
            raise SearchError("checkpoint was written by a different search configuration")
        search = cls(cfg, X, y, parse_genome(state["initial"]))
        if search.fingerprint != state["data_fingerprint"]:
            raise SearchError("checkpoint was written for different records")
        search.generation = state["generation"]
        search.next_id = state["next_id"]
        search.rng.bit_generator.state = state["rng_state"]
        search.log.candidates = [Candidate.from_record(r) for r in state["candidates"]]
        search.log.generations = [GenerationSummary(**s) for s in state["generations"]]
        by_id = {c.id: c for c in search.log.candidates}
        search.parent = by_id.get(state["parent_id"])
        return search

    @classmethod
    def resume(cls, path, X, y, cfg: SearchConfig | None = None) -> "EvolutionarySearch":
        from tinytc.search.checkpoint import read_checkpoint
        return cls.from_state(read_checkpoint(path, None if cfg is None else cfg.config_hash()), X, y, cfg)


def run_search(cfg: SearchConfig, X, y, initial: ArchGenome | None = None,
               checkpoint_path=None) -> tuple[ArchGenome, SearchLog]:
    return EvolutionarySearch(cfg, X, y, initial).run(checkpoint_path)
