"""Command-line entry point: ``tinytc <command> [options]``.

Exit codes:

    0  success
    1  unexpected internal error
    2  bad usage or input (missing label, unreadable file, bad config or genome)
    3  infeasible search start (initial parent violates the budget)
    4  empty dataset (no records, empty calibration set)
    5  malformed capture or record file
    6  model file rejected (magic, version, checksum)
    7  search failure (mutation starvation, corrupt checkpoint, class too small)
    8  quantization failure (unsupported topology)
    9  gradient check above tolerance

Human-readable text goes to stdout, logs to stderr (level from ``MTC_LOG``),
and every artifact to ``--out-dir`` together with a ``<command>.manifest.json``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from tinytc import __version__
from tinytc.arch.genome import genome_from_model, instantiate, paper_architecture, parse_genome
from tinytc.config import RunConfig, load_config
from tinytc.errors import (
    CollapsedWidth,
    ConfigError,
    EmptyCalibrationSet,
    EmptyDataset,
    InfeasibleStart,
    IngestError,
    InvalidGenome,
    ModelFileError,
    NNError,
    QuantizationError,
    SearchError,
    TinyTCError,
)
from tinytc.ingest.pipeline import IngestDiagnostics, ingest_capture
from tinytc.ingest.records import read_label_map, read_records, write_label_map, write_records
from tinytc.ingest.synthetic import generate_class_captures
from tinytc.io.model_file import atomic_write, load_model, save_model
from tinytc.io.reports import confusion_csv, emit_cost_report, metrics_csv, read_genome, write_genome
from tinytc.nn.gradcheck import check_gradients, random_micro_model
from tinytc.nn.metrics import evaluate
from tinytc.nn.model import Model
from tinytc.nn.training import train
from tinytc.quant import calibrate, compare, fold_batchnorm, quantize_model
from tinytc.search.engine import EvolutionarySearch
from tinytc.search.split import holdout_split, stratified_sample

log = logging.getLogger("tinytc")

GRADCHECK_TOLERANCE = 1e-3
RETRAIN_EPOCHS = 200


class UsageError(TinyTCError):
    pass


class GradCheckFailed(TinyTCError):
    pass


# exception -> exit code; first match wins, so subclasses come first
EXIT_CODES = (
    (InfeasibleStart, 3),
    ((EmptyDataset, EmptyCalibrationSet), 4),
    (ModelFileError, 6),
    (QuantizationError, 8),
    (SearchError, 7),
    (IngestError, 5),
    (GradCheckFailed, 9),
    ((UsageError, ConfigError, InvalidGenome, CollapsedWidth, NNError, OSError), 2),
)


def exit_code_for(exc: BaseException) -> int:
    for types, code in EXIT_CODES:
        if isinstance(exc, types):
            return code
    return 1


# manifest -------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects inputs/outputs of one command and writes its manifest."""

    def __init__(self, args, cfg: RunConfig):
        self.args, self.cfg = args, cfg
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.extra: dict = {}
        self.started = datetime.now(timezone.utc)
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def add_input(self, p) -> Path:
        p = Path(p)
        self.inputs.append(p)
        return p

    def write(self, name: str, data: bytes | str) -> Path:
        p = self.path(name)
        atomic_write(p, data.encode() if isinstance(data, str) else data)
        self.outputs.append(p)
        return p

    def manifest(self) -> dict:
        def describe(p: Path):
            return {"path": str(p), "sha256": _sha256(p), "bytes": p.stat().st_size} if p.exists() else {"path": str(p)}
        return {
            "command": self.args.command,
            "argv": self.args.argv,
            "tool_version": __version__,
            "seed": self.args.seed,
            "config": {"search": self.cfg.search.to_dict(), "workers": self.cfg.search.workers,
                       "corpus": {k: v for k, v in vars(self.cfg.corpus).items()}},
            "inputs": [describe(p) for p in self.inputs],
            "outputs": [describe(p) for p in self.outputs],
            "started_utc": self.started.isoformat(),
            "wall_clock_s": round(time.perf_counter() - self.t0, 3),
            "python": platform.python_version(),
            "numpy": np.__version__,
            **self.extra,
        }

    def finish(self) -> None:
        text = json.dumps(self.manifest(), indent=2, sort_keys=True, default=str) + "\n"
        atomic_write(self.path(f"{self.args.command}.manifest.json"), text.encode())


def _load_xy(run: Run, path) -> tuple[np.ndarray, np.ndarray]:
    X, y = read_records(run.add_input(path))
    if len(X) == 0:
        raise EmptyDataset(f"{path}: record file holds no records")
    return X, y


def _load_genome(args, n_classes: int | None = None):
    if getattr(args, "paper_arch", False):
        return paper_architecture(n_classes or args.classes)
    if getattr(args, "genome", None):
        g = read_genome(args.genome)
        if n_classes is not None and g.n_classes != n_classes:
            g = type(g)(g.blocks, n_classes)
        return g
    raise UsageError("an architecture is required: pass --genome FILE or --paper-arch")


# commands -------------------------------------------------------------------

def cmd_synth_data(args, run: Run) -> None:
    spec = run.cfg.corpus
    if args.classes is not None:
        spec.n_classes = args.classes
    if args.sessions_per_class is not None:
        spec.sessions_per_class = args.sessions_per_class
    spec.families = spec.families or None
    captures = generate_class_captures(spec, args.seed)
    cap_dir = run.path("captures")
    cap_dir.mkdir(exist_ok=True)
    for name, data in captures.items():
        run.write(f"captures/{name}.pcap", data)
    write_label_map(run.path("labels.tsv"), list(captures))
    run.outputs.append(run.path("labels.tsv"))
    print(f"wrote {len(captures)} captures x {spec.sessions_per_class} sessions to {cap_dir}")


def _resolve_label(path: Path, by_name: dict[str, int]) -> int:
    for candidate in (path.stem, path.parent.name):
        if candidate in by_name:
            return by_name[candidate]
    raise UsageError(f"no label for capture {path}: neither '{path.stem}' nor '{path.parent.name}' "
                     "appears in the label map")


def cmd_ingest(args, run: Run) -> None:
    names = read_label_map(run.add_input(args.labels))
    by_name = {name: idx for idx, name in names.items()}
    jobs = [(Path(p), _resolve_label(Path(p), by_name)) for p in args.captures]
    diag = IngestDiagnostics()
    records = []
    per_file = {}
    for path, label in jobs:
        run.add_input(path)
        d = IngestDiagnostics()
        records += ingest_capture(path.read_bytes(), label, d)
        per_file[str(path)] = d.as_dict()
        diag = diag.merge(d)
    if not records:
        log.warning("no records produced from %d capture(s)", len(jobs))
    out = Path(args.output) if args.output else run.path("records.mtcr")
    write_records(out, records)
    run.outputs.append(out)
    label_copy = run.path("labels.tsv")
    if label_copy.resolve() != Path(args.labels).resolve():
        write_label_map(label_copy, [names[i] for i in sorted(names)])
        run.outputs.append(label_copy)
    summary = diag.as_dict()
    run.write("ingest_diagnostics.json", json.dumps({"total": summary, "per_file": per_file}, indent=2) + "\n")
    run.extra["diagnostics"] = summary
    print(f"{len(records)} records from {summary['sessions_total']} sessions "
          f"({summary['packets']} packets) -> {out}")
    print(f"sessions dropped: {summary['sessions_dropped'] or 'none'}")
    print(f"packets filtered: {summary['packets_filtered'] or 'none'}")
    print(f"packets skipped:  {summary['packets_skipped'] or 'none'}")


def cmd_search(args, run: Run) -> None:
    X, y = _load_xy(run, args.records)
    if len(np.unique(y)) < 2:
        raise UsageError("search needs records from at least two classes")
    cfg = run.cfg.search
    ckpt = run.path("search.mtck")
    initial = read_genome(args.initial) if args.initial else None
    if args.resume and ckpt.exists():
        search = EvolutionarySearch.resume(ckpt, X, y, cfg)
        print(f"resuming from generation {search.generation} ({ckpt})")
    else:
        if args.resume:
            log.warning("--resume given but %s does not exist; starting fresh", ckpt)
        search = EvolutionarySearch(cfg, X, y, initial)
    best, slog = search.run(ckpt, stop_after=args.stop_after)
    run.outputs.append(ckpt)
    run.write("best_genome.txt", best.to_text())
    run.write("search_log.ndjson", slog.to_ndjson())
    run.write("generations.csv", slog.generations_csv())
    run.extra["best_fitness"] = search.best_fitness
    print(f"generations: {search.generation}/{cfg.generations}, candidates: {len(slog.candidates)}")
    print(f"best fitness: {search.best_fitness:.4f}")
    print(best.to_text(), end="")


def cmd_train(args, run: Run) -> None:
    X, y = _load_xy(run, args.records)
    n_classes = int(y.max()) + 1
    if args.genome:
        run.add_input(args.genome)
    genome = _load_genome(args, n_classes)
    tcfg = run.cfg.train
    if args.epochs is not None:
        tcfg = tcfg.replace(max_epochs=args.epochs)
    elif args.config is None:
        tcfg = tcfg.replace(max_epochs=RETRAIN_EPOCHS)
    tcfg = tcfg.replace(seed=args.seed)
    tr, va = holdout_split(y, run.cfg.search.holdout, args.seed)
    model = instantiate(genome, X.shape[1], seed=args.seed)
    model, history = train(model, X[tr], y[tr], X[va], y[va], tcfg)
    n = save_model(model, run.path("model.mtcm"))
    run.outputs.append(run.path("model.mtcm"))
    run.write("history.csv", history.to_csv())
    write_genome(run.path("genome.txt"), genome)
    run.outputs.append(run.path("genome.txt"))
    best = history.best
    print(f"trained {genome.n_classes}-class model, {model.n_params()} params, {n} bytes")
    print(f"best epoch {best.epoch}: val_loss {best.val_loss:.4f}, val_acc {best.val_acc:.4f}")


def cmd_eval(args, run: Run) -> None:
    model = load_model(run.add_input(args.model))
    X, y = _load_xy(run, args.records)
    m = evaluate(model, X, y)
    run.write("metrics.csv", metrics_csv(m))
    run.write("confusion.csv", confusion_csv(m))
    print(f"accuracy {m.accuracy:.4f}, macro F1 {m.macro_f1:.4f} on {len(y)} records")


def cmd_quantize(args, run: Run) -> None:
    model = load_model(run.add_input(args.model))
    if not isinstance(model, Model):
        raise UsageError(f"{args.model} is already quantized")
    X, y = _load_xy(run, args.records)
    idx = stratified_sample(y, args.calibration, args.seed)
    folded = fold_batchnorm(model)
    qmodel = quantize_model(folded, calibrate(folded, X[idx]))
    n = save_model(qmodel, run.path("model_int8.mtcm"))
    run.outputs.append(run.path("model_int8.mtcm"))
    Xe, ye = (_load_xy(run, args.eval_records) if args.eval_records else (X, y))
    report = compare(model, qmodel, Xe, ye, task=args.task or Path(args.records).stem)
    run.write("quant_delta.csv", report.to_csv())
    run.write("quant_delta.txt", report.to_text())
    run.write("quant_per_class.csv", report.per_class_csv())
    run.extra["delta"] = report.row()
    print(f"int8 model: {n} bytes ({len(idx)} calibration records)")
    print(report.to_text(), end="")


def cmd_report(args, run: Run) -> None:
    if args.model:
        genome = genome_from_model(load_model(run.add_input(args.model)))
    else:
        if args.genome:
            run.add_input(args.genome)
        genome = _load_genome(args)
    run.write("cost_report.csv", emit_cost_report(genome, "csv"))
    run.write("cost_report.txt", emit_cost_report(genome, "text"))
    print(emit_cost_report(genome, args.format), end="")


def cmd_gradcheck(args, run: Run) -> None:
    rng = np.random.default_rng(args.seed)
    lines = ["model,max_rel_error,worst_param,n_checked"]
    worst = 0.0
    for i in range(args.models):
        model, X, y = random_micro_model(rng)
        r = check_gradients(model, X, y, step=args.step)
        worst = max(worst, r.max_rel_error)
        lines.append(f"{i},{r.max_rel_error:.3e},{r.worst_param},{r.n_checked}")
    run.write("gradcheck.csv", "\n".join(lines) + "\n")
    run.extra["max_rel_error"] = worst
    print(f"{args.models} micro-models, max relative error {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:g})")
    if not worst < GRADCHECK_TOLERANCE:
        raise GradCheckFailed(f"max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:g}")


COMMANDS = {
    "synth-data": cmd_synth_data,
    "ingest": cmd_ingest,
    "search": cmd_search,
    "train": cmd_train,
    "eval": cmd_eval,
    "quantize": cmd_quantize,
    "report": cmd_report,
    "gradcheck": cmd_gradcheck,
}


# argument parsing -----------------------------------------------------------

def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(None), help="base random seed (default: config, else 0)")
    parser.add_argument("--config", default=d(None), help="INI config with [search] [train] [budget] [corpus]")
    parser.add_argument("--out-dir", default=d("."), help="directory for artifacts and the manifest")
    parser.add_argument("--workers", type=int, default=d(None), help="parallel candidate training processes")
    parser.add_argument("--resume", action="store_true", default=d(False), help="continue a search from its checkpoint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tinytc", description="Hardware-aware 1D-CNN traffic classification toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", parents=[common], help="write a labeled synthetic capture corpus")
    p.add_argument("--classes", type=int)
    p.add_argument("--sessions-per-class", type=int)

    p = sub.add_parser("ingest", parents=[common], help="captures -> record file")
    p.add_argument("captures", nargs="+", help="pcap files; label = file stem or parent directory name")
    p.add_argument("--labels", required=True, help="label map (index<TAB>name per line)")
    p.add_argument("-o", "--output", help="record file (default OUT_DIR/records.mtcr)")

    p = sub.add_parser("search", parents=[common], help="hardware-constrained architecture search")
    p.add_argument("records")
    p.add_argument("--initial", help="genome file for the starting parent")
    p.add_argument("--stop-after", type=int, help="stop once this generation is done (checkpoint kept)")

    p = sub.add_parser("train", parents=[common], help="train one architecture")
    p.add_argument("records")
    p.add_argument("--genome")
    p.add_argument("--paper-arch", action="store_true", help="use the reference three-block architecture")
    p.add_argument("--epochs", type=int, help=f"max epochs (default {RETRAIN_EPOCHS}, or [train] max_epochs)")

    p = sub.add_parser("eval", parents=[common], help="score a model file on records")
    p.add_argument("model")
    p.add_argument("records")

    p = sub.add_parser("quantize", parents=[common], help="INT8 post-training quantization + delta report")
    p.add_argument("model")
    p.add_argument("records", help="records used for calibration (and evaluation unless --eval-records)")
    p.add_argument("--eval-records")
    p.add_argument("--calibration", type=int, default=512, help="stratified calibration sample size")
    p.add_argument("--task", help="task name in the delta report")

    p = sub.add_parser("report", parents=[common], help="footprint report for a genome or model")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--paper-arch", action="store_true")
    g.add_argument("--genome")
    g.add_argument("--model")
    p.add_argument("--classes", type=int, default=11, help="classes for --paper-arch (default 11)")
    p.add_argument("--format", choices=("text", "csv"), default="text")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check on random micro-models")
    p.add_argument("--models", type=int, default=20)
    p.add_argument("--step", type=float, default=1e-4)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("MTC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors (2), --help/--version (0)
        return int(exc.code or 0)
    args.argv = argv
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = cfg.search.seed
        cfg.search.seed = args.seed
        if args.workers is not None:
            cfg.search.workers = args.workers
        run = Run(args, cfg)
        COMMANDS[args.command](args, run)
        run.finish()
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = exit_code_for(exc)
        if code == 1:
            log.exception("internal error")
        print(f"error: {exc}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
