"""Text and CSV renderings of cost reports, metrics and genomes."""

from __future__ import annotations

import csv
import io

from tinytc.arch.costs import CostReport, cost_report
from tinytc.arch.genome import INPUT_LENGTH, ArchGenome, parse_genome
from tinytc.io.model_file import atomic_write
from tinytc.nn.metrics import Metrics

COST_FIELDS = ("row", "kind", "channels", "length", "elements", "params", "flops",
               "flash_f32", "flash_int8", "ram_f32", "ram_int8")


def _cost_rows(report: CostReport) -> list[dict]:
    rows = [{"row": "input", "kind": "input", "channels": 1, "length": report.input_elements,
             "elements": report.input_elements, "params": 0, "flops": 0}]
    for lc in report.per_layer:
        rows.append({"row": lc.name, "kind": lc.kind, "channels": lc.channels, "length": lc.length,
                     "elements": lc.elements, "params": lc.params, "flops": lc.flops})
    for r in rows:
        r.update(flash_f32=4 * r["params"], flash_int8=r["params"],
                 ram_f32=4 * r["elements"], ram_int8=r["elements"])
    rows.append({"row": "total", "kind": "", "channels": "", "length": "",
                 "elements": report.max_tensor, "params": report.params, "flops": report.flops,
                 "flash_f32": report.params_flash_bytes_f32, "flash_int8": report.params_flash_bytes_int8,
                 "ram_f32": report.max_tensor_ram_bytes_f32, "ram_int8": report.max_tensor_ram_bytes_int8})
    return rows


def _kb(n: int) -> str:
    return f"{n / 1000:.1f}KB"


def emit_cost_report(genome: ArchGenome, fmt: str = "text", input_len: int = INPUT_LENGTH) -> str:
    """Per-layer and total footprint of ``genome``.

    The CSV ends with a ``total`` row: params, FLOPs and flash are sums, while
    elements and RAM are the peak over all rows (the max tensor).
    """
    report = cost_report(genome, input_len)
    rows = _cost_rows(report)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=COST_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"format must be 'text' or 'csv', got {fmt!r}")
    out = [f"{'layer':<16}{'kind':<12}{'shape':>12}{'params':>10}{'flops':>12}"]
    for r in rows[:-1]:
        shape = f"{r['channels']}x{r['length']}"
        out.append(f"{r['row']:<16}{r['kind']:<12}{shape:>12}{r['params']:>10}{r['flops']:>12}")
    out.append("")
    out.append(f"params:     {report.params} ({report.params / 1000:.2f}K; "
               f"flash {_kb(report.params_flash_bytes_f32)} f32, {_kb(report.params_flash_bytes_int8)} int8)")
    out.append(f"max tensor: {report.max_tensor} ({report.max_tensor / 1000:.2f}K; "
               f"RAM {_kb(report.max_tensor_ram_bytes_f32)} f32, {_kb(report.max_tensor_ram_bytes_int8)} int8)")
    out.append(f"flops:      {report.flops} ({report.flops / 1e6:.2f}M)")
    return "\n".join(out) + "\n"


def parse_cost_csv(text: str) -> dict[str, int]:
    """Totals from a cost CSV, as ``{"params", "max_tensor", "flops"}``."""
    for row in csv.DictReader(io.StringIO(text)):
        if row["row"] == "total":
            return {"params": int(row["params"]), "max_tensor": int(row["elements"]), "flops": int(row["flops"])}
    raise ValueError("cost CSV has no total row")


def metrics_csv(m: Metrics) -> str:
    lines = ["metric,value", f"accuracy,{m.accuracy:.6f}", f"macro_f1,{m.macro_f1:.6f}"]
    lines += [f"f1_class{c},{v:.6f}" for c, v in enumerate(m.per_class_f1)]
    return "\n".join(lines) + "\n"


def confusion_csv(m: Metrics, names: list[str] | None = None) -> str:
    k = len(m.confusion)
    names = names or [str(c) for c in range(k)]
    lines = ["true\\pred," + ",".join(names)]
    lines += [names[i] + "," + ",".join(str(int(v)) for v in m.confusion[i]) for i in range(k)]
    return "\n".join(lines) + "\n"


def write_genome(path, genome: ArchGenome) -> int:
    return atomic_write(path, genome.to_text().encode())


def read_genome(path) -> ArchGenome:
    with open(path, encoding="utf-8") as fh:
        return parse_genome(fh.read())
