from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from tinytc.errors import EmptyDataset
from tinytc.nn.metrics import Metrics, classification_metrics

CSV_FIELDS = ("task", "float_acc", "float_f1", "int8_acc", "int8_f1", "delta_acc", "delta_f1")


@dataclass
class DeltaReport:
    task: str
    float_metrics: Metrics
    int8_metrics: Metrics
    agreement: float

    @property
    def delta_acc(self) -> float:
        return self.int8_metrics.accuracy - self.float_metrics.accuracy

    @property
    def delta_f1(self) -> float:
        return self.int8_metrics.macro_f1 - self.float_metrics.macro_f1

    def row(self) -> dict:
        return {
            "task": self.task,
            "float_acc": self.float_metrics.accuracy,
            "float_f1": self.float_metrics.macro_f1,
            "int8_acc": self.int8_metrics.accuracy,
            "int8_f1": self.int8_metrics.macro_f1,
            "delta_acc": self.delta_acc,
            "delta_f1": self.delta_f1,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in self.row().items()})
        return buf.getvalue()

    def per_class_csv(self) -> str:
        lines = ["class,float_f1,int8_f1,delta_f1"]
        f, q = self.float_metrics.per_class_f1, self.int8_metrics.per_class_f1
        n = max(len(f), len(q))
        f, q = np.pad(f, (0, n - len(f))), np.pad(q, (0, n - len(q)))
        for c in range(n):
            lines.append(f"{c},{f[c]:.6f},{q[c]:.6f},{q[c] - f[c]:.6f}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        r = self.row()
        head = f"{'task':<12}{'float acc':>10}{'float F1':>10}{'int8 acc':>10}{'int8 F1':>10}{'d acc':>9}{'d F1':>9}"
        body = (f"{r['task']:<12}{100 * r['float_acc']:>10.2f}{100 * r['float_f1']:>10.2f}"
                f"{100 * r['int8_acc']:>10.2f}{100 * r['int8_f1']:>10.2f}"
                f"{100 * r['delta_acc']:>+9.2f}{100 * r['delta_f1']:>+9.2f}")
        return f"{head}\n{body}\nargmax agreement: {100 * self.agreement:.2f}%\n"


def compare(model, qmodel, X, y, task: str = "task", batch_size: int = 512) -> DeltaReport:
    """Score the float and integer paths on the same labeled data."""
    X, y = np.asarray(X), np.asarray(y)
    if len(X) == 0:
        raise EmptyDataset("cannot compare on an empty dataset")
    n_classes = getattr(model, "n_classes", None)
    pf = model.predict(X, batch_size)
    pq = qmodel.predict(X, batch_size)
    return DeltaReport(
        task=task,
        float_metrics=classification_metrics(y, pf, n_classes),
        int8_metrics=classification_metrics(y, pq, n_classes),
        agreement=float(np.mean(pf == pq)),
    )
