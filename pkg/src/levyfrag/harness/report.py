"""Suite records and their JSON-lines / CSV serialization."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

SUMMARY_FIELDS = ("suite", "case", "estimate", "stderr", "target", "pass", "inputs", "tol")


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass
class CaseRecord:
    suite: str
    case: str
    inputs: dict
    estimate: float
    stderr: float
    target: float
    tol: dict
    passed: bool
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        rec = {
            "suite": self.suite,
            "case": self.case,
            "inputs": _clean(self.inputs),
            "estimate": _clean(float(self.estimate)),
            "stderr": _clean(float(self.stderr)),
            "target": _clean(float(self.target)),
            "tol": _clean(self.tol),
            "pass": bool(self.passed),
        }
        if self.diagnostics:
            rec["diagnostics"] = _clean(self.diagnostics)
        return json.dumps(rec, sort_keys=False, separators=(", ", ": "))


@dataclass
class SuiteReport:
    suite: str
    records: list
    seed: int
    wall_time: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.records) and all(r.passed for r in self.records)


def emit_report(report: SuiteReport, path, summary_path=None):
    """JSON-lines (one record per case) plus a CSV summary."""
    with open(path, "w") as fh:
        for rec in report.records:
            fh.write(rec.to_json() + "\n")
    if summary_path is None:
        summary_path = str(path).rsplit(".", 1)[0] + ".csv"
    write_summary_csv(report.records, summary_path)
    return summary_path


def write_summary_csv(records, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(SUMMARY_FIELDS)
        for r in records:
            out.writerow([
                r.suite, r.case, repr(float(r.estimate)), repr(float(r.stderr)),
                repr(float(r.target)), int(bool(r.passed)),
                json.dumps(_clean(r.inputs)), json.dumps(_clean(r.tol)),
            ])


def read_summary_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "suite": row["suite"],
                "case": row["case"],
                "estimate": float(row["estimate"]),
                "stderr": float(row["stderr"]),
                "target": float(row["target"]),
                "pass": bool(int(row["pass"])),
                "inputs": json.loads(row["inputs"]),
                "tol": json.loads(row["tol"]),
            })
    return rows
