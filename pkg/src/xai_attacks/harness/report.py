"""Experiment report: JSON document, flat metrics table and plot-data CSVs."""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# fixed column order of metrics.csv; runtimes are deliberately excluded so the
# table is byte-identical across reruns with the same seed
METRIC_COLUMNS = (
    "model", "attack", "tactic", "technique", "hardness", "seed", "status",
    "prediction_agreement", "fe_success", "protected_before", "protected_after",
    "protected_rank_before", "protected_rank_after", "max_other_change",
    "me_spearman", "explanation_changed", "asr",
    "defense", "defense_flagged", "defense_statistic",
)
PLOT_COLUMNS = ("feature", "importance_before", "importance_after")
RANK_COLUMNS = ("feature", "rank", "count_before", "count_after")


def to_jsonable(obj):
    """Recursively convert numpy values and NaN/inf into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


@dataclass
class ExperimentReport:
    config: dict
    seed: int
    dataset: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)
    attacks: list = field(default_factory=list)
    status: str = "complete"
    error: dict = None
    timestamp: str = None
    runtime_s: float = None

    def to_dict(self):
        return to_jsonable({
            "config": self.config,
            "seed": self.seed,
            "dataset": self.dataset,
            "baselines": self.baselines,
            "attacks": self.attacks,
            "status": self.status,
            "error": self.error,
            "timestamp": self.timestamp,
            "runtime_s": self.runtime_s,
        })

    @classmethod
    def from_dict(cls, d):
        return cls(d["config"], d["seed"], d.get("dataset", {}), d.get("baselines", {}), d.get("attacks", []),
                   d.get("status", "complete"), d.get("error"), d.get("timestamp"), d.get("runtime_s"))


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(float(v)) else f"{float(v):.10g}"
    return str(v)


def metrics_rows(report_dict):
    return [[_cell(row.get(c)) for c in METRIC_COLUMNS] for row in report_dict["attacks"]]


def _safe(name):
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in str(name))


def emit_report(report, out_dir):
    """Write report.json, metrics.csv and plotdata/*.csv; return the written paths."""
    out = Path(out_dir)
    doc = report.to_dict() if hasattr(report, "to_dict") else to_jsonable(report)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        written.append(path)
        path = out / "metrics.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRIC_COLUMNS)
            w.writerows(metrics_rows(doc))
        written.append(path)
        plot_dir = out / "plotdata"
        for row in doc["attacks"]:
            plot = row.get("plot") or {}
            stem = f"{_safe(row['model'])}__{_safe(row['attack'])}"
            if plot.get("global"):
                plot_dir.mkdir(exist_ok=True)
                g = plot["global"]
                path = plot_dir / f"{stem}__global.csv"
                with path.open("w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(PLOT_COLUMNS)
                    for name, b, a in zip(g["feature"], g["importance_before"], g["importance_after"]):
                        w.writerow([name, _cell(b), _cell(a)])
                written.append(path)
            if plot.get("rank_frequency"):
                plot_dir.mkdir(exist_ok=True)
                path = plot_dir / f"{stem}__rank_frequency.csv"
                with path.open("w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(RANK_COLUMNS)
                    for rec in plot["rank_frequency"]:
                        w.writerow([rec["feature"], rec["rank"], rec["count_before"], rec["count_after"]])
                written.append(path)
    except OSError as exc:
        raise OSError(f"could not write report under {out}: {exc}") from exc
    return written


def load_report(out_dir):
    return json.loads((Path(out_dir) / "report.json").read_text())
