"""Result rows, CSV emission and static SVG plots."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_HEADER = ("sweep_value", "baseline", "metric", "value", "stderr", "n_dropped")
METRICS = ("avg_sum_rate", "sensing_sinr", "p_detect_theory", "p_detect_conditional", "p_detect_empirical",
           "p_false_alarm_empirical", "iterations")


@dataclass(frozen=True)
class ResultRow:
    sweep_value: float
    baseline: str
    metric: str
    value: float
    stderr: float = 0.0
    n_dropped: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not self.stderr >= 0:
            raise ValueError("stderr must be nonnegative")
        if self.metric.startswith("p_") and math.isfinite(self.value) and not 0 <= self.value <= 1:
            raise ValueError(f"{self.metric} must lie in [0, 1]")
        if self.n_dropped < 0:
            raise ValueError("n_dropped must be nonnegative")

    def sort_key(self):
        return (self.sweep_value, self.baseline, METRICS.index(self.metric))


def aggregate(sweep_value: float, baseline: str, metric: str, samples, n_total: int) -> ResultRow:
    """Mean and standard error over the finite samples; the rest count as dropped."""
    x = np.asarray([s for s in samples if s is not None and math.isfinite(s)], dtype=float)
    n = x.size
    if n == 0:
        return ResultRow(sweep_value, baseline, metric, float("nan"), 0.0, n_total)
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return ResultRow(sweep_value, baseline, metric, float(np.mean(x)), se, n_total - n)


def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else "nan"


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(rows, key=ResultRow.sort_key):
        w.writerow([_fmt(r.sweep_value), r.baseline, r.metric, _fmt(r.value), _fmt(r.stderr), r.n_dropped])
    return buf.getvalue()


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [ResultRow(float(d["sweep_value"]), d["baseline"], d["metric"], float(d["value"]),
                          float(d["stderr"]), int(d["n_dropped"])) for d in reader]


def write_svg(rows, metric: str, xlabel: str, path) -> bool:
    """One polyline per baseline; returns False when matplotlib is unavailable."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return False
    sel = sorted((r for r in rows if r.metric == metric), key=ResultRow.sort_key)
    if not sel:
        return False
    matplotlib.rcParams["svg.hashsalt"] = "uplink-isac"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for b in sorted({r.baseline for r in sel}):
        pts = [(r.sweep_value, r.value) for r in sel if r.baseline == b]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=b)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(metric)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return True


def emit_outputs(rows, name: str, outdir, xlabel: str = "sweep_value", svg: bool = True) -> list[Path]:
    """Write <name>.csv plus one <name>_<metric>.svg per metric present."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    written = []
    path = out / f"{name}.csv"
    path.write_text(rows_to_csv(rows))
    written.append(path)
    if svg:
        for metric in sorted({r.metric for r in rows}, key=METRICS.index):
            p = out / f"{name}_{metric}.svg"
            if write_svg(rows, metric, xlabel, p):
                written.append(p)
    return written
