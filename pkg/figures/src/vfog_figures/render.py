"""Render benchmark CSVs into per-instance convergence panels.

Input files follow the harness schema

    instance_id,seed,algorithm,k,oracle_calls,epoch,residual_sq,fb_residual_sq,wallclock_ns

with one row per residual probe.  Each instance CSV becomes one figure:
mean squared residual against epochs, log-scaled y axis, one curve per
algorithm, averaged over seeds (probes align on whole-epoch buckets).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

REQUIRED_COLUMNS = ["instance_id", "seed", "algorithm", "k", "oracle_calls",
                    "epoch", "residual_sq", "fb_residual_sq", "wallclock_ns"]

# canonical legend names and curve order
LEGEND_ORDER = ["og", "vrfrbs", "vreg", "vfog-sgd", "vfog-svrg", "vfog-saga",
                "vfog-sarah"]
LEGEND_NAMES = {
    "og": "OG", "vrfrbs": "VrFRBS", "vreg": "VrEG", "vfog-sgd": "VFOG-Sgd",
    "vfog-svrg": "VFOG-Svrg", "vfog-saga": "VFOG-Saga",
    "vfog-sarah": "VFOG-Sarah", "vfog-exact": "VFOG-Exact",
}


class SchemaError(ValueError):
    """The CSV does not carry the expected columns."""


@dataclass
class Curve:
    algorithm: str
    label: str
    epochs: list[float]
    values: list[float]


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path.name}: missing column(s) {', '.join(missing)}")
        return list(reader)


def _bucket(epoch: float) -> int:
    return math.floor(epoch + 1e-9)


def extract_curves(rows: list[dict], mean_of: str = "residual_sq") -> list[Curve]:
    """Seed-averaged curves per algorithm, grouped on whole-epoch buckets.

    ``mean_of`` selects the averaged quantity: the squared residual (default)
    or its square root (``"residual"``).
    """
    if mean_of not in ("residual_sq", "residual"):
        raise ValueError("mean_of must be 'residual_sq' or 'residual'")
    acc: dict[str, dict[int, list[float]]] = {}
    epoch_acc: dict[str, dict[int, list[float]]] = {}
    for row in rows:
        algo = row["algorithm"]
        val = float(row["residual_sq"])
        if mean_of == "residual":
            val = math.sqrt(val)
        b = _bucket(float(row["epoch"]))
        acc.setdefault(algo, {}).setdefault(b, []).append(val)
        epoch_acc.setdefault(algo, {}).setdefault(b, []).append(float(row["epoch"]))
    order = {name: i for i, name in enumerate(LEGEND_ORDER)}
    curves = []
    for algo in sorted(acc, key=lambda a: (order.get(a, len(order)), a)):
        buckets = sorted(acc[algo])
        curves.append(Curve(
            algorithm=algo,
            label=LEGEND_NAMES.get(algo, algo),
            epochs=[sum(epoch_acc[algo][b]) / len(epoch_acc[algo][b]) for b in buckets],
            values=[sum(acc[algo][b]) / len(acc[algo][b]) for b in buckets],
        ))
    return curves


def recompute_curves_independently(rows: list[dict],
                                   mean_of: str = "residual_sq") -> dict:
    """Second, structurally different pass over the same rows (self-test).

    Accumulates running sums per (algorithm, bucket) in one sweep instead of
    collecting lists; used to cross-check the plotted values.
    """
    sums: dict[tuple, float] = {}
    counts: dict[tuple, int] = {}
    for row in rows:
        v = float(row["residual_sq"])
        if mean_of == "residual":
            v = math.sqrt(v)
        key = (row["algorithm"], _bucket(float(row["epoch"])))
        sums[key] = sums.get(key, 0.0) + v
        counts[key] = counts.get(key, 0) + 1
    return {key: sums[key] / counts[key] for key in sums}


def self_test(rows: list[dict], curves: list[Curve],
              mean_of: str = "residual_sq", tol: float = 1e-12) -> float:
    """Assert plotted means equal the independent recomputation; returns the
    worst relative deviation."""
    ref = recompute_curves_independently(rows, mean_of)
    worst = 0.0
    for curve in curves:
        buckets = sorted(b for (a, b) in ref if a == curve.algorithm)
        assert len(buckets) == len(curve.values)
        for b, val in zip(buckets, curve.values):
            dev = abs(val - ref[(curve.algorithm, b)]) / (1.0 + abs(val))
            worst = max(worst, dev)
    if worst > tol:
        raise AssertionError(f"plotted means deviate from recomputation: {worst:.3e}")
    return worst


def render_file(path: Path, out_dir: Path, fmt: str = "png",
                mean_of: str = "residual_sq", run_self_test: bool = False):
    rows = read_rows(path)
    if not rows:
        raise SchemaError(f"{path.name}: no data rows")
    curves = extract_curves(rows, mean_of)
    if run_self_test:
        self_test(rows, curves, mean_of)
    instance = rows[0]["instance_id"]
    fig, ax = plt.subplots(figsize=(7.0, 4.8))
    for curve in curves:
        ax.semilogy(curve.epochs, curve.values, label=curve.label, linewidth=1.4)
    ax.set_xlabel("epochs")
    ax.set_ylabel("mean squared residual" if mean_of == "residual_sq"
                  else "mean residual")
    ax.set_title(instance)
    ax.grid(True, which="both", alpha=0.25)
    ax.legend(loc="best", fontsize=9)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{instance}.{fmt}"
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path, curves


def render(csv_dir: Path, out_dir: Path, fmt: str = "png",
           mean_of: str = "residual_sq", run_self_test: bool = False) -> list[Path]:
    """Render every instance CSV in ``csv_dir`` (``*_mean.csv`` aggregates are
    skipped).  Raises when the directory holds no instance CSVs."""
    csv_dir = Path(csv_dir)
    files = sorted(p for p in csv_dir.glob("*.csv")
                   if not p.name.endswith("_mean.csv"))
    if not files:
        raise FileNotFoundError(f"no instance CSVs found in {csv_dir}")
    written = []
    for path in files:
        out_path, _ = render_file(path, Path(out_dir), fmt, mean_of, run_self_test)
        written.append(out_path)
    return written
