"""Summaries over a directory of finished runs."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .harness import RunRecord
from .network import build_sbnn_topology, ffnn_connection_count, sbnn_connection_count

BIN_EDGES = list(range(10, 101, 10))
PARAMETER_HEADER = ["hidden", "ffnn", "hebbian_ffnn", "sbnn", "sbnn_connections", "sbnn_built_connections"]


class EmptyRunDirectoryError(FileNotFoundError):
    pass


def load_records(run_dir: str | Path) -> list[RunRecord]:
    """Every ``record.json`` below ``run_dir``, sorted by path."""
    paths = sorted(Path(run_dir).rglob("record.json"))
    if not paths:
        raise EmptyRunDirectoryError(f"no run records under {run_dir}")
    return [RunRecord.from_dict(json.loads(p.read_text())) for p in paths]


def working_histogram(percentages) -> dict[int, float]:
    """Fraction of runs per 10% bin, keyed by the bin's upper edge.

    Bins are (0,10], (10,20], ... (90,100]; exactly 0% goes to the first bin.
    """
    pct = list(percentages)
    counts = Counter(max(10, int(math.ceil(p / 10 - 1e-9)) * 10) for p in pct)
    return {edge: counts.get(edge, 0) / len(pct) for edge in BIN_EDGES}


def fitness_stats(records: list[RunRecord]) -> dict[str, float]:
    f = np.array([r.fitness for r in records])
    stats = {
        "runs": len(f),
        "mean": float(f.mean()),
        "median": float(np.median(f)),
        "std": float(f.std()),
        "min": float(f.min()),
        "max": float(f.max()),
    }
    paired = [(r.pre_mean, r.post_mean) for r in records if r.pre_mean is not None]
    if paired:
        boosts = [post_prune_boost(pre, post) for pre, post in paired]
        stats["post_gt_pre"] = sum(post > pre for pre, post in paired) / len(paired)
        stats["median_boost"] = float(np.median(boosts))
    return stats


def post_prune_boost(pre: float, post: float) -> float:
    """Relative improvement of the post-pruning component over the
    pre-pruning one; positive means better after pruning for either sign
    of reward."""
    if pre == 0:
        return math.inf if post > 0 else (0.0 if post == 0 else -math.inf)
    return (post - pre) / abs(pre)


def parameter_table(max_hidden: int = 50, n_inputs: int = 1, n_outputs: int = 1) -> list[list[int]]:
    """Trainable parameter counts per hidden size: a plain feed-forward net
    (one weight per edge), the same net with per-edge ABCD rules, and the
    fully connected self-building net with ABCD rules."""
    rows = []
    for h in range(1, max_hidden + 1):
        c_ffnn = ffnn_connection_count(n_inputs, h, n_outputs)
        c_sbnn = sbnn_connection_count(n_inputs, h, n_outputs)
        built = build_sbnn_topology(n_inputs, h, n_outputs, self_loops=True).n_connections
        rows.append([h, c_ffnn, 4 * c_ffnn, 4 * c_sbnn, c_sbnn, built])
    return rows


@dataclass
class Report:
    histogram: dict[int, float]
    structures: dict[str, int]
    fitness: dict[str, float]
    parameters: list[list[int]]
    files: list[Path]


def _write(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def analysis_report(run_dir: str | Path, out_dir: str | Path | None = None) -> Report:
    """Write the histogram, structure, fitness and parameter CSVs for all runs
    under ``run_dir`` (into ``out_dir``, default ``run_dir``)."""
    records = load_records(run_dir)
    out = Path(out_dir) if out_dir is not None else Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    hist = working_histogram(r.working_pct for r in records)
    structures = dict(sorted(Counter(r.structure for r in records).items()))
    stats = fitness_stats(records)
    params = parameter_table()
    files = [
        _write(out / "report_working_histogram.csv", ["bin_upper_pct", "fraction"], hist.items()),
        _write(out / "report_structures.csv", ["structure", "runs"], structures.items()),
        _write(out / "report_fitness.csv", ["statistic", "value"], stats.items()),
        _write(out / "report_parameters.csv", PARAMETER_HEADER, params),
    ]
    return Report(hist, structures, stats, params, files)
