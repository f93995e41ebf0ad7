"""Render figures from the experiment harness's CSV outputs.

Four plot kinds cover the standard analyses: per-variant learning curves
from evaluation snapshots, stacked strategy/task choice evolution, annotated
decomposition-usage heatmaps, and action-length histograms.  Inputs are the
documented CSV schemas only; rendering never mutates them and re-rendering
is idempotent.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

PLOT_KINDS = ("curve", "stacked-evolution", "heatmap", "histogram")


class SchemaError(ValueError):
    """A CSV input does not match the documented schema."""


class NoDataError(ValueError):
    """A CSV input parsed but contained no rows to plot."""


@dataclass
class PlotSpec:
    kind: str
    inputs: list[str]
    output: str
    column: str = "global_error"  # curve metric
    group_by: str = "strategy"    # stacked-evolution series
    title: str = ""
    labels: dict[str, str] = field(default_factory=dict)  # input path -> series label

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}, expected one of {PLOT_KINDS}")
        if not self.inputs:
            raise ValueError("a plot spec needs at least one input CSV")


@dataclass
class RenderResult:
    output: str
    kind: str
    # heatmaps expose their cell annotations so downstream checks can
    # compare them against the source tables
    annotations: dict[tuple[str, str], float] = field(default_factory=dict)


def read_rows(path, required: set[str]) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    with open(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise NoDataError(f"{path}: no data (empty file)")
        missing = required - set(reader.fieldnames)
        if missing:
            raise SchemaError(f"{path}: missing column(s) {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise NoDataError(f"{path}: no data rows")
    return rows


def _save(fig, output) -> None:
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, dpi=140, bbox_inches="tight")
    plt.close(fig)


def render_curve(spec: PlotSpec) -> RenderResult:
    """Median metric vs iteration, one series per input group.

    Inputs are snapshot CSVs; several files under the same label (for
    example one per seed) are aggregated by median at each iteration.
    """
    series: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for path in spec.inputs:
        rows = read_rows(path, {"iteration", spec.column})
        label = spec.labels.get(str(path), Path(path).parent.name)
        for row in rows:
            series[label][int(row["iteration"])].append(float(row[spec.column]))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label in sorted(series):
        points = sorted(series[label].items())
        xs = [it for it, _ in points]
        ys = [float(np.median(vals)) for _, vals in points]
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel(spec.column)
    ax.set_title(spec.title or spec.column)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, spec.output)
    return RenderResult(output=spec.output, kind=spec.kind)


def render_stacked_evolution(spec: PlotSpec) -> RenderResult:
    """Stacked per-window counts of episode choices over the run."""
    rows = []
    for path in spec.inputs:
        rows.extend(read_rows(path, {"window_start", "count", spec.group_by}))
    windows = sorted({int(r["window_start"]) for r in rows})
    groups = sorted({r[spec.group_by] for r in rows})
    table = np.zeros((len(groups), len(windows)))
    w_index = {w: i for i, w in enumerate(windows)}
    g_index = {g: i for i, g in enumerate(groups)}
    for row in rows:
        table[g_index[row[spec.group_by]], w_index[int(row["window_start"])]] += \
            float(row["count"])
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.stackplot(windows, table, labels=groups)
    ax.set_xlabel("iteration window")
    ax.set_ylabel("episodes")
    ax.set_title(spec.title or f"choice evolution by {spec.group_by}")
    ax.legend(fontsize=7, ncol=2)
    _save(fig, spec.output)
    return RenderResult(output=spec.output, kind=spec.kind)


def render_heatmap(spec: PlotSpec) -> RenderResult:
    """Decomposition-usage shares, goal subspaces x decomposition spaces,
    every cell annotated with its percentage."""
    rows = []
    for path in spec.inputs:
        rows.extend(read_rows(path, {"goal_space", "used", "share_pct"}))
    goal_spaces = sorted({r["goal_space"] for r in rows})
    used = sorted({r["used"] for r in rows})
    grid = np.zeros((len(goal_spaces), len(used)))
    for row in rows:
        grid[goal_spaces.index(row["goal_space"]), used.index(row["used"])] = \
            float(row["share_pct"])
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(used), 1.0 + 0.6 * len(goal_spaces)))
    im = ax.imshow(grid, cmap="viridis", vmin=0.0, vmax=100.0, aspect="auto")
    annotations = {}
    for i, gs in enumerate(goal_spaces):
        for j, u in enumerate(used):
            annotations[(gs, u)] = float(grid[i, j])
            ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center", fontsize=7,
                    color="white" if grid[i, j] < 60 else "black")
    ax.set_xticks(range(len(used)), used, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(len(goal_spaces)), goal_spaces, fontsize=8)
    fig.colorbar(im, ax=ax, label="% of resolutions")
    ax.set_title(spec.title or "decomposition usage")
    _save(fig, spec.output)
    return RenderResult(output=spec.output, kind=spec.kind, annotations=annotations)


def render_histogram(spec: PlotSpec) -> RenderResult:
    """Action-length shares per goal subspace as grouped bars."""
    rows = []
    for path in spec.inputs:
        rows.extend(read_rows(path, {"goal_space", "length", "share_pct"}))
    goal_spaces = sorted({r["goal_space"] for r in rows})
    lengths = sorted({int(r["length"]) for r in rows})
    shares = np.zeros((len(goal_spaces), len(lengths)))
    for row in rows:
        shares[goal_spaces.index(row["goal_space"]),
               lengths.index(int(row["length"]))] += float(row["share_pct"])
    width = 0.8 / len(goal_spaces)
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = np.arange(len(lengths))
    for i, gs in enumerate(goal_spaces):
        ax.bar(xs + i * width, shares[i], width=width, label=gs)
    ax.set_xticks(xs + 0.4 - width / 2, [str(n) for n in lengths])
    ax.set_xlabel("primitives per resolved action")
    ax.set_ylabel("% of resolutions")
    ax.set_title(spec.title or "action lengths")
    ax.legend(fontsize=8)
    _save(fig, spec.output)
    return RenderResult(output=spec.output, kind=spec.kind)


_RENDERERS = {
    "curve": render_curve,
    "stacked-evolution": render_stacked_evolution,
    "heatmap": render_heatmap,
    "histogram": render_histogram,
}


def render(spec: PlotSpec) -> RenderResult:
    return _RENDERERS[spec.kind](spec)


def batch_dir_specs(batch_dir, out_dir) -> list[PlotSpec]:
    """Default plot set over a finished batch directory.

    Expects the harness layout: per-cell snapshot files for the curves and
    analysis CSVs (written by the analyze step) in at least one cell.
    """
    batch_dir = Path(batch_dir)
    out_dir = Path(out_dir)
    specs = []
    snapshot_files = sorted(batch_dir.glob("*_seed*/snapshots.csv"))
    if snapshot_files:
        labels = {str(p): p.parent.name.rsplit("_seed", 1)[0] for p in snapshot_files}
        specs.append(PlotSpec(kind="curve", inputs=[str(p) for p in snapshot_files],
                              output=str(out_dir / "learning_curves.png"),
                              labels=labels, title="median evaluation error"))
    for name, kind in (("procedure_usage", "heatmap"),
                       ("action_lengths", "histogram"),
                       ("strategy_task", "stacked-evolution")):
        files = sorted(batch_dir.glob(f"*_seed*/{name}.csv"))
        if files:
            specs.append(PlotSpec(kind=kind, inputs=[str(files[0])],
                                  output=str(out_dir / f"{name}.png")))
    return specs


def load_specs(path) -> list[PlotSpec]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list):
        raise ValueError(f"{path}: expected a list of plot specs")
    return [PlotSpec(**entry) for entry in data]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="soundtable-plots",
                                     description="render experiment CSVs to images")
    parser.add_argument("--spec", help="JSON file with a list of plot specs")
    parser.add_argument("--kind", choices=PLOT_KINDS)
    parser.add_argument("--inputs", nargs="+", default=[])
    parser.add_argument("--output")
    parser.add_argument("--column", default="global_error")
    parser.add_argument("--group-by", default="strategy")
    parser.add_argument("--batch-dir", help="render the default set for a batch")
    parser.add_argument("--out-dir", default="plots-out")
    args = parser.parse_args(argv)

    if args.spec:
        specs = load_specs(args.spec)
    elif args.batch_dir:
        specs = batch_dir_specs(args.batch_dir, args.out_dir)
        if not specs:
            print(f"no renderable CSVs under {args.batch_dir}", file=sys.stderr)
            return 1
    elif args.kind and args.output:
        specs = [PlotSpec(kind=args.kind, inputs=args.inputs, output=args.output,
                          column=args.column, group_by=args.group_by)]
    else:
        parser.error("provide --spec, --batch-dir, or --kind with --inputs/--output")
        return 2

    for spec in specs:
        result = render(spec)
        print(f"wrote {result.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
