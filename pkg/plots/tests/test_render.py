import csv
import json
import os
from pathlib import Path

import pytest

from soundtable_plots.render import (NoDataError, PlotSpec, SchemaError,
                                     batch_dir_specs, load_specs, main, render)


def write_csv(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


@pytest.fixture()
def batch_dir(tmp_path):
    """Synthetic batch directory following the harness CSV schemas."""
    root = tmp_path / "batch"
    for variant, err in (("SGIM-PB", 0.1), ("RandomAction", 3.0)):
        for seed in (0, 1):
            cell = root / f"{variant}_seed{seed}"
            write_csv(cell / "snapshots.csv", [
                {"iteration": it, "global_error": err + 0.01 * seed + (0.5 if it == 0 else 0),
                 "memory_size": it * 3, "err_omega0": err, "reach_omega3": 0.5}
                for it in (0, 250, 500)])
    pb_cell = root / "SGIM-PB_seed0"
    write_csv(pb_cell / "procedure_usage.csv", [
        {"goal_space": "omega1", "used": "omega0+omega0", "count": 70, "share_pct": 70.0},
        {"goal_space": "omega1", "used": "none", "count": 30, "share_pct": 30.0},
        {"goal_space": "omega3", "used": "omega1+omega2", "count": 85, "share_pct": 85.0},
        {"goal_space": "omega3", "used": "none", "count": 15, "share_pct": 15.0},
    ])
    write_csv(pb_cell / "action_lengths.csv", [
        {"goal_space": "omega0", "length": 1, "count": 90, "share_pct": 90.0},
        {"goal_space": "omega0", "length": 2, "count": 10, "share_pct": 10.0},
        {"goal_space": "omega1", "length": 2, "count": 80, "share_pct": 80.0},
        {"goal_space": "omega1", "length": 4, "count": 20, "share_pct": 20.0},
    ])
    write_csv(pb_cell / "strategy_task.csv", [
        {"window_start": 0, "strategy": "auton-action", "goal_space": "omega0", "count": 300},
        {"window_start": 0, "strategy": "auton-procedure", "goal_space": "omega3", "count": 100},
        {"window_start": 500, "strategy": "auton-procedure", "goal_space": "omega3", "count": 250},
    ])
    return root


def test_all_four_kinds_render_from_batch(batch_dir, tmp_path):
    out = tmp_path / "figs"
    specs = batch_dir_specs(batch_dir, out)
    kinds = {s.kind for s in specs}
    assert kinds == {"curve", "heatmap", "histogram", "stacked-evolution"}
    for spec in specs:
        result = render(spec)
        assert Path(result.output).exists()
        assert Path(result.output).stat().st_size > 0


def test_heatmap_annotations_match_table(batch_dir, tmp_path):
    table = batch_dir / "SGIM-PB_seed0" / "procedure_usage.csv"
    spec = PlotSpec(kind="heatmap", inputs=[str(table)],
                    output=str(tmp_path / "heat.png"))
    result = render(spec)
    with open(table) as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        assert result.annotations[(row["goal_space"], row["used"])] == \
            float(row["share_pct"])
    # modal cells agree with the table's argmax
    by_space = {}
    for row in rows:
        current = by_space.get(row["goal_space"])
        if current is None or float(row["share_pct"]) > current[1]:
            by_space[row["goal_space"]] = (row["used"], float(row["share_pct"]))
    for space, (used, share) in by_space.items():
        assert result.annotations[(space, used)] == share
        assert all(result.annotations[(space, u)] <= share
                   for s2, u in result.annotations if s2 == space)


def test_curve_groups_by_variant(batch_dir, tmp_path):
    files = sorted(batch_dir.glob("*_seed*/snapshots.csv"))
    labels = {str(p): p.parent.name.rsplit("_seed", 1)[0] for p in files}
    spec = PlotSpec(kind="curve", inputs=[str(p) for p in files],
                    output=str(tmp_path / "curve.png"), labels=labels)
    result = render(spec)
    assert Path(result.output).exists()


def test_missing_column_names_it(tmp_path):
    path = tmp_path / "bad.csv"
    write_csv(path, [{"iteration": 0, "memory_size": 1}])
    spec = PlotSpec(kind="curve", inputs=[str(path)], output=str(tmp_path / "x.png"))
    with pytest.raises(SchemaError, match="global_error"):
        render(spec)


def test_empty_csv_is_a_no_data_error(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    spec = PlotSpec(kind="heatmap", inputs=[str(path)], output=str(tmp_path / "x.png"))
    with pytest.raises(NoDataError):
        render(spec)
    assert not (tmp_path / "x.png").exists()  # no empty image produced


def test_header_only_csv_is_a_no_data_error(tmp_path):
    path = tmp_path / "header.csv"
    path.write_text("goal_space,used,share_pct\n")
    spec = PlotSpec(kind="heatmap", inputs=[str(path)], output=str(tmp_path / "x.png"))
    with pytest.raises(NoDataError):
        render(spec)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError, match="kind"):
        PlotSpec(kind="sparkline", inputs=["a.csv"], output="x.png")


def test_rendering_is_idempotent_and_nonmutating(batch_dir, tmp_path):
    table = batch_dir / "SGIM-PB_seed0" / "action_lengths.csv"
    before = table.read_bytes()
    spec = PlotSpec(kind="histogram", inputs=[str(table)],
                    output=str(tmp_path / "hist.png"))
    render(spec)
    first = (tmp_path / "hist.png").read_bytes()
    render(spec)
    second = (tmp_path / "hist.png").read_bytes()
    assert table.read_bytes() == before
    assert first == second


def test_spec_file_and_cli(batch_dir, tmp_path, capsys):
    spec_path = tmp_path / "specs.json"
    spec_path.write_text(json.dumps([{
        "kind": "histogram",
        "inputs": [str(batch_dir / "SGIM-PB_seed0" / "action_lengths.csv")],
        "output": str(tmp_path / "from_spec.png"),
    }]))
    assert len(load_specs(spec_path)) == 1
    rc = main(["--spec", str(spec_path)])
    assert rc == 0
    assert (tmp_path / "from_spec.png").exists()
    rc = main(["--batch-dir", str(batch_dir), "--out-dir", str(tmp_path / "auto")])
    assert rc == 0
    assert (tmp_path / "auto" / "learning_curves.png").exists()


ACCEPT_DIR = os.environ.get("SOUNDTABLE_ACCEPTANCE_DIR")


@pytest.mark.skipif(not ACCEPT_DIR or not Path(ACCEPT_DIR, "simulation").exists(),
                    reason="no finished acceptance batch to render")
def test_renders_real_batch_without_schema_errors(tmp_path):
    batch = Path(ACCEPT_DIR) / "simulation"
    tables = sorted(batch.glob("*_seed*/procedure_usage.csv"))
    if not tables:
        pytest.skip("batch has no analysis CSVs yet")
    out = tmp_path / "real"
    specs = batch_dir_specs(batch, out)
    assert {s.kind for s in specs} == {"curve", "heatmap", "histogram",
                                       "stacked-evolution"}
    results = {spec.kind: render(spec) for spec in specs}
    for result in results.values():
        assert Path(result.output).exists()
    # the heatmap annotations reproduce the source usage table exactly,
    # modal cells included
    with open(tables[0]) as fh:
        rows = list(csv.DictReader(fh))
    annotations = results["heatmap"].annotations
    modal = {}
    for row in rows:
        assert annotations[(row["goal_space"], row["used"])] == \
            float(row["share_pct"])
        best = modal.get(row["goal_space"])
        if best is None or float(row["share_pct"]) > best[1]:
            modal[row["goal_space"]] = (row["used"], float(row["share_pct"]))
    for space, (used, share) in modal.items():
        assert annotations[(space, used)] == share
