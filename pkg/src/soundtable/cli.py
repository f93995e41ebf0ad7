"""Command-line experiment harness.

Subcommands: gen-teachers, run, evaluate, analyze, gen-transfer-lump.
A batch run sweeps variant x seed cells into per-cell directories with the
run config, episode log, evaluation snapshots, interest-region exports, and
(optionally) a full memory dump; completed cells are skipped on rerun and
an aggregate table is rebuilt from the per-cell results.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

from .config import (ExperimentConfig, load_config, save_config)
from .demos import generate_demo_files, load_demos, save_demos
from .evaluation import (action_length_table, evaluate, learning_procedure_usage,
                         procedure_usage_table, strategy_task_counts)
from .learner import (PHYS_ACTION_TEACHERS, SIM_ACTION_TEACHERS, Learner,
                      build_teachers)
from .memory import EpisodicMemory, ProcedureRecord, dump_procedures, load_procedures
from .outcomes import sample_testbench
from .strategies import load_transfer_lump

DONE_MARKER = "done.txt"


def teacher_names(profile: str) -> list[str]:
    layout = PHYS_ACTION_TEACHERS if profile == "physical" else SIM_ACTION_TEACHERS
    return sorted(layout)


def ensure_teachers(cfg: ExperimentConfig, directory) -> dict:
    """Load the profile's demo files, generating them first if absent."""
    directory = Path(directory)
    names = teacher_names(cfg.profile)
    if all((directory / f"{name}.jsonl").exists() for name in names):
        return load_demos(directory, names)
    demos = generate_demo_files(cfg.profile, cfg.build_arm(), cfg.dmp.build(),
                                cfg.table.build(), cfg.build_spaces(), cfg.teacher_seed)
    save_demos(demos, directory)
    return demos


def _write_csv(path, rows: list[dict]) -> None:
    path = Path(path)
    if not rows:
        path.write_text("")
        return
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def cell_name(variant: str, seed: int) -> str:
    return f"{variant}_seed{seed}"


def run_cell(cfg: ExperimentConfig, demos: dict, out_dir,
             dump_memory: bool = False, quiet: bool = False) -> dict:
    """One (variant, seed) run: logs, snapshots, and an aggregate row."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "config.yaml")
    teachers = build_teachers(cfg, demos)
    transfer = load_transfer_lump(cfg.transfer_lump) if cfg.transfer_lump else None
    learner = Learner(cfg, teachers, transfer=transfer)
    spaces = cfg.build_spaces()
    bench = sample_testbench(spaces, cfg.testbench_per_space, cfg.testbench_seed)

    snapshots: list[dict] = []
    region_rows: list[dict] = []

    def on_eval(l: Learner) -> None:
        snap = evaluate(l.memory, bench, spaces, d_thres=cfg.learner.d_thres,
                        iteration=l.iteration)
        snapshots.append(snap.row())
        for row in l.interest.export_rows():
            row = dict(row, iteration=l.iteration,
                       lower=json.dumps(row["lower"]), upper=json.dumps(row["upper"]))
            region_rows.append(row)
        if not quiet:
            print(f"  [{cfg.variant} seed {cfg.seed}] iteration {l.iteration}: "
                  f"global error {snap.global_error:.4f}", flush=True)

    started = time.perf_counter()
    learner.run(on_eval=on_eval)
    runtime = time.perf_counter() - started

    with open(out_dir / "episodes.jsonl", "w") as fh:
        for row in learner.episode_rows:
            fh.write(json.dumps(row) + "\n")
    _write_csv(out_dir / "snapshots.csv", snapshots)
    _write_csv(out_dir / "regions.csv", region_rows)
    dump_procedures(learner.memory.own_procedure_records(), out_dir / "procedures.jsonl")
    if dump_memory:
        learner.memory.dump(out_dir / "memory.jsonl")

    final = snapshots[-1]
    row = {"variant": cfg.variant, "seed": cfg.seed, "profile": cfg.profile,
           "iterations": learner.iteration, "runtime_s": round(runtime, 2)}
    row.update({k: v for k, v in final.items() if k != "iteration"})
    (out_dir / DONE_MARKER).write_text(json.dumps(row) + "\n")
    return row


def batch_run(out_dir, base_cfg: ExperimentConfig, variants: list[str],
              seeds: list[int], teachers_dir=None, dump_memory: bool = False,
              quiet: bool = False) -> list[dict]:
    """Sweep variant x seed cells, skipping the ones already finished."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    teachers_dir = Path(teachers_dir) if teachers_dir else out_dir / f"teachers-{base_cfg.profile}"
    demos = ensure_teachers(base_cfg, teachers_dir)
    rows = []
    for variant in variants:
        for seed in seeds:
            cell_dir = out_dir / cell_name(variant, seed)
            marker = cell_dir / DONE_MARKER
            if marker.exists():
                rows.append(json.loads(marker.read_text()))
                if not quiet:
                    print(f"  [{variant} seed {seed}] already complete, skipping",
                          flush=True)
                continue
            lump = base_cfg.transfer_lump if variant == "SGIM-TL" else None
            cfg = dataclasses.replace(base_cfg, variant=variant, seed=seed,
                                      transfer_lump=lump)
            rows.append(run_cell(cfg, demos, cell_dir, dump_memory=dump_memory,
                                 quiet=quiet))
    _write_csv(out_dir / "aggregate.csv", collect_aggregate(out_dir))
    return rows


def collect_aggregate(out_dir) -> list[dict]:
    """Aggregate rows of every finished cell under a batch directory."""
    rows = []
    for marker in sorted(Path(out_dir).glob(f"*/{DONE_MARKER}")):
        rows.append(json.loads(marker.read_text()))
    return rows


def load_cell_memory(cell_dir) -> tuple[ExperimentConfig, EpisodicMemory]:
    cell_dir = Path(cell_dir)
    cfg = load_config(cell_dir / "config.yaml")
    memory = EpisodicMemory(cfg.build_spaces(), gamma=cfg.learner.gamma,
                            max_sequence_length=cfg.learner.max_sequence_length,
                            knn=cfg.learner.knn,
                            transfer_length_default=cfg.learner.transfer_length_default)
    memory.load(cell_dir / "memory.jsonl")
    return cfg, memory


def export_testbench(bench: dict, spaces: dict, path) -> None:
    rows = []
    for sid in sorted(bench):
        for values in bench[sid]:
            rows.append({"space": spaces[sid].name,
                         "coordinates": json.dumps([float(v) for v in values])})
    _write_csv(path, rows)


def analyze_cell(cell_dir, out_dir=None) -> dict[str, list[dict]]:
    """Post-hoc tables for one finished cell (requires its memory dump)."""
    cell_dir = Path(cell_dir)
    out_dir = Path(out_dir) if out_dir else cell_dir
    cfg, memory = load_cell_memory(cell_dir)
    spaces = cfg.build_spaces()
    bench = sample_testbench(spaces, cfg.testbench_per_space, cfg.testbench_seed)
    export_testbench(bench, spaces, out_dir / "testbench.csv")
    episode_rows = [json.loads(line)
                    for line in open(cell_dir / "episodes.jsonl") if line.strip()]
    tables = {
        "procedure_usage": procedure_usage_table(memory, bench, spaces,
                                                 cfg.learner.resolve_depth),
        "action_lengths": action_length_table(memory, bench, spaces,
                                              cfg.learner.resolve_depth),
        "strategy_task": strategy_task_counts(episode_rows),
        "learning_procedure_usage": learning_procedure_usage(episode_rows),
    }
    for name, rows in tables.items():
        _write_csv(out_dir / f"{name}.csv", rows)
    return tables


def make_transfer_lump(cell_dir, out_path) -> int:
    """Strip a finished run's procedure records into a transfer lump.

    Realized lengths are dropped: receivers only get decomposition/effect
    pairs, never actions or costs.
    """
    records = load_procedures(Path(cell_dir) / "procedures.jsonl")
    lump = [ProcedureRecord(procedure=r.procedure, reached=r.reached, length=None)
            for r in records]
    dump_procedures(lump, out_path)
    return len(lump)


def _parse_seeds(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip() != ""]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="soundtable",
                                     description="interactive-table learning harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_teach = sub.add_parser("gen-teachers", help="generate demo repertoires")
    p_teach.add_argument("--profile", default="simulation")
    p_teach.add_argument("--out", required=True)
    p_teach.add_argument("--seed", type=int, default=None)

    p_run = sub.add_parser("run", help="run a batch of (variant, seed) cells")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--config", default=None, help="base config file")
    p_run.add_argument("--profile", default=None)
    p_run.add_argument("--variants", default=None, help="comma-separated list")
    p_run.add_argument("--seeds", default="0", help="comma-separated list")
    p_run.add_argument("--iterations", type=int, default=None)
    p_run.add_argument("--teachers", default=None, help="demo directory")
    p_run.add_argument("--lump", default=None, help="transfer lump for SGIM-TL")
    p_run.add_argument("--dump-memory", action="store_true")
    p_run.add_argument("--quiet", action="store_true")

    p_eval = sub.add_parser("evaluate", help="re-evaluate a finished cell")
    p_eval.add_argument("--cell", required=True)

    p_ana = sub.add_parser("analyze", help="analysis tables for a finished cell")
    p_ana.add_argument("--cell", required=True)
    p_ana.add_argument("--out", default=None)

    p_lump = sub.add_parser("gen-transfer-lump",
                            help="extract a transfer lump from a finished cell")
    p_lump.add_argument("--cell", required=True)
    p_lump.add_argument("--out", required=True)

    args = parser.parse_args(argv)

    if args.command == "gen-teachers":
        cfg = ExperimentConfig(profile=args.profile)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, teacher_seed=args.seed)
        demos = generate_demo_files(cfg.profile, cfg.build_arm(), cfg.dmp.build(),
                                    cfg.table.build(), cfg.build_spaces(),
                                    cfg.teacher_seed)
        save_demos(demos, args.out)
        for name, records in sorted(demos.items()):
            print(f"{name}: {len(records)} demos")
        return 0

    if args.command == "run":
        if args.config:
            base = load_config(args.config)
        else:
            base = ExperimentConfig()
        updates = {}
        if args.profile:
            updates["profile"] = args.profile
        if args.iterations is not None:
            updates["iterations"] = args.iterations
        if args.lump:
            updates["transfer_lump"] = args.lump
        variants = (args.variants.split(",") if args.variants else [base.variant])
        if updates:
            base = dataclasses.replace(base, **updates)
        rows = batch_run(args.out, base, variants, _parse_seeds(args.seeds),
                         teachers_dir=args.teachers, dump_memory=args.dump_memory,
                         quiet=args.quiet)
        print(f"{len(rows)} cells complete; aggregate at {Path(args.out) / 'aggregate.csv'}")
        return 0

    if args.command == "evaluate":
        cfg, memory = load_cell_memory(args.cell)
        spaces = cfg.build_spaces()
        bench = sample_testbench(spaces, cfg.testbench_per_space, cfg.testbench_seed)
        snap = evaluate(memory, bench, spaces, d_thres=cfg.learner.d_thres)
        print(json.dumps(snap.row(), indent=2))
        return 0

    if args.command == "analyze":
        tables = analyze_cell(args.cell, args.out)
        for name, rows in sorted(tables.items()):
            print(f"{name}: {len(rows)} rows")
        return 0

    if args.command == "gen-transfer-lump":
        count = make_transfer_lump(args.cell, args.out)
        print(f"wrote {count} procedure records to {args.out}")
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
