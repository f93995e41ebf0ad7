"""Evaluation protocol and post-hoc analysis tables.

Evaluation is pure coverage: for every testbench goal, the distance to the
nearest effect ever reached in its subspace (a fixed penalty when none),
averaged per subspace and, unweighted, across subspaces.  The analysis
tables replay the inverse model on the testbench to expose which
decompositions and action lengths it would pick.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from .memory import ColdStartError, EpisodicMemory
from .outcomes import SPACE_NAMES, TOUCH, Outcome, OutcomeSpace

REACH_RADIUS = 0.5


@dataclass
class EvaluationSnapshot:
    iteration: int
    global_error: float
    per_space_error: dict[str, float]
    per_space_reach: dict[str, float]
    memory_size: int

    def row(self) -> dict:
        out = {"iteration": self.iteration, "global_error": self.global_error,
               "memory_size": self.memory_size}
        for name, err in self.per_space_error.items():
            out[f"err_{name}"] = err
        for name, frac in self.per_space_reach.items():
            out[f"reach_{name}"] = frac
        return out


def evaluate(memory: EpisodicMemory, testbench: dict[int, np.ndarray],
             spaces: dict[int, OutcomeSpace], d_thres: float = 5.0,
             iteration: int = 0, reach_radius: float = REACH_RADIUS
             ) -> EvaluationSnapshot:
    """Mean nearest-neighbour distance per subspace over the testbench.

    Transferred procedure records never enter the effect store, so they are
    excluded by construction.
    """
    per_err: dict[str, float] = {}
    per_reach: dict[str, float] = {}
    for sid in sorted(testbench):
        space = spaces[sid]
        goals = space.normalize(testbench[sid])
        tree = memory.outcome_tree(sid)
        if tree is None:
            dists = np.full(len(goals), d_thres)
        else:
            dists, _ = tree.query(goals)
            dists = np.minimum(dists, d_thres)
        per_err[space.name] = float(dists.mean())
        per_reach[space.name] = float((dists < reach_radius).mean())
    global_error = float(np.mean(list(per_err.values())))
    return EvaluationSnapshot(iteration=iteration, global_error=global_error,
                              per_space_error=per_err, per_space_reach=per_reach,
                              memory_size=memory.action_pairs)


def _resolve_or_none(memory: EpisodicMemory, goal: Outcome, depth: int):
    try:
        return memory.resolve(goal, depth_budget=depth)
    except ColdStartError:
        return None


def procedure_usage_table(memory: EpisodicMemory, testbench: dict[int, np.ndarray],
                          spaces: dict[int, OutcomeSpace], depth: int = 3
                          ) -> list[dict]:
    """Share of decompositions the inverse model picks per goal subspace.

    Covers every non-touch subspace; `none` collects direct resolutions and
    unresolvable goals.
    """
    rows = []
    for sid in sorted(testbench):
        if sid == TOUCH:
            continue
        counts: Counter = Counter()
        for values in testbench[sid]:
            plan = _resolve_or_none(memory, Outcome(sid, values), depth)
            if plan is None or plan.procedure is None:
                counts["none"] += 1
            else:
                pair = plan.procedure.space_pair
                counts["+".join(SPACE_NAMES[s] for s in pair)] += 1
        total = sum(counts.values())
        for used, count in sorted(counts.items()):
            rows.append({"goal_space": SPACE_NAMES[sid], "used": used,
                         "count": count, "share_pct": 100.0 * count / total})
    return rows


def action_length_table(memory: EpisodicMemory, testbench: dict[int, np.ndarray],
                        spaces: dict[int, OutcomeSpace], depth: int = 3
                        ) -> list[dict]:
    """Histogram of resolved action lengths per goal subspace."""
    rows = []
    for sid in sorted(testbench):
        counts: Counter = Counter()
        for values in testbench[sid]:
            plan = _resolve_or_none(memory, Outcome(sid, values), depth)
            if plan is not None:
                counts[plan.length] += 1
        total = sum(counts.values())
        if total == 0:
            continue
        for length, count in sorted(counts.items()):
            rows.append({"goal_space": SPACE_NAMES[sid], "length": length,
                         "count": count, "share_pct": 100.0 * count / total})
    return rows


def strategy_task_counts(episode_rows: list[dict], window: int = 500) -> list[dict]:
    """(strategy, goal subspace) episode counts per iteration window."""
    bucket: dict[tuple[int, str, str], int] = defaultdict(int)
    for row in episode_rows:
        start = ((row["iteration"] - 1) // window) * window
        bucket[(start, row["strategy"], row["goal_space"])] += 1
    return [{"window_start": start, "strategy": strategy, "goal_space": space,
             "count": count}
            for (start, strategy, space), count in sorted(bucket.items())]


def learning_procedure_usage(episode_rows: list[dict]) -> list[dict]:
    """Share of decomposition spaces attempted during learning, per goal
    subspace (episodes that attempted no decomposition count as `none`)."""
    by_goal: dict[str, Counter] = defaultdict(Counter)
    for row in episode_rows:
        by_goal[row["goal_space"]][row["procedure"] or "none"] += 1
    rows = []
    for goal_space in sorted(by_goal):
        counts = by_goal[goal_space]
        total = sum(counts.values())
        for used, count in sorted(counts.items()):
            rows.append({"goal_space": goal_space, "used": used, "count": count,
                         "share_pct": 100.0 * count / total})
    return rows


def modal_cell(rows: list[dict], goal_space: str, exclude_none: bool = False
               ) -> tuple[str, float] | None:
    """The dominant decomposition (or length) cell for one goal subspace."""
    candidates = [r for r in rows if r["goal_space"] == goal_space]
    if exclude_none:
        candidates = [r for r in candidates if r["used"] != "none"]
    if not candidates:
        return None
    best = max(candidates, key=lambda r: r["count"])
    return best["used"], best["share_pct"]
