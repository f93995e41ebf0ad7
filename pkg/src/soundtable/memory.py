"""Episodic memory: every executed action, procedure, and reached effect.

Retrieval ranks candidates by distance inflated with an action-length
penalty, so shorter actions win among equally accurate ones.  The inverse
model resolves a goal either to the best stored action directly or through
the best stored procedure, whose components are resolved recursively.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .outcomes import Outcome, OutcomeSpace, Procedure, distance

# Linear scan is the reference path; per-subspace trees take over past this
# record count and must return exactly the same ranking.
DEFAULT_INDEX_THRESHOLD = 10_000
_TREE_REBUILD_SLACK = 2_000


class ColdStartError(RuntimeError):
    """No stored action or applicable procedure can serve the goal."""


@dataclass(frozen=True)
class EpisodeRecord:
    """One executed action sequence with everything observed along it."""

    goal: Outcome
    strategy: str
    action: np.ndarray  # (n_primitives, 14)
    procedure: Procedure | None
    reached: tuple[tuple[Outcome, int], ...]  # (outcome, primitive index)

    def __post_init__(self):
        action = np.atleast_2d(np.asarray(self.action, dtype=float))
        action.setflags(write=False)
        object.__setattr__(self, "action", action)
        object.__setattr__(self, "reached", tuple(self.reached))
        for _, idx in self.reached:
            if idx >= len(self.action):
                raise ValueError("reached outcome index beyond sequence length")

    @property
    def length(self) -> int:
        return len(self.action)


@dataclass(frozen=True)
class ProcedureRecord:
    procedure: Procedure
    reached: Outcome
    length: int | None  # None for transferred records of unknown length
    transferred: bool = False

    def __post_init__(self):
        if self.length is not None and self.length < 2:
            raise ValueError("a realized procedure spans at least two primitives")


@dataclass(frozen=True)
class RetrievedAction:
    action: np.ndarray
    outcome: Outcome
    outcome_point: np.ndarray  # normalized coordinates of the outcome
    dist: float
    length: int
    score: float


@dataclass(frozen=True)
class RetrievedProcedure:
    record: ProcedureRecord
    reached_point: np.ndarray  # normalized coordinates of the net effect
    dist: float
    length: int
    score: float


@dataclass(frozen=True)
class ResolvedPlan:
    action: np.ndarray
    procedure: Procedure | None  # top-level decomposition used, if any

    @property
    def length(self) -> int:
        return len(self.action)


class _SpaceIndex:
    """Growing per-subspace store of (normalized point, length, payload)."""

    def __init__(self, dim: int):
        self.dim = dim
        self.size = 0
        self._coords = np.empty((64, dim))
        self._lengths = np.empty(64, dtype=np.int64)
        self._flags = np.zeros(64, dtype=bool)
        self.payloads: list = []
        self._tree: dict[int, tuple[np.ndarray, cKDTree]] | None = None
        self._tree_size = 0

    def add(self, point: np.ndarray, length: int, payload, flag: bool = False) -> None:
        if self.size == len(self._coords):
            self._coords = np.vstack([self._coords, np.empty_like(self._coords)])
            self._lengths = np.concatenate([self._lengths, np.empty_like(self._lengths)])
            self._flags = np.concatenate([self._flags, np.zeros_like(self._flags)])
        self._coords[self.size] = point
        self._lengths[self.size] = length
        self._flags[self.size] = flag
        self.payloads.append(payload)
        self.size += 1

    @property
    def coords(self) -> np.ndarray:
        return self._coords[:self.size]

    @property
    def lengths(self) -> np.ndarray:
        return self._lengths[:self.size]

    @property
    def flags(self) -> np.ndarray:
        return self._flags[:self.size]

    def _ensure_trees(self) -> None:
        if self._tree is not None and self.size - self._tree_size <= _TREE_REBUILD_SLACK:
            return
        # One tree per action length: the length penalty preserves distance
        # order only within a length, so the k-by-score winners of the whole
        # store are always k-by-distance winners of their own bucket.
        built = self.size
        buckets: dict[int, np.ndarray] = {}
        lengths = self.lengths
        for length in np.unique(lengths):
            buckets[int(length)] = np.flatnonzero(lengths == length)
        self._tree = {length: (rows, cKDTree(self.coords[rows].copy()))
                      for length, rows in buckets.items()}
        self._tree_size = built

    def candidate_rows(self, point: np.ndarray, k: int, use_tree: bool,
                       mask: np.ndarray | None = None) -> np.ndarray:
        """Rows guaranteed to contain the k best scores (exact superset).

        Filtered queries fall back to the linear path: the tree cannot know
        which of its neighbours a mask would discard.
        """
        if mask is not None and not mask.all():
            return np.flatnonzero(mask)
        if not use_tree or self.size == 0:
            return np.arange(self.size)
        self._ensure_trees()
        parts = [np.arange(self._tree_size, self.size)]
        for rows, tree in self._tree.values():
            kq = min(k, len(rows))
            dists, idx = tree.query(point, k=kq)
            dists = np.atleast_1d(dists)
            idx = np.atleast_1d(idx)
            radius = float(dists.max())
            # co-distant ties are pulled in so insertion order can break them
            ball = tree.query_ball_point(point, radius * (1 + 1e-12) + 1e-12)
            parts.append(rows[idx])
            parts.append(rows[np.asarray(ball, dtype=np.int64)])
        return np.unique(np.concatenate(parts))


def _top_by_score(dists: np.ndarray, lengths: np.ndarray, rows: np.ndarray,
                  gamma: float, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    scores = dists * gamma ** lengths
    order = np.lexsort((rows, scores))[:k]
    return rows[order], dists[order], scores[order]


class EpisodicMemory:
    """Indexed store realizing the inverse model over actions and procedures."""

    def __init__(self, spaces: dict[int, OutcomeSpace], gamma: float = 1.2,
                 max_sequence_length: int = 8, knn: int = 5,
                 transfer_length_default: int = 4,
                 index_threshold: int = DEFAULT_INDEX_THRESHOLD):
        self.spaces = spaces
        self.gamma = gamma
        self.max_sequence_length = max_sequence_length
        self.knn = knn
        self.transfer_length_default = transfer_length_default
        self.index_threshold = index_threshold
        self.records: list[EpisodeRecord] = []
        self._actions = {sid: _SpaceIndex(sp.dim) for sid, sp in spaces.items()}
        self._procedures = {sid: _SpaceIndex(sp.dim) for sid, sp in spaces.items()}
        self.action_pairs = 0

    # -- storing ---------------------------------------------------------

    def store(self, record: EpisodeRecord) -> None:
        """Index every (prefix action, outcome) pair and the net procedure."""
        self.records.append(record)
        rec_idx = len(self.records) - 1
        for outcome, prim_idx in record.reached:
            if outcome.space_id not in self.spaces:
                continue
            space = self.spaces[outcome.space_id]
            self._actions[outcome.space_id].add(
                space.normalize(outcome.values), prim_idx + 1, (rec_idx, prim_idx + 1, outcome))
            self.action_pairs += 1
        if record.procedure is not None:
            last_by_space: dict[int, Outcome] = {}
            for outcome, _ in record.reached:  # later entries overwrite: net effect
                if outcome.space_id in self.spaces:
                    last_by_space[outcome.space_id] = outcome
            for outcome in last_by_space.values():
                self._add_procedure(ProcedureRecord(
                    procedure=record.procedure, reached=outcome,
                    length=record.length, transferred=False))

    def _add_procedure(self, rec: ProcedureRecord) -> None:
        sid = rec.reached.space_id
        space = self.spaces[sid]
        length = rec.length if rec.length is not None else self.transfer_length_default
        self._procedures[sid].add(space.normalize(rec.reached.values), length, rec,
                                  flag=rec.transferred)

    def add_transfer(self, records: list[ProcedureRecord]) -> None:
        for rec in records:
            if rec.reached.space_id in self.spaces:
                self._add_procedure(ProcedureRecord(
                    procedure=rec.procedure, reached=rec.reached,
                    length=rec.length, transferred=True))

    @property
    def procedure_records(self) -> int:
        return sum(index.size for index in self._procedures.values())

    def own_procedure_records(self) -> list[ProcedureRecord]:
        """Non-transferred procedure records, in insertion order per space."""
        out = []
        for index in self._procedures.values():
            out.extend(rec for rec in index.payloads if not rec.transferred)
        return out

    # -- retrieval -------------------------------------------------------

    def nearest_actions(self, goal: Outcome, k: int | None = None) -> list[RetrievedAction]:
        """Best stored actions for the goal, ordered by penalized distance."""
        k = k or self.knn
        index = self._actions.get(goal.space_id)
        if index is None or index.size == 0:
            return []
        return self._query_actions(index, goal, k, max_length=None)

    def _query_actions(self, index: _SpaceIndex, goal: Outcome, k: int,
                       max_length: int | None) -> list[RetrievedAction]:
        point = self.spaces[goal.space_id].normalize(goal.values)
        mask = None
        if max_length is not None:
            mask = index.lengths <= max_length
        rows = index.candidate_rows(point, k, index.size > self.index_threshold, mask)
        if len(rows) == 0:
            return []
        dists = np.linalg.norm(index.coords[rows] - point, axis=1)
        top_rows, top_d, top_s = _top_by_score(dists, index.lengths[rows], rows, self.gamma, k)
        results = []
        for row, d, s in zip(top_rows, top_d, top_s):
            rec_idx, prefix, outcome = index.payloads[row]
            results.append(RetrievedAction(
                action=self.records[rec_idx].action[:prefix],
                outcome=outcome, outcome_point=index.coords[row].copy(),
                dist=float(d), length=int(prefix), score=float(s)))
        return results

    def nearest_procedures(self, goal: Outcome, k: int | None = None,
                           include_transferred: bool = False) -> list[RetrievedProcedure]:
        """Best stored procedures whose net effect approaches the goal."""
        k = k or self.knn
        index = self._procedures.get(goal.space_id)
        if index is None or index.size == 0:
            return []
        point = self.spaces[goal.space_id].normalize(goal.values)
        mask = ~index.flags if not include_transferred else None
        rows = index.candidate_rows(point, k, index.size > self.index_threshold, mask)
        if len(rows) == 0:
            return []
        dists = np.linalg.norm(index.coords[rows] - point, axis=1)
        top_rows, top_d, top_s = _top_by_score(dists, index.lengths[rows], rows, self.gamma, k)
        return [RetrievedProcedure(record=index.payloads[row],
                                   reached_point=index.coords[row].copy(),
                                   dist=float(d), length=int(index.lengths[row]),
                                   score=float(s))
                for row, d, s in zip(top_rows, top_d, top_s)]

    # -- the inverse model -----------------------------------------------

    def resolve(self, goal: Outcome, depth_budget: int = 3,
                max_length: int | None = None) -> ResolvedPlan:
        """Best plan for a goal: direct action or recursive decomposition.

        Procedures win ties against equally scored direct actions (every
        procedure episode also indexes its full action, so exact ties are
        the common case and breaking them toward the decomposition keeps
        it observable).  A candidate whose same-subspace component is no
        closer to the goal than its own net effect is skipped: expanding
        it could recurse without approaching the goal.
        """
        cap = self.max_sequence_length if max_length is None else max_length
        if cap < 1:
            raise ColdStartError("no room left in the sequence bound")
        direct = self._query_actions(self._actions[goal.space_id], goal, 1, max_length=cap) \
            if goal.space_id in self.spaces and self._actions[goal.space_id].size else []
        best_direct = direct[0] if direct else None

        best_proc: RetrievedProcedure | None = None
        if depth_budget > 0 and cap >= 2:
            for cand in self.nearest_procedures(goal, self.knn, include_transferred=False):
                if self._cycle_unsafe(cand, goal):
                    continue
                best_proc = cand
                break

        if best_proc is not None and (best_direct is None or best_proc.score <= best_direct.score):
            try:
                first = self.resolve(best_proc.record.procedure.first,
                                     depth_budget - 1, cap - 1)
                second = self.resolve(best_proc.record.procedure.second,
                                      depth_budget - 1, cap - first.length)
                return ResolvedPlan(action=np.vstack([first.action, second.action]),
                                    procedure=best_proc.record.procedure)
            except ColdStartError:
                pass
        if best_direct is not None:
            return ResolvedPlan(action=best_direct.action, procedure=None)
        raise ColdStartError(
            f"nothing stored can reach {self.spaces[goal.space_id].name} goals yet")

    def _cycle_unsafe(self, cand: RetrievedProcedure, goal: Outcome) -> bool:
        for component in (cand.record.procedure.first, cand.record.procedure.second):
            if component.space_id == goal.space_id:
                if distance(component, goal, self.spaces) >= cand.dist:
                    return True
        return False

    # -- evaluation support ------------------------------------------------

    def outcome_tree(self, space_id: int) -> cKDTree | None:
        index = self._actions.get(space_id)
        if index is None or index.size == 0:
            return None
        return cKDTree(index.coords.copy())

    # -- persistence -------------------------------------------------------

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            for record in self.records:
                fh.write(json.dumps(encode_record(record)) + "\n")

    def load(self, path) -> int:
        count = 0
        with open(path) as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    self.store(decode_record(json.loads(line)))
                except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
                    raise ValueError(f"malformed record at line {line_no}: {exc}") from exc
                count += 1
        return count


def _encode_outcome(outcome: Outcome) -> list:
    return [outcome.space_id, [float(v) for v in outcome.values]]


def _decode_outcome(data) -> Outcome:
    return Outcome(int(data[0]), np.asarray(data[1], dtype=float))


def encode_record(record: EpisodeRecord) -> dict:
    return {
        "goal": _encode_outcome(record.goal),
        "strategy": record.strategy,
        "action": [[float(v) for v in row] for row in record.action],
        "procedure": ([_encode_outcome(record.procedure.first),
                       _encode_outcome(record.procedure.second)]
                      if record.procedure is not None else None),
        "reached": [[out.space_id, [float(v) for v in out.values], idx]
                    for out, idx in record.reached],
    }


def decode_record(data: dict) -> EpisodeRecord:
    proc = None
    if data.get("procedure") is not None:
        first, second = data["procedure"]
        proc = Procedure(_decode_outcome(first), _decode_outcome(second))
    reached = tuple((Outcome(int(sid), np.asarray(vals, dtype=float)), int(idx))
                    for sid, vals, idx in data["reached"])
    return EpisodeRecord(goal=_decode_outcome(data["goal"]), strategy=data["strategy"],
                         action=np.asarray(data["action"], dtype=float),
                         procedure=proc, reached=reached)


def dump_procedures(records: list[ProcedureRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({
                "procedure": [_encode_outcome(rec.procedure.first),
                              _encode_outcome(rec.procedure.second)],
                "reached": _encode_outcome(rec.reached),
                "length": rec.length,
            }) + "\n")


def load_procedures(path) -> list[ProcedureRecord]:
    """Parse a procedure-record file, reporting the offending line on failure."""
    out = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                first, second = data["procedure"]
                length = data.get("length")
                out.append(ProcedureRecord(
                    procedure=Procedure(_decode_outcome(first), _decode_outcome(second)),
                    reached=_decode_outcome(data["reached"]),
                    length=int(length) if length is not None else None))
            except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
                raise ValueError(f"malformed procedure record at line {line_no}: {exc}") from exc
    return out
