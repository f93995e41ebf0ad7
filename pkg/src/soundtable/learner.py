"""The episodic learning loop and its algorithm variants.

Each episode resets the environment, picks a goal and a strategy from the
interest map, builds one action (directly or by resolving a decomposition),
executes it, and feeds everything observed back into memory and interest.
One episode is one executed action sequence is one iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .interest import InterestMap
from .memory import ColdStartError, EpisodeRecord, EpisodicMemory, ProcedureRecord
from .motion import ActionSequence, execute_sequence
from .outcomes import (BOTH_OBJECTS, BURST, OBJECT1, OBJECT2, SPACE_NAMES,
                       TOUCH, Outcome, Procedure, extract_outcomes)
from .strategies import (ACTION_TEACHER_COST, AUTON_COST, PROCEDURE_TEACHER_COST,
                         ActionTeacher, ExplorationParams, ProcedureTeacherBase,
                         RepertoireProcedureTeacher, RuleProcedureTeacher,
                         StrategyConfig, explore_action, explore_procedure,
                         mimic_action, mimic_procedure, random_sequence)
from .table import reset, step_primitive

PT_TARGETS = {"procedure-teacher-1": OBJECT1, "procedure-teacher-2": OBJECT2,
              "procedure-teacher-3": BOTH_OBJECTS, "procedure-teacher-4": BURST}
SIM_ACTION_TEACHERS = {"action-teacher-0": {TOUCH}, "action-teacher-1": {OBJECT1},
                       "action-teacher-2": {OBJECT2},
                       "action-teacher-34": {BOTH_OBJECTS, BURST}}
PHYS_ACTION_TEACHERS = {"action-teacher-0": {TOUCH}, "action-teacher-1": {OBJECT1},
                        "action-teacher-2": {OBJECT2}, "action-teacher-3": {BOTH_OBJECTS},
                        "action-teacher-4": {BURST}}


@dataclass
class TeacherSet:
    action: dict[str, ActionTeacher] = field(default_factory=dict)
    procedure: dict[str, ProcedureTeacherBase] = field(default_factory=dict)


def _final_outcomes_by_space(record: EpisodeRecord) -> dict[int, Outcome]:
    last: dict[int, Outcome] = {}
    for outcome, _ in record.reached:
        last[outcome.space_id] = outcome
    return last


def build_teachers(cfg: ExperimentConfig, demo_records: dict[str, list[EpisodeRecord]]
                   ) -> TeacherSet:
    """Assemble the profile's teacher roster from generated demo files.

    Rule-based decomposition teachers serve the simulation profiles; the
    physical profile derives finite decomposition repertoires from the
    action teachers' demo subgoals, putting both teacher kinds on an equal
    footing.
    """
    spaces = cfg.build_spaces()
    geometry = cfg.table.build()
    layout = PHYS_ACTION_TEACHERS if cfg.profile == "physical" else SIM_ACTION_TEACHERS
    teachers = TeacherSet()
    for name, targets in layout.items():
        records = demo_records.get(name)
        if not records:
            raise ValueError(f"missing demo records for {name}")
        entries = []
        for record in records:
            finals = _final_outcomes_by_space(record)
            for sid in sorted(targets):
                if sid in finals:
                    entries.append((record.action, finals[sid]))
        teachers.action[name] = ActionTeacher(name, targets, entries, spaces)

    if cfg.profile == "physical":
        source = {"procedure-teacher-1": "action-teacher-1",
                  "procedure-teacher-2": "action-teacher-2",
                  "procedure-teacher-3": "action-teacher-3",
                  "procedure-teacher-4": "action-teacher-4"}
        for pt_name, at_name in source.items():
            target = PT_TARGETS[pt_name]
            entries = []
            for record in demo_records[at_name]:
                finals = _final_outcomes_by_space(record)
                if record.procedure is not None and target in finals:
                    entries.append((record.procedure, finals[target]))
            teachers.procedure[pt_name] = RepertoireProcedureTeacher(
                pt_name, target, entries, spaces)
    else:
        for pt_name, target in PT_TARGETS.items():
            teachers.procedure[pt_name] = RuleProcedureTeacher(
                pt_name, target, geometry, spaces)
    return teachers


def variant_strategies(variant: str, teachers: TeacherSet) -> list[StrategyConfig]:
    """The strategy roster a variant is allowed to use."""
    auton_action = StrategyConfig("auton-action", "auton-action", AUTON_COST)
    auton_proc = StrategyConfig("auton-procedure", "auton-procedure", AUTON_COST)
    if variant == "RandomAction":
        return [StrategyConfig("random-action", "random-action", AUTON_COST)]
    if variant == "IM-PB":
        return [auton_action, auton_proc]
    if variant == "SGIM-ACTS":
        mimics = [StrategyConfig(f"mimic-action:{name}", "mimic-action",
                                 ACTION_TEACHER_COST, teacher=name)
                  for name in sorted(teachers.action)]
        return [auton_action] + mimics
    if variant in ("SGIM-PB", "SGIM-TL"):
        mimics = [StrategyConfig("mimic-action:action-teacher-0", "mimic-action",
                                 ACTION_TEACHER_COST, teacher="action-teacher-0")]
        mimics += [StrategyConfig(f"mimic-procedure:{name}", "mimic-procedure",
                                  PROCEDURE_TEACHER_COST, teacher=name)
                   for name in sorted(teachers.procedure)]
        return [auton_action, auton_proc] + mimics
    raise ValueError(f"unknown variant {variant!r}")


class Learner:
    """One seeded run of a variant on one profile."""

    def __init__(self, cfg: ExperimentConfig, teachers: TeacherSet,
                 transfer: list[ProcedureRecord] | None = None):
        self.cfg = cfg
        self.geometry = cfg.table.build()
        self.spaces = cfg.build_spaces()
        self.arm = cfg.build_arm()
        self.consts = cfg.dmp.build()
        lc = cfg.learner
        self.memory = EpisodicMemory(self.spaces, gamma=lc.gamma,
                                     max_sequence_length=lc.max_sequence_length,
                                     knn=lc.knn,
                                     transfer_length_default=lc.transfer_length_default)
        self.params = ExplorationParams.for_arm(
            self.arm, cfg.dmp.weight_bound,
            max_sequence_length=lc.max_sequence_length, d_thres=lc.d_thres,
            p_local_min=lc.p_local_min, p_local_max=lc.p_local_max,
            sigma_local_max=lc.sigma_local_max,
            sigma_local_scale=lc.sigma_local_scale, sigma_demo=lc.sigma_demo,
            length_geometric_p=lc.length_geometric_p)
        self.teachers = teachers
        self.strategies = variant_strategies(cfg.variant, teachers)
        self._by_id = {s.id: s for s in self.strategies}
        self.interest = InterestMap(self.spaces, {s.id: s.cost for s in self.strategies},
                                    d_thres=lc.d_thres, window=lc.interest_window,
                                    split_threshold=lc.split_threshold,
                                    epsilon=lc.epsilon, cell_size=lc.competence_cell)
        self.rng = np.random.default_rng(cfg.seed)
        if transfer:
            self.memory.add_transfer(transfer)
        self._consulted: set[tuple[str, int]] = set()
        self.iteration = 0
        self.episode_rows: list[dict] = []

    # -- attempt construction ---------------------------------------------

    def _realize(self, procedure: Procedure) -> np.ndarray | None:
        """Concatenate the resolved actions of both components."""
        lc = self.cfg.learner
        try:
            first = self.memory.resolve(procedure.first, lc.resolve_depth - 1,
                                        max_length=lc.max_sequence_length - 1)
            second = self.memory.resolve(procedure.second, lc.resolve_depth - 1,
                                         max_length=lc.max_sequence_length - first.length)
        except ColdStartError:
            return None
        return np.vstack([first.action, second.action])

    def _build_attempt(self, goal: Outcome, strategy: StrategyConfig,
                       region_id: int) -> tuple[np.ndarray, Procedure | None]:
        if strategy.kind == "random-action":
            return random_sequence(self.rng, self.params), None
        if strategy.kind == "auton-action":
            return explore_action(goal, self.memory, self.rng, self.params), None
        if strategy.kind == "auton-procedure":
            proc = explore_procedure(goal, self.memory, self.rng, self.params, self.spaces)
            action = self._realize(proc)
            if action is None:  # cold start degrades to random, never aborts
                return random_sequence(self.rng, self.params), None
            return action, proc
        replay_key = (strategy.id, region_id)
        replay = replay_key not in self._consulted
        self._consulted.add(replay_key)
        if strategy.kind == "mimic-action":
            teacher = self.teachers.action[strategy.teacher]
            return mimic_action(goal, teacher, self.rng, self.params, replay), None
        if strategy.kind == "mimic-procedure":
            teacher = self.teachers.procedure[strategy.teacher]
            proc = mimic_procedure(goal, teacher, self.rng, self.params,
                                   self.spaces, replay)
            action = self._realize(proc)
            if action is None:
                return random_sequence(self.rng, self.params), None
            return action, proc
        raise ValueError(f"unknown strategy kind {strategy.kind!r}")

    # -- one episode --------------------------------------------------------

    def run_episode(self) -> dict:
        selection = self.interest.select([s.id for s in self.strategies], self.rng)
        strategy = self._by_id[selection.strategy]
        goal = selection.goal
        action, attempted = self._build_attempt(goal, strategy, selection.region_id)

        rollouts = execute_sequence(ActionSequence.from_matrix(action), self.arm,
                                    self.consts, self.cfg.learner.max_sequence_length)
        state = reset(self.geometry)
        events = []
        for rollout in rollouts:
            state, ev = step_primitive(state, rollout.tip_path, rollout.tip_end_speed)
            events.append(ev)
        reached = extract_outcomes(events, self.spaces)

        record = EpisodeRecord(goal=goal, strategy=strategy.id, action=action,
                               procedure=attempted, reached=tuple(reached))
        self.memory.store(record)
        self.interest.update(goal, strategy.id, [out for out, _ in reached])

        self.iteration += 1
        counts: dict[str, int] = {}
        for outcome, _ in reached:
            name = SPACE_NAMES[outcome.space_id]
            counts[name] = counts.get(name, 0) + 1
        row = {
            "iteration": self.iteration,
            "strategy": strategy.id,
            "goal_space": SPACE_NAMES[goal.space_id],
            "length": int(len(record.action)),
            "procedure": ("+".join(SPACE_NAMES[s] for s in attempted.space_pair)
                          if attempted is not None else ""),
            "blocked": sum(1 for ev in events if ev.blocked),
            "outcomes": counts,
        }
        self.episode_rows.append(row)
        return row

    # -- a whole run ---------------------------------------------------------

    def run(self, iterations: int | None = None, on_eval=None) -> list[dict]:
        """Drive episodes with periodic evaluation callbacks.

        The callback fires before the first episode, on the schedule, and
        after the last episode.
        """
        total = self.cfg.iterations if iterations is None else iterations
        every = self.cfg.eval_every
        if on_eval is not None:
            on_eval(self)
        for _ in range(total):
            self.run_episode()
            if on_eval is not None and (self.iteration % every == 0
                                        or self.iteration == total):
                on_eval(self)
        return self.episode_rows
