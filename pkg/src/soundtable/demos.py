"""Scripted construction of teacher demonstration repertoires.

Demonstrations are synthesized against the simulator: inverse kinematics
proposes goal postures, the primitive chain is executed, and the episode is
kept only if the intended effect verifies.  Each demo is stored in the
memory-dump record format with its decomposition in the procedure field, so
procedural repertoires can be derived from the same files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .memory import EpisodeRecord, decode_record, encode_record
from .motion import ActionSequence, ArmModel, DmpConstants, N_JOINTS, execute_sequence
from .outcomes import (BOTH_OBJECTS, BURST, OBJECT1, OBJECT2, TOUCH, Outcome,
                       OutcomeSpace, Procedure, extract_outcomes)
from .table import TableGeometry, reset, step_primitive

# demo counts per profile, straight from the experiment designs
SIMULATION_DEMO_COUNTS = {"action-teacher-0": 11, "action-teacher-1": 10,
                          "action-teacher-2": 8, "action-teacher-34": 73}
PHYSICAL_DEMO_COUNTS = {"action-teacher-0": 9, "action-teacher-1": 7,
                        "action-teacher-2": 7, "action-teacher-3": 32,
                        "action-teacher-4": 7}


def _jacobian(arm: ArmModel, joints: np.ndarray) -> np.ndarray:
    angles = arm.base_orientation + np.cumsum(joints)
    px = arm.link_lengths * np.cos(angles)
    py = arm.link_lengths * np.sin(angles)
    cx = np.cumsum(px[::-1])[::-1]
    cy = np.cumsum(py[::-1])[::-1]
    return np.vstack([-cy, cx])


def ik_solve(arm: ArmModel, target: np.ndarray, rng: np.random.Generator,
             tries: int = 40, tol: float = 1e-9) -> np.ndarray | None:
    """Damped-least-squares posture search with random restarts."""
    target = np.asarray(target, dtype=float)
    for attempt in range(tries):
        scale = 0.3 if attempt == 0 else 1.0
        joints = rng.uniform(arm.joint_min, arm.joint_max) * scale
        for _ in range(200):
            err = target - arm.forward_kinematics(joints)
            if float(np.linalg.norm(err)) < tol:
                return joints
            jac = _jacobian(arm, joints)
            step = jac.T @ np.linalg.solve(jac @ jac.T + 1e-4 * np.eye(2), err)
            joints = np.clip(joints + np.clip(step, -0.3, 0.3),
                             arm.joint_min, arm.joint_max)
        if float(np.linalg.norm(target - arm.forward_kinematics(joints))) < tol:
            return joints
    return None


def _touch_row(joints: np.ndarray) -> np.ndarray:
    row = np.zeros(2 * N_JOINTS)
    row[1::2] = joints  # zero forcing: pure relaxation to the posture
    return row


@dataclass
class DemoRollout:
    action: np.ndarray
    outcomes: list[tuple[Outcome, int]]
    blocked: bool


def run_action(action: np.ndarray, arm: ArmModel, consts: DmpConstants,
               geometry: TableGeometry, spaces: dict[int, OutcomeSpace]) -> DemoRollout:
    rollouts = execute_sequence(ActionSequence.from_matrix(action), arm, consts,
                                max_sequence_length=len(np.atleast_2d(action)))
    state = reset(geometry)
    events = []
    blocked = False
    for rollout in rollouts:
        state, ev = step_primitive(state, rollout.tip_path, rollout.tip_end_speed)
        events.append(ev)
        blocked = blocked or ev.blocked
    return DemoRollout(action=np.atleast_2d(action),
                       outcomes=extract_outcomes(events, spaces), blocked=blocked)


class DemoGenerator:
    def __init__(self, arm: ArmModel, consts: DmpConstants, geometry: TableGeometry,
                 spaces: dict[int, OutcomeSpace], seed: int):
        self.arm = arm
        self.consts = consts
        self.geometry = geometry
        self.spaces = spaces
        self.rng = np.random.default_rng(seed)

    def _final_outcome(self, rollout: DemoRollout, space_id: int) -> Outcome | None:
        found = None
        for outcome, _ in rollout.outcomes:
            if outcome.space_id == space_id:
                found = outcome
        return found

    def _sample_table_point(self, margin: float = 0.0,
                            avoid: list[np.ndarray] | None = None,
                            avoid_radius: float = 0.0) -> np.ndarray:
        geo = self.geometry
        lo = np.asarray(geo.origin) + margin
        hi = np.asarray(geo.origin) + np.array([geo.width, geo.height]) - margin
        for _ in range(200):
            point = self.rng.uniform(lo, hi)
            if avoid and any(np.linalg.norm(point - a) < avoid_radius for a in avoid):
                continue
            return point
        raise RuntimeError("could not sample a feasible table point")

    def touch_demo(self, target: np.ndarray, tries: int = 8) -> EpisodeRecord | None:
        """Single primitive ending on the table without disturbing objects."""
        for _ in range(tries):
            joints = ik_solve(self.arm, target, self.rng)
            if joints is None:
                return None
            action = _touch_row(joints)[None, :]
            rollout = run_action(action, self.arm, self.consts, self.geometry, self.spaces)
            touch = self._final_outcome(rollout, TOUCH)
            moved = any(o.space_id in (OBJECT1, OBJECT2) for o, _ in rollout.outcomes)
            if rollout.blocked or moved or touch is None:
                continue
            if np.linalg.norm(touch.values - target) > 2e-3:
                continue
            return EpisodeRecord(goal=touch, strategy="demo", action=action,
                                 procedure=None, reached=tuple(rollout.outcomes))
        return None

    def move_demo(self, object_id: int, target: np.ndarray,
                  tries: int = 10) -> EpisodeRecord | None:
        """Two primitives: settle on the object, then carry it to the target."""
        start = np.asarray(self.geometry.object1_start if object_id == OBJECT1
                           else self.geometry.object2_start, dtype=float)
        for _ in range(tries):
            pick = ik_solve(self.arm, start, self.rng)
            place = ik_solve(self.arm, target, self.rng)
            if pick is None or place is None:
                return None
            action = np.vstack([_touch_row(pick), _touch_row(place)])
            rollout = run_action(action, self.arm, self.consts, self.geometry, self.spaces)
            if rollout.blocked:
                continue
            other = OBJECT2 if object_id == OBJECT1 else OBJECT1
            if any(o.space_id == other for o, _ in rollout.outcomes):
                continue
            placed = self._final_outcome(rollout, object_id)
            if placed is None or np.linalg.norm(placed.values - target) > 2e-3:
                continue
            proc = Procedure(Outcome(TOUCH, start.copy()), Outcome(TOUCH, target.copy()))
            return EpisodeRecord(goal=placed, strategy="demo", action=action,
                                 procedure=proc, reached=tuple(rollout.outcomes))
        return None

    def both_demo(self, target1: np.ndarray, target2: np.ndarray,
                  tries: int = 10) -> EpisodeRecord | None:
        """Four primitives placing both objects; burst verified along the way."""
        geo = self.geometry
        start1 = np.asarray(geo.object1_start, dtype=float)
        start2 = np.asarray(geo.object2_start, dtype=float)
        for _ in range(tries):
            postures = [ik_solve(self.arm, p, self.rng)
                        for p in (start1, target1, start2, target2)]
            if any(p is None for p in postures):
                return None
            action = np.vstack([_touch_row(p) for p in postures])
            rollout = run_action(action, self.arm, self.consts, self.geometry, self.spaces)
            if rollout.blocked:
                continue
            both = self._final_outcome(rollout, BOTH_OBJECTS)
            burst = self._final_outcome(rollout, BURST)
            if both is None or burst is None:
                continue
            if np.linalg.norm(both.values - np.concatenate([target1, target2])) > 2e-3:
                continue
            proc = Procedure(Outcome(OBJECT1, target1.copy()),
                             Outcome(OBJECT2, target2.copy()))
            return EpisodeRecord(goal=both, strategy="demo", action=action,
                                 procedure=proc, reached=tuple(rollout.outcomes))
        return None

    # -- repertoire builders ------------------------------------------------

    def touch_repertoire(self, count: int) -> list[EpisodeRecord]:
        geo = self.geometry
        objects = [np.asarray(geo.object1_start, float), np.asarray(geo.object2_start, float)]
        demos = []
        while len(demos) < count:
            target = self._sample_table_point(margin=0.02, avoid=objects,
                                              avoid_radius=3 * geo.object_radius)
            demo = self.touch_demo(target)
            if demo is not None:
                demos.append(demo)
        return demos

    def move_repertoire(self, object_id: int, count: int) -> list[EpisodeRecord]:
        geo = self.geometry
        other = np.asarray(geo.object2_start if object_id == OBJECT1
                           else geo.object1_start, dtype=float)
        demos = []
        while len(demos) < count:
            target = self._sample_table_point(margin=0.02, avoid=[other],
                                              avoid_radius=3 * geo.object_radius)
            demo = self.move_demo(object_id, target)
            if demo is not None:
                demos.append(demo)
        return demos

    def both_repertoire(self, count: int) -> list[EpisodeRecord]:
        geo = self.geometry
        demos = []
        while len(demos) < count:
            target1 = self._sample_table_point(margin=0.02)
            target2 = self._sample_table_point(
                margin=0.02, avoid=[target1], avoid_radius=3 * geo.object_radius)
            demo = self.both_demo(target1, target2)
            if demo is not None:
                demos.append(demo)
        return demos


def generate_demo_files(profile: str, arm: ArmModel, consts: DmpConstants,
                        geometry: TableGeometry, spaces: dict[int, OutcomeSpace],
                        seed: int) -> dict[str, list[EpisodeRecord]]:
    """All action-teacher repertoires of a profile, keyed by teacher name."""
    gen = DemoGenerator(arm, consts, geometry, spaces, seed)
    if profile == "physical":
        counts = PHYSICAL_DEMO_COUNTS
        return {
            "action-teacher-0": gen.touch_repertoire(counts["action-teacher-0"]),
            "action-teacher-1": gen.move_repertoire(OBJECT1, counts["action-teacher-1"]),
            "action-teacher-2": gen.move_repertoire(OBJECT2, counts["action-teacher-2"]),
            "action-teacher-3": gen.both_repertoire(counts["action-teacher-3"]),
            "action-teacher-4": gen.both_repertoire(counts["action-teacher-4"]),
        }
    counts = SIMULATION_DEMO_COUNTS
    return {
        "action-teacher-0": gen.touch_repertoire(counts["action-teacher-0"]),
        "action-teacher-1": gen.move_repertoire(OBJECT1, counts["action-teacher-1"]),
        "action-teacher-2": gen.move_repertoire(OBJECT2, counts["action-teacher-2"]),
        "action-teacher-34": gen.both_repertoire(counts["action-teacher-34"]),
    }


def save_demos(demos: dict[str, list[EpisodeRecord]], directory) -> None:
    import json
    from pathlib import Path
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, records in demos.items():
        with open(directory / f"{name}.jsonl", "w") as fh:
            for record in records:
                fh.write(json.dumps(encode_record(record)) + "\n")


def load_demos(directory, names: list[str]) -> dict[str, list[EpisodeRecord]]:
    import json
    from pathlib import Path
    directory = Path(directory)
    out = {}
    for name in names:
        records = []
        with open(directory / f"{name}.jsonl") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(decode_record(json.loads(line)))
                except (KeyError, ValueError, TypeError) as exc:
                    raise ValueError(
                        f"{name}.jsonl: malformed record at line {line_no}: {exc}") from exc
        out[name] = records
    return out
