"""Typed outcome subspaces, normalization, distances, and goal sampling.

Six effect families are observable on the table, indexed 0..5: table touches,
first-object positions, second-object positions, joint object placements,
burst sounds, and maintained sounds.  Every outcome carries its subspace id
and raw coordinates; distances are Euclidean over per-dimension normalized
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .table import PrimitiveEvents, TableGeometry

TOUCH, OBJECT1, OBJECT2, BOTH_OBJECTS, BURST, MAINTAINED = range(6)

SPACE_NAMES = {
    TOUCH: "omega0",
    OBJECT1: "omega1",
    OBJECT2: "omega2",
    BOTH_OBJECTS: "omega3",
    BURST: "omega4",
    MAINTAINED: "omega5",
}
SPACE_IDS = {name: sid for sid, name in SPACE_NAMES.items()}


class SubspaceMismatchError(ValueError):
    """Raised when an operation mixes outcomes of different subspaces."""


@dataclass(frozen=True)
class OutcomeSpace:
    space_id: int
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValueError("bounds must have matching shapes")
        if not np.all(np.isfinite(self.lower)) or not np.all(np.isfinite(self.upper)):
            raise ValueError("bounds must be finite")
        if np.any(self.upper <= self.lower):
            raise ValueError("bounds must be nondegenerate")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def name(self) -> str:
        return SPACE_NAMES[self.space_id]

    def normalize(self, values: np.ndarray) -> np.ndarray:
        scaled = (np.asarray(values, dtype=float) - self.lower) / (self.upper - self.lower)
        return np.clip(scaled, 0.0, 1.0)


def build_spaces(geometry: TableGeometry, include_maintained: bool) -> dict[int, OutcomeSpace]:
    """Subspace registry for a profile; maintained sounds are optional."""
    x0, y0 = geometry.origin
    rect_lo = np.array([x0, y0])
    rect_hi = np.array([x0 + geometry.width, y0 + geometry.height])
    sound_lo = np.array([-1.0, -1.0, 0.05])
    sound_hi = np.array([1.0, 1.0, 1.0])
    spaces = {
        TOUCH: OutcomeSpace(TOUCH, rect_lo, rect_hi),
        OBJECT1: OutcomeSpace(OBJECT1, rect_lo, rect_hi),
        OBJECT2: OutcomeSpace(OBJECT2, rect_lo, rect_hi),
        BOTH_OBJECTS: OutcomeSpace(BOTH_OBJECTS, np.tile(rect_lo, 2), np.tile(rect_hi, 2)),
        BURST: OutcomeSpace(BURST, sound_lo, sound_hi),
    }
    if include_maintained:
        spaces[MAINTAINED] = OutcomeSpace(
            MAINTAINED, np.append(sound_lo, 0.0), np.append(sound_hi, 1.0))
    return spaces


@dataclass(frozen=True)
class Outcome:
    space_id: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("outcome coordinates must be finite")

    def key(self) -> tuple:
        return (self.space_id, tuple(self.values.tolist()))


@dataclass(frozen=True)
class Procedure:
    """Ordered pair of outcomes: achieve the first, then the second."""

    first: Outcome
    second: Outcome

    @property
    def space_pair(self) -> tuple[int, int]:
        return (self.first.space_id, self.second.space_id)


def distance(a: Outcome, b: Outcome, spaces: dict[int, OutcomeSpace]) -> float:
    """Euclidean distance between normalized coordinates of one subspace."""
    if a.space_id != b.space_id:
        raise SubspaceMismatchError(
            f"cannot compare outcomes of {SPACE_NAMES[a.space_id]} and {SPACE_NAMES[b.space_id]}")
    space = spaces[a.space_id]
    return float(np.linalg.norm(space.normalize(a.values) - space.normalize(b.values)))


def perf(dist: float, length: int, gamma: float = 1.2) -> float:
    """Retrieval score: distance inflated by the action-length penalty."""
    if length < 1:
        raise ValueError("action length must be at least 1")
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    return dist * gamma ** length


def extract_outcomes(events: list[PrimitiveEvents],
                     spaces: dict[int, OutcomeSpace]) -> list[tuple[Outcome, int]]:
    """Typed outcomes observed at each primitive boundary of an episode.

    Blocked primitives contribute nothing.  Joint placements are recorded at
    every boundary where an object moved while both have already moved this
    episode, so re-moves refresh the joint outcome.
    """
    results: list[tuple[Outcome, int]] = []
    for idx, ev in enumerate(events):
        if ev.blocked:
            continue
        if ev.touch is not None:
            results.append((Outcome(TOUCH, np.array(ev.touch)), idx))
        if ev.moved1 is not None:
            results.append((Outcome(OBJECT1, np.array(ev.moved1)), idx))
        if ev.moved2 is not None:
            results.append((Outcome(OBJECT2, np.array(ev.moved2)), idx))
        if ev.both_positions is not None:
            flat = np.array(ev.both_positions).reshape(4)
            results.append((Outcome(BOTH_OBJECTS, flat), idx))
        if ev.burst is not None:
            results.append((Outcome(BURST, np.array(ev.burst.as_tuple())), idx))
        if ev.maintained is not None and MAINTAINED in spaces:
            results.append((Outcome(MAINTAINED, np.array(ev.maintained.as_tuple())), idx))
    return results


def sample_testbench(spaces: dict[int, OutcomeSpace], per_space: int,
                     seed: int) -> dict[int, np.ndarray]:
    """Uniform evaluation goals per subspace, deterministic for a seed.

    Goals are drawn independently of any teacher demonstration stream, so
    the two sets are disjoint with probability one.
    """
    if per_space <= 0:
        raise ValueError("per-space count must be positive")
    rng = np.random.default_rng(seed)
    bench = {}
    for sid in sorted(spaces):
        sp = spaces[sid]
        bench[sid] = rng.uniform(sp.lower, sp.upper, size=(per_space, sp.dim))
    return bench
