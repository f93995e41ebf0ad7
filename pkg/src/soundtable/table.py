"""The interactive table: object pick/place, blocking, and sound generation.

Two disk-shaped virtual objects sit on a rectangular table.  A primitive
that ends inside a free object's disk selects it; the next primitive's
endpoint places it there (a two-step pick-and-place, the planar analogue of
descending onto an object and setting it down elsewhere).  Ending a
primitive on the other object while carrying one, or on both disks at once,
blocks the setup and cancels that primitive's effects.  A burst sound fires
once per episode, at the primitive where the second object first moves;
touching the table afterwards without moving anything sustains it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class TableGeometry:
    origin: tuple[float, float] = (0.0, 0.0)
    width: float = 1.0
    height: float = 1.0
    object_radius: float = 0.04
    object1_start: tuple[float, float] = (0.35, 0.65)
    object2_start: tuple[float, float] = (0.65, 0.65)
    # the table senses a touch, and objects engage, only when the tip has
    # come to rest; a faster endpoint is a flyby (the planar stand-in for
    # deliberately descending onto the surface)
    selection_speed_limit: float = 0.01

    def __post_init__(self):
        if self.object_radius <= 0:
            raise ValueError("object radius must be positive")
        if self.selection_speed_limit < 0:
            raise ValueError("selection speed limit must be nonnegative")
        for pos in (self.object1_start, self.object2_start):
            if not self.contains(np.asarray(pos)):
                raise ValueError("object start positions must lie on the table")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def corners(self) -> np.ndarray:
        x0, y0 = self.origin
        return np.array([[x0, y0], [x0 + self.width, y0],
                         [x0, y0 + self.height], [x0 + self.width, y0 + self.height]])

    def contains(self, point: np.ndarray) -> bool:
        x0, y0 = self.origin
        return bool(x0 <= point[0] <= x0 + self.width and y0 <= point[1] <= y0 + self.height)

    def clamp(self, point: np.ndarray) -> np.ndarray:
        x0, y0 = self.origin
        return np.array([min(max(point[0], x0), x0 + self.width),
                         min(max(point[1], y0), y0 + self.height)])


@dataclass(frozen=True)
class SoundParams:
    """Burst sound descriptor; `sustain` present only for maintained sounds."""

    frequency: float
    level: float
    rhythm: float
    sustain: float | None = None

    def as_tuple(self) -> tuple[float, ...]:
        if self.sustain is None:
            return (self.frequency, self.level, self.rhythm)
        return (self.frequency, self.level, self.rhythm, self.sustain)


@dataclass(frozen=True)
class TableState:
    geometry: TableGeometry
    object1: np.ndarray
    object2: np.ndarray
    moved1: bool
    moved2: bool
    burst: SoundParams | None
    touches: tuple[tuple[float, float], ...]
    carrying: int | None = None  # 1 or 2 while an object is selected

    def object_positions(self) -> tuple[np.ndarray, np.ndarray]:
        return self.object1, self.object2


@dataclass(frozen=True)
class PrimitiveEvents:
    """What one primitive did to the table; absence of an effect is None."""

    blocked: bool = False
    touch: tuple[float, float] | None = None
    moved1: tuple[float, float] | None = None
    moved2: tuple[float, float] | None = None
    both_positions: tuple[tuple[float, float], tuple[float, float]] | None = None
    burst: SoundParams | None = None
    maintained: SoundParams | None = None


def reset(geometry: TableGeometry) -> TableState:
    """Fresh episode: objects at their start positions, no sound, no flags."""
    return TableState(geometry=geometry,
                      object1=np.asarray(geometry.object1_start, dtype=float),
                      object2=np.asarray(geometry.object2_start, dtype=float),
                      moved1=False, moved2=False, burst=None, touches=(),
                      carrying=None)


def burst_sound(state: TableState) -> SoundParams:
    """Sound parameters determined by the two object positions.

    Frequency follows the first object's distance to its closest corner,
    level and rhythm the polar coordinates of the second object in the frame
    centred on the first.  The center distance is clamped below at twice the
    object radius, which release clamping can otherwise undercut.
    """
    geo = state.geometry
    d_total = geo.diagonal
    r_min = 2.0 * geo.object_radius
    d_min = float(np.min(np.linalg.norm(geo.corners - state.object1, axis=1)))
    frequency = (d_total / 4.0 - d_min) * 4.0 / d_total
    offset = state.object2 - state.object1
    r = max(float(np.hypot(offset[0], offset[1])), r_min)
    level = 1.0 - 2.0 * (math.log(r) - math.log(r_min)) / (math.log(d_total) - math.log(r_min))
    phi = math.atan2(offset[1], offset[0])
    rhythm = (abs(phi) / math.pi) * 0.95 + 0.05
    return SoundParams(frequency=frequency, level=level, rhythm=rhythm)


def maintain_sound(state: TableState, touch: tuple[float, float]) -> SoundParams:
    """Extend the episode's burst with a sustain from the touch position."""
    if state.burst is None:
        raise ValueError("no burst sound to maintain")
    d2 = float(np.linalg.norm(np.asarray(touch) - state.object2))
    return replace(state.burst, sustain=d2 / state.geometry.diagonal)


def _inside(point: np.ndarray, center: np.ndarray, radius: float) -> bool:
    delta = point - center
    return bool(delta @ delta <= radius * radius)


def step_primitive(state: TableState, tip_path: np.ndarray,
                   tip_speed: float = 0.0) -> tuple[TableState, PrimitiveEvents]:
    """Refresh the table after one executed primitive.

    Only a settled endpoint interacts with the table: it registers a touch,
    and inside a free object's disk it selects that object; the next
    primitive's endpoint places it (clamped onto the table, gating-free: a
    carried object lands wherever the motion ends).  A tip still moving
    faster than the limit sweeps past without touching or engaging.  Ending
    on the other object while carrying one, or settling inside both disks
    at once, blocks the setup: that primitive has no effect on the table,
    though the arm keeps its final posture.
    """
    tip_path = np.asarray(tip_path, dtype=float)
    if tip_path.ndim != 2 or len(tip_path) == 0:
        raise ValueError("tip path must be a nonempty (n, 2) array")
    geo = state.geometry
    radius = geo.object_radius
    endpoint = tip_path[-1]
    settled = tip_speed <= geo.selection_speed_limit
    in1 = _inside(endpoint, state.object1, radius)
    in2 = _inside(endpoint, state.object2, radius)

    carrying = state.carrying
    if carrying is None and settled and in1 and in2:
        return state, PrimitiveEvents(blocked=True)
    if carrying == 1 and in2:
        return state, PrimitiveEvents(blocked=True)
    if carrying == 2 and in1:
        return state, PrimitiveEvents(blocked=True)

    object1, object2 = state.object1, state.object2
    moved1_now = moved2_now = False
    if carrying == 1:
        object1 = geo.clamp(endpoint)
        moved1_now = True
        carrying = None
    elif carrying == 2:
        object2 = geo.clamp(endpoint)
        moved2_now = True
        carrying = None
    elif settled and in1:
        carrying = 1
    elif settled and in2:
        carrying = 2

    on_table = settled and geo.contains(endpoint)
    moved1 = state.moved1 or moved1_now
    moved2 = state.moved2 or moved2_now
    touch = (float(endpoint[0]), float(endpoint[1])) if on_table else None
    touches = state.touches + (touch,) if touch is not None else state.touches

    new_state = TableState(geometry=geo, object1=object1, object2=object2,
                           moved1=moved1, moved2=moved2, burst=state.burst,
                           touches=touches, carrying=carrying)

    burst = None
    maintained = None
    if moved1 and moved2 and not (state.moved1 and state.moved2):
        burst = burst_sound(new_state)
        new_state = replace(new_state, burst=burst)
    elif state.burst is not None and touch is not None and not (moved1_now or moved2_now):
        maintained = maintain_sound(new_state, touch)

    both = None
    if moved1 and moved2 and (moved1_now or moved2_now):
        both = ((float(object1[0]), float(object1[1])),
                (float(object2[0]), float(object2[1])))

    events = PrimitiveEvents(
        blocked=False,
        touch=touch,
        moved1=(float(object1[0]), float(object1[1])) if moved1_now else None,
        moved2=(float(object2[0]), float(object2[1])) if moved2_now else None,
        both_positions=both,
        burst=burst,
        maintained=maintained,
    )
    return new_state, events
