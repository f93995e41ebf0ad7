"""Attempt generators: autonomous exploration and teacher mimicry.

Autonomous strategies stochastically mix random sampling with local
perturbation of the best retrieved neighbour; the closer the nearest
neighbour, the likelier and tighter the local move.  Teachers answer a goal
with either a demonstrated action or an on-the-fly task decomposition; the
learner replays a teacher's answer verbatim the first time it consults one
for a region and explores around it afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .memory import EpisodicMemory, ProcedureRecord, load_procedures
from .motion import ArmModel, N_JOINTS
from .outcomes import (BOTH_OBJECTS, BURST, MAINTAINED, OBJECT1, OBJECT2, TOUCH,
                       Outcome, OutcomeSpace, Procedure, distance)
from .table import TableGeometry, TableState, burst_sound

AUTON_COST = 1.0
PROCEDURE_TEACHER_COST = 5.0
ACTION_TEACHER_COST = 10.0


@dataclass(frozen=True)
class StrategyConfig:
    id: str
    kind: str  # random-action | auton-action | auton-procedure | mimic-action | mimic-procedure
    cost: float
    teacher: str | None = None

    def __post_init__(self):
        if self.cost < 1.0:
            raise ValueError("strategy cost must be at least 1")


@dataclass(frozen=True)
class ExplorationParams:
    """Shared knobs of the attempt generators."""

    joint_min: np.ndarray
    joint_max: np.ndarray
    weight_bound: float
    max_sequence_length: int = 8
    d_thres: float = 5.0
    p_local_min: float = 0.1
    p_local_max: float = 0.9
    sigma_local_max: float = 0.2
    sigma_local_scale: float = 0.25
    sigma_demo: float = 0.05
    length_geometric_p: float = 0.5

    @property
    def param_lower(self) -> np.ndarray:
        vec = np.empty(2 * N_JOINTS)
        vec[0::2] = -self.weight_bound
        vec[1::2] = self.joint_min
        return vec

    @property
    def param_upper(self) -> np.ndarray:
        vec = np.empty(2 * N_JOINTS)
        vec[0::2] = self.weight_bound
        vec[1::2] = self.joint_max
        return vec

    @property
    def param_range(self) -> np.ndarray:
        return self.param_upper - self.param_lower

    @classmethod
    def for_arm(cls, arm: ArmModel, weight_bound: float, **kwargs) -> "ExplorationParams":
        return cls(joint_min=arm.joint_min, joint_max=arm.joint_max,
                   weight_bound=weight_bound, **kwargs)


def p_local(dist_nn: float, params: ExplorationParams) -> float:
    """Probability of the local-regression branch given the nearest distance."""
    raw = 1.0 - dist_nn / params.d_thres
    return float(np.clip(raw, params.p_local_min, params.p_local_max))


def random_sequence(rng: np.random.Generator, params: ExplorationParams) -> np.ndarray:
    length = min(int(rng.geometric(params.length_geometric_p)), params.max_sequence_length)
    mat = rng.uniform(params.param_lower, params.param_upper, size=(length, 2 * N_JOINTS))
    return mat


def _perturb_action(action: np.ndarray, sigma_fraction: float,
                    rng: np.random.Generator, params: ExplorationParams) -> np.ndarray:
    noise = rng.normal(0.0, 1.0, size=action.shape) * (sigma_fraction * params.param_range)
    return np.clip(action + noise, params.param_lower, params.param_upper)


def _weighted_regression(points: np.ndarray, targets: np.ndarray,
                         weights: np.ndarray, at: np.ndarray) -> np.ndarray:
    """Locally weighted linear prediction of targets at a query point."""
    total = weights.sum()
    x_bar = weights @ points / total
    y_bar = weights @ targets / total
    xc = points - x_bar
    yc = targets - y_bar
    wxc = xc * weights[:, None]
    gram = xc.T @ wxc + 1e-8 * np.eye(points.shape[1])
    coef = np.linalg.solve(gram, wxc.T @ yc)
    return y_bar + (at - x_bar) @ coef


def _regress_action(neighbours, goal_point: np.ndarray,
                    rng: np.random.Generator, params: ExplorationParams,
                    sigma: float) -> np.ndarray:
    """Local regression over same-length neighbours, plus exploration noise.

    Interpolating the parameters toward the requested point is what lets
    retrieval-misses shrink over attempts; a lone neighbour degenerates to
    a perturbation of it.
    """
    best = neighbours[0]
    peers = [n for n in neighbours if n.length == best.length]
    if len(peers) < 2:
        return _perturb_action(best.action, sigma, rng, params)
    points = np.array([n.outcome_point for n in peers])
    targets = np.array([n.action.reshape(-1) for n in peers])
    weights = 1.0 / (np.array([n.dist for n in peers]) + 1e-6)
    flat = _weighted_regression(points, targets, weights, goal_point)
    action = flat.reshape(best.action.shape)
    action = np.clip(action, params.param_lower, params.param_upper)
    return _perturb_action(action, sigma, rng, params)


def explore_action(goal: Outcome, memory: EpisodicMemory, rng: np.random.Generator,
                   params: ExplorationParams) -> np.ndarray:
    """Goal-directed action optimization: random draw or local regression."""
    neighbours = memory.nearest_actions(goal)
    if not neighbours:
        return random_sequence(rng, params)
    dist_nn = min(n.dist for n in neighbours)
    if rng.random() < p_local(dist_nn, params):
        # the scale maps outcome-space distances to parameter-space noise;
        # raw joint-range fractions overshoot the gap they should close
        sigma = min(params.sigma_local_max, dist_nn) * params.sigma_local_scale
        goal_point = memory.spaces[goal.space_id].normalize(goal.values)
        return _regress_action(neighbours, goal_point, rng, params, sigma)
    return random_sequence(rng, params)


def enabled_pairs(spaces: dict[int, OutcomeSpace]) -> list[tuple[int, int]]:
    ids = sorted(spaces)
    return [(i, j) for i in ids for j in ids]


def random_procedure(spaces: dict[int, OutcomeSpace], rng: np.random.Generator) -> Procedure:
    pairs = enabled_pairs(spaces)
    i, j = pairs[int(rng.integers(len(pairs)))]
    first = Outcome(i, rng.uniform(spaces[i].lower, spaces[i].upper))
    second = Outcome(j, rng.uniform(spaces[j].lower, spaces[j].upper))
    return Procedure(first, second)


def perturb_procedure(proc: Procedure, sigma_fraction: float,
                      spaces: dict[int, OutcomeSpace],
                      rng: np.random.Generator) -> Procedure:
    """Gaussian move of both component coordinates; subspace pair preserved."""
    parts = []
    for comp in (proc.first, proc.second):
        sp = spaces[comp.space_id]
        span = sp.upper - sp.lower
        values = comp.values + rng.normal(0.0, 1.0, sp.dim) * (sigma_fraction * span)
        parts.append(Outcome(comp.space_id, np.clip(values, sp.lower, sp.upper)))
    return Procedure(parts[0], parts[1])


def _regress_procedure(neighbours, goal_point: np.ndarray,
                       spaces: dict[int, OutcomeSpace],
                       rng: np.random.Generator, params: ExplorationParams,
                       sigma: float) -> Procedure:
    """Local regression of decomposition coordinates over same-pair
    neighbours, plus exploration noise; the subspace pair is preserved."""
    best = neighbours[0].record.procedure
    pair = best.space_pair
    peers = [n for n in neighbours if n.record.procedure.space_pair == pair]
    if len(peers) < 2:
        return perturb_procedure(best, sigma, spaces, rng)
    sp_first, sp_second = spaces[pair[0]], spaces[pair[1]]
    points = np.array([n.reached_point for n in peers])
    targets = np.array([
        np.concatenate([sp_first.normalize(n.record.procedure.first.values),
                        sp_second.normalize(n.record.procedure.second.values)])
        for n in peers])
    weights = 1.0 / (np.array([n.dist for n in peers]) + 1e-6)
    flat = np.clip(_weighted_regression(points, targets, weights, goal_point), 0.0, 1.0)
    first_vals = sp_first.lower + flat[:sp_first.dim] * (sp_first.upper - sp_first.lower)
    second_vals = sp_second.lower + flat[sp_first.dim:] * (sp_second.upper - sp_second.lower)
    proc = Procedure(Outcome(pair[0], first_vals), Outcome(pair[1], second_vals))
    return perturb_procedure(proc, sigma, spaces, rng)


def explore_procedure(goal: Outcome, memory: EpisodicMemory, rng: np.random.Generator,
                      params: ExplorationParams,
                      spaces: dict[int, OutcomeSpace]) -> Procedure:
    """Goal-directed procedure optimization over the decomposition space.

    Transferred records take part here (and only here), providing localities
    for exploration without touching evaluation or interest bookkeeping.
    """
    neighbours = memory.nearest_procedures(goal, include_transferred=True)
    if not neighbours:
        return random_procedure(spaces, rng)
    dist_nn = min(n.dist for n in neighbours)
    if rng.random() < p_local(dist_nn, params):
        sigma = min(params.sigma_local_max, dist_nn) * params.sigma_local_scale
        goal_point = memory.spaces[goal.space_id].normalize(goal.values)
        return _regress_procedure(neighbours, goal_point, spaces, rng, params, sigma)
    return random_procedure(spaces, rng)


# -- teachers --------------------------------------------------------------


class ActionTeacher:
    """Finite repertoire of demonstrated actions, each with its outcome."""

    def __init__(self, name: str, target_spaces: set[int],
                 demos: list[tuple[np.ndarray, Outcome]],
                 spaces: dict[int, OutcomeSpace]):
        if not demos:
            raise ValueError(f"teacher {name} has an empty repertoire")
        self.name = name
        self.target_spaces = set(target_spaces)
        self.demos = [(np.atleast_2d(np.asarray(a, dtype=float)), o) for a, o in demos]
        self.spaces = spaces

    def select_demo(self, goal: Outcome, rng: np.random.Generator
                    ) -> tuple[np.ndarray, Outcome]:
        """Demo whose outcome lies closest to the goal; off-domain requests
        get an arbitrary demo since no distance is defined across subspaces."""
        same = [(a, o) for a, o in self.demos if o.space_id == goal.space_id]
        if not same:
            return self.demos[int(rng.integers(len(self.demos)))]
        dists = [distance(o, goal, self.spaces) for _, o in same]
        return same[int(np.argmin(dists))]


def mimic_action(goal: Outcome, teacher: ActionTeacher, rng: np.random.Generator,
                 params: ExplorationParams, replay: bool) -> np.ndarray:
    demo_action, _ = teacher.select_demo(goal, rng)
    if replay:
        return demo_action.copy()
    return _perturb_action(demo_action, params.sigma_demo, rng, params)


class ProcedureTeacherBase:
    name: str
    space_id: int

    def propose(self, goal: Outcome, rng: np.random.Generator) -> Procedure:
        raise NotImplementedError


class RuleProcedureTeacher(ProcedureTeacherBase):
    """Synthesizes a decomposition for the exact requested goal.

    Requests outside the teacher's domain are answered with a decomposition
    for a goal of its own choosing, like an expert demonstrating what they
    know regardless of the question.
    """

    def __init__(self, name: str, space_id: int, geometry: TableGeometry,
                 spaces: dict[int, OutcomeSpace]):
        self.name = name
        self.space_id = space_id
        self.geometry = geometry
        self.spaces = spaces

    def propose(self, goal: Outcome, rng: np.random.Generator) -> Procedure:
        if goal.space_id != self.space_id:
            sp = self.spaces[self.space_id]
            goal = Outcome(self.space_id, rng.uniform(sp.lower, sp.upper))
        return self._rule(goal)

    def _rule(self, goal: Outcome) -> Procedure:
        geo = self.geometry
        if self.space_id == OBJECT1:
            return Procedure(Outcome(TOUCH, np.asarray(geo.object1_start, dtype=float)),
                             Outcome(TOUCH, goal.values.copy()))
        if self.space_id == OBJECT2:
            return Procedure(Outcome(TOUCH, np.asarray(geo.object2_start, dtype=float)),
                             Outcome(TOUCH, goal.values.copy()))
        if self.space_id == BOTH_OBJECTS:
            return Procedure(Outcome(OBJECT1, goal.values[:2].copy()),
                             Outcome(OBJECT2, goal.values[2:].copy()))
        if self.space_id == BURST:
            first, second = invert_burst(*goal.values, geometry=geo)
            return Procedure(Outcome(OBJECT1, first), Outcome(OBJECT2, second))
        if self.space_id == MAINTAINED:
            burst_goal = goal.values[:3].copy()
            sustain = float(goal.values[3])
            touch = _sustain_touch_point(self.geometry, burst_goal, sustain)
            return Procedure(Outcome(BURST, burst_goal), Outcome(TOUCH, touch))
        raise ValueError(f"no construction rule for subspace {self.space_id}")


def _sustain_touch_point(geometry: TableGeometry, burst_goal: np.ndarray,
                         sustain: float) -> np.ndarray:
    """A table point at the sustain-implied distance from the green target."""
    _, green = invert_burst(*burst_goal, geometry=geometry)
    radius = sustain * geometry.diagonal
    for angle in np.linspace(0.0, 2 * math.pi, 16, endpoint=False):
        candidate = green + radius * np.array([math.cos(angle), math.sin(angle)])
        if geometry.contains(candidate):
            return candidate
    return geometry.clamp(green + np.array([radius, 0.0]))


class RepertoireProcedureTeacher(ProcedureTeacherBase):
    """Finite list of demonstrated decompositions with their outcomes."""

    def __init__(self, name: str, space_id: int,
                 demos: list[tuple[Procedure, Outcome]],
                 spaces: dict[int, OutcomeSpace]):
        if not demos:
            raise ValueError(f"teacher {name} has an empty repertoire")
        self.name = name
        self.space_id = space_id
        self.demos = demos
        self.spaces = spaces

    def propose(self, goal: Outcome, rng: np.random.Generator) -> Procedure:
        same = [(p, o) for p, o in self.demos if o.space_id == goal.space_id]
        if not same:
            return self.demos[int(rng.integers(len(self.demos)))][0]
        dists = [distance(o, goal, self.spaces) for _, o in same]
        return same[int(np.argmin(dists))][0]


def mimic_procedure(goal: Outcome, teacher: ProcedureTeacherBase,
                    rng: np.random.Generator, params: ExplorationParams,
                    spaces: dict[int, OutcomeSpace], replay: bool) -> Procedure:
    proposed = teacher.propose(goal, rng)
    if replay:
        return proposed
    return perturb_procedure(proposed, params.sigma_demo, spaces, rng)


# -- burst-sound inversion ---------------------------------------------------


def invert_burst(frequency: float, level: float, rhythm: float,
                 geometry: TableGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Object placement reproducing a requested burst sound.

    The first object must sit at a derived distance from its nearest corner,
    the second at derived polar coordinates from the first.  Both the corner
    and the sign of the angle are free, so candidates are scanned around each
    corner arc until the second object lands on the table; unrealizable
    requests fall back to the nearest clamped placement.
    """
    geo = geometry
    d_total = geo.diagonal
    r_min = 2.0 * geo.object_radius
    d_min = (1.0 - frequency) * d_total / 4.0
    r = r_min * (d_total / r_min) ** ((1.0 - level) / 2.0)
    phi_abs = (rhythm - 0.05) / 0.95 * math.pi

    corners = geo.corners
    center = np.asarray(geo.origin) + np.array([geo.width, geo.height]) / 2.0
    # scan the arc around each corner starting from the pure diagonal
    offsets = np.linspace(0.0, math.pi / 4, 17)
    thetas = [math.pi / 4]
    for off in offsets[1:]:
        thetas.extend([math.pi / 4 + off, math.pi / 4 - off])
    fallback = None
    for theta in thetas:
        for corner in corners:
            inward = np.sign(center - corner)
            blue = corner + d_min * np.array([inward[0] * math.cos(theta),
                                              inward[1] * math.sin(theta)])
            if not geo.contains(blue):
                continue
            if abs(float(np.min(np.linalg.norm(corners - blue, axis=1))) - d_min) > 1e-9:
                continue
            for sign in (1.0, -1.0):
                phi = sign * phi_abs
                green = blue + r * np.array([math.cos(phi), math.sin(phi)])
                if geo.contains(green):
                    return blue, green
                if fallback is None:
                    fallback = (blue, geo.clamp(green))
    if fallback is None:
        fallback = (center, geo.clamp(center + r * np.array([math.cos(phi_abs),
                                                             math.sin(phi_abs)])))
    return fallback


def verify_inversion(frequency: float, level: float, rhythm: float,
                     geometry: TableGeometry) -> float:
    """Forward-evaluation error of the inverted placement (for checks)."""
    blue, green = invert_burst(frequency, level, rhythm, geometry)
    state = TableState(geometry=geometry, object1=blue, object2=green,
                       moved1=True, moved2=True, burst=None, touches=())
    sound = burst_sound(state)
    return max(abs(sound.frequency - frequency), abs(sound.level - level),
               abs(sound.rhythm - rhythm))


# -- transfer lump -----------------------------------------------------------


def load_transfer_lump(path) -> list[ProcedureRecord]:
    """Procedure records to seed a learner with; flagged as transferred so
    they stay out of interest updates and evaluations."""
    return [ProcedureRecord(procedure=rec.procedure, reached=rec.reached,
                            length=rec.length, transferred=True)
            for rec in load_procedures(path)]
