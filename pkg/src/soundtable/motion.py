"""Joint-space motion primitives and the planar arm that executes them.

Each primitive drives all seven joints with an independent one-dimensional
second-order attractor toward a goal angle, shaped by a phase-gated forcing
term.  A compound action chains primitives: each one starts from the joint
state where the previous one ended.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_JOINTS = 7
PARAMS_PER_PRIMITIVE = 2 * N_JOINTS


class SequenceTooLongError(ValueError):
    """Raised when a compound action exceeds the configured length bound."""


@dataclass(frozen=True)
class DmpConstants:
    """Integration constants shared by every primitive of an experiment."""

    spring: float = 100.0
    damping: float = 20.0  # 2*sqrt(spring): critically damped
    phase_decay: float = 4.0
    tau: float = 1.0
    dt: float = 0.001
    duration: float = 1.0
    basis_centers: tuple[float, ...] = (0.5,)
    basis_widths: tuple[float, ...] = (10.0,)

    def __post_init__(self):
        if not (self.spring > 0 and self.damping > 0 and self.phase_decay > 0
                and self.tau > 0):
            raise ValueError("spring, damping, phase_decay and tau must be positive")
        if not 0 < self.dt < self.duration:
            raise ValueError("dt must lie in (0, duration)")
        if len(self.basis_centers) != len(self.basis_widths):
            raise ValueError("one width per basis center required")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class DmpParams:
    """One primitive: a forcing weight and a goal angle per joint."""

    weights: np.ndarray
    goals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "goals", np.asarray(self.goals, dtype=float))
        if self.weights.shape != (N_JOINTS,) or self.goals.shape != (N_JOINTS,):
            raise ValueError(f"expected {N_JOINTS} (weight, goal) pairs")

    def to_vector(self) -> np.ndarray:
        """Interleaved (w_0, g_0, ..., w_6, g_6) layout."""
        vec = np.empty(PARAMS_PER_PRIMITIVE)
        vec[0::2] = self.weights
        vec[1::2] = self.goals
        return vec

    @classmethod
    def from_vector(cls, vec) -> "DmpParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (PARAMS_PER_PRIMITIVE,):
            raise ValueError(f"expected a {PARAMS_PER_PRIMITIVE}-vector")
        return cls(weights=vec[0::2].copy(), goals=vec[1::2].copy())


@dataclass(frozen=True)
class ActionSequence:
    """Ordered chain of primitives executed without resetting the arm."""

    primitives: tuple[DmpParams, ...]

    def __post_init__(self):
        if len(self.primitives) < 1:
            raise ValueError("an action needs at least one primitive")

    def __len__(self) -> int:
        return len(self.primitives)

    def to_matrix(self) -> np.ndarray:
        return np.stack([p.to_vector() for p in self.primitives])

    @classmethod
    def from_matrix(cls, mat) -> "ActionSequence":
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        return cls(tuple(DmpParams.from_vector(row) for row in mat))


@dataclass(frozen=True)
class ArmModel:
    """Planar revolute chain whose tip lives in the table plane."""

    link_lengths: np.ndarray
    base_position: np.ndarray
    base_orientation: float
    joint_min: np.ndarray
    joint_max: np.ndarray
    initial_posture: np.ndarray

    def __post_init__(self):
        for name in ("link_lengths", "base_position", "joint_min", "joint_max",
                     "initial_posture"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.link_lengths.shape != (N_JOINTS,):
            raise ValueError(f"expected {N_JOINTS} link lengths")
        if np.any(self.joint_min >= self.joint_max):
            raise ValueError("joint limits must be nondegenerate")
        if np.any(self.initial_posture < self.joint_min) or \
                np.any(self.initial_posture > self.joint_max):
            raise ValueError("initial posture violates joint limits")

    def forward_kinematics(self, joints) -> np.ndarray:
        """Tip position (x, y) in the table frame for one joint vector."""
        angles = self.base_orientation + np.cumsum(np.asarray(joints, dtype=float))
        x = self.base_position[0] + np.sum(self.link_lengths * np.cos(angles))
        y = self.base_position[1] + np.sum(self.link_lengths * np.sin(angles))
        return np.array([x, y])

    def tip_path(self, joint_trajectory: np.ndarray) -> np.ndarray:
        """Vectorized forward kinematics over a (steps, 7) trajectory."""
        angles = self.base_orientation + np.cumsum(joint_trajectory, axis=1)
        xs = self.base_position[0] + (np.cos(angles) @ self.link_lengths)
        ys = self.base_position[1] + (np.sin(angles) @ self.link_lengths)
        return np.column_stack([xs, ys])


@dataclass(frozen=True)
class Trajectory:
    """Sampled joint positions of one primitive, start state included."""

    positions: np.ndarray  # (n_steps + 1, N_JOINTS)
    limit_clamped: bool

    @property
    def endpoint(self) -> np.ndarray:
        return self.positions[-1]


@dataclass(frozen=True)
class PrimitiveRollout:
    trajectory: Trajectory
    tip_path: np.ndarray  # (n_steps + 1, 2)
    tip_end_speed: float  # m/s over the final integration step

    @property
    def tip_endpoint(self) -> np.ndarray:
        return self.tip_path[-1]


def forcing_term(weights: np.ndarray, phase: float, consts: DmpConstants) -> np.ndarray:
    """Basis-weighted forcing, gated by the decaying phase variable."""
    centers = np.asarray(consts.basis_centers)
    widths = np.asarray(consts.basis_widths)
    psi = np.exp(-widths * (phase - centers) ** 2)
    # One weight per joint and per basis; with a single basis the psi factors
    # cancel but the general form is kept for configurability.
    numer = np.outer(weights, psi * phase).sum(axis=1)
    return numer / psi.sum()


_PROPAGATOR_CACHE: dict[tuple, tuple[np.ndarray, ...]] = {}


def _propagators(consts: DmpConstants) -> tuple[np.ndarray, ...]:
    """Per-step response coefficients of the Euler update.

    The update is linear in (x - g, v) with a forcing input w*(g - x0)*s_i,
    so the whole rollout collapses to x_i = g + A_i*(x0 - g) + B_i*w*(g - x0)
    (and likewise for the velocity) with coefficients that depend only on
    the constants.  Valid for a single basis function, where the forcing
    reduces to w * s.
    """
    key = (consts.spring, consts.damping, consts.phase_decay, consts.tau,
           consts.dt, consts.duration)
    cached = _PROPAGATOR_CACHE.get(key)
    if cached is not None:
        return cached
    h = consts.dt / consts.tau
    step = np.array([[1.0, h], [-consts.spring * h, 1.0 - consts.damping * h]])
    decay = 1.0 - consts.phase_decay * h
    n = consts.n_steps
    a = np.empty(n + 1)
    b = np.empty(n + 1)
    a_vel = np.empty(n + 1)
    b_vel = np.empty(n + 1)
    power = np.eye(2)
    accum = np.zeros((2, 2))
    phase_pow = 1.0
    a[0], b[0], a_vel[0], b_vel[0] = 1.0, 0.0, 0.0, 0.0
    for i in range(n):
        accum = step @ accum + phase_pow * np.eye(2)
        phase_pow *= decay
        power = step @ power
        a[i + 1] = power[0, 0]
        b[i + 1] = accum[0, 1] * h
        a_vel[i + 1] = power[1, 0]
        b_vel[i + 1] = accum[1, 1] * h
    _PROPAGATOR_CACHE[key] = (a, b, a_vel, b_vel)
    return a, b, a_vel, b_vel


def _integrate_loop(params: DmpParams, start_joints: np.ndarray, consts: DmpConstants,
                    joint_min, joint_max) -> Trajectory:
    x = start_joints.copy()
    x0 = start_joints.copy()
    v = np.zeros(N_JOINTS)
    s = 1.0
    g = params.goals
    k, d, tau = consts.spring, consts.damping, consts.tau
    positions = np.empty((consts.n_steps + 1, N_JOINTS))
    positions[0] = x
    clamped = False
    for i in range(1, consts.n_steps + 1):
        force = (g - x0) * forcing_term(params.weights, s, consts)
        accel = (k * (g - x) - d * v + force) / tau
        x = x + consts.dt * v / tau
        v = v + consts.dt * accel
        s = s + consts.dt * (-consts.phase_decay * s) / tau
        if joint_min is not None:
            bounded = np.clip(x, joint_min, joint_max)
            if not np.array_equal(bounded, x):
                clamped = True
                x = bounded
        positions[i] = x
    return Trajectory(positions=positions, limit_clamped=clamped)


try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is expected in the environment
    njit = None


def _tail_steps(positions, first_bad, goals, velocity, phase, force, spring,
                damping, tau, dt, h, decay, joint_min, joint_max):
    x = positions[first_bad - 1].copy()
    v = velocity
    s = phase
    for j in range(first_bad, len(positions)):
        accel = (spring * (goals - x) - damping * v + force * s) / tau
        x = x + h * v
        v = v + dt * accel
        s *= decay
        x = np.minimum(np.maximum(x, joint_min), joint_max)
        positions[j] = x


if njit is not None:
    _tail_steps = njit(cache=True)(_tail_steps)


def _clamped_tail(positions: np.ndarray, first_bad: int, params: DmpParams,
                  start: np.ndarray, consts: DmpConstants,
                  joint_min, joint_max) -> None:
    """Re-integrate in place from the first limit violation, saturating.

    Up to that step the unclamped and clamped dynamics coincide, so the
    closed-form head is recycled and only the tail is stepped.
    """
    _, _, a_vel, b_vel = _propagators(consts)
    g = params.goals
    disp = start - g
    wd = params.weights * disp
    i = first_bad
    velocity = a_vel[i - 1] * disp - b_vel[i - 1] * wd
    h = consts.dt / consts.tau
    decay = 1.0 - consts.phase_decay * h
    phase = decay ** (i - 1)
    _tail_steps(positions, i, g, velocity, phase, -wd, consts.spring,
                consts.damping, consts.tau, consts.dt, h, decay,
                np.asarray(joint_min, dtype=float), np.asarray(joint_max, dtype=float))


def integrate_primitive(params: DmpParams, start_joints, consts: DmpConstants,
                        joint_min=None, joint_max=None) -> Trajectory:
    """Explicit-Euler rollout of one primitive from a given joint state.

    Joint limits, when provided, saturate the position at every step; the
    trajectory is flagged rather than rejected so random exploration never
    aborts.  The single-basis case uses precomputed response coefficients,
    stepping explicitly only from the first saturation onward so the clamp
    feeds back into the dynamics.
    """
    start = np.array(start_joints, dtype=float)
    if len(consts.basis_centers) == 1:
        a, b, _, _ = _propagators(consts)
        g = params.goals
        disp = start - g
        positions = g[None, :] + np.outer(a, disp) - np.outer(b, params.weights * disp)
        positions[0] = start  # keep the hand-off state bit-exact for chaining
        if joint_min is None:
            return Trajectory(positions=positions, limit_clamped=False)
        bad = np.any((positions < joint_min) | (positions > joint_max), axis=1)
        if not bad.any():
            return Trajectory(positions=positions, limit_clamped=False)
        _clamped_tail(positions, int(np.argmax(bad)), params, start, consts,
                      joint_min, joint_max)
        return Trajectory(positions=positions, limit_clamped=True)
    return _integrate_loop(params, start, consts, joint_min, joint_max)


def execute_sequence(seq: ActionSequence, arm: ArmModel, consts: DmpConstants,
                     max_sequence_length: int = 8) -> list[PrimitiveRollout]:
    """Run a compound action: primitive k+1 starts where primitive k ended."""
    if len(seq) > max_sequence_length:
        raise SequenceTooLongError(
            f"sequence of {len(seq)} primitives exceeds bound {max_sequence_length}")
    rollouts = []
    joints = arm.initial_posture.copy()
    for prim in seq.primitives:
        traj = integrate_primitive(prim, joints, consts,
                                   joint_min=arm.joint_min, joint_max=arm.joint_max)
        tips = arm.tip_path(traj.positions)
        speed = float(np.linalg.norm(tips[-1] - tips[-2]) / consts.dt)
        rollouts.append(PrimitiveRollout(trajectory=traj, tip_path=tips,
                                         tip_end_speed=speed))
        joints = traj.endpoint
    return rollouts
