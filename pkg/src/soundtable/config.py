"""Experiment configuration: profiles, variants, and file round-trips."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .motion import ArmModel, DmpConstants
from .outcomes import OutcomeSpace, build_spaces
from .table import TableGeometry

PROFILES = ("simulation", "physical", "left-arm")
VARIANTS = ("RandomAction", "IM-PB", "SGIM-ACTS", "SGIM-PB", "SGIM-TL")


@dataclass
class ArmConfig:
    link_lengths: list[float] = field(default_factory=lambda: [0.30] * 7)
    base_position: list[float] = field(default_factory=lambda: [0.7, -0.6])
    base_orientation: float = float(np.pi / 2)
    joint_limit: float = 1.0
    initial_posture: list[float] = field(default_factory=lambda: [0.0] * 7)

    def build(self) -> ArmModel:
        return ArmModel(link_lengths=np.asarray(self.link_lengths, dtype=float),
                        base_position=np.asarray(self.base_position, dtype=float),
                        base_orientation=self.base_orientation,
                        joint_min=np.full(7, -self.joint_limit),
                        joint_max=np.full(7, self.joint_limit),
                        initial_posture=np.asarray(self.initial_posture, dtype=float))

    def mirrored(self, axis_x: float) -> "ArmConfig":
        """The same arm mounted on the other side of the table's midline."""
        base = [2 * axis_x - self.base_position[0], self.base_position[1]]
        return dataclasses.replace(self, base_position=base)


@dataclass
class DmpConfig:
    spring: float = 100.0
    damping: float = 20.0
    phase_decay: float = 4.0
    tau: float = 1.0
    dt: float = 0.001
    duration: float = 1.0
    basis_center: float = 0.5
    basis_width: float = 10.0
    weight_bound: float = 50.0

    def build(self) -> DmpConstants:
        return DmpConstants(spring=self.spring, damping=self.damping,
                            phase_decay=self.phase_decay, tau=self.tau, dt=self.dt,
                            duration=self.duration,
                            basis_centers=(self.basis_center,),
                            basis_widths=(self.basis_width,))


@dataclass
class TableConfig:
    origin: list[float] = field(default_factory=lambda: [0.0, 0.0])
    width: float = 1.0
    height: float = 1.0
    object_radius: float = 0.04
    object1_start: list[float] = field(default_factory=lambda: [0.35, 0.65])
    object2_start: list[float] = field(default_factory=lambda: [0.65, 0.65])
    selection_speed_limit: float = 0.01

    def build(self) -> TableGeometry:
        return TableGeometry(origin=tuple(self.origin), width=self.width,
                             height=self.height, object_radius=self.object_radius,
                             object1_start=tuple(self.object1_start),
                             object2_start=tuple(self.object2_start),
                             selection_speed_limit=self.selection_speed_limit)


@dataclass
class LearnerConfig:
    max_sequence_length: int = 8
    knn: int = 5
    gamma: float = 1.2
    d_thres: float = 5.0
    epsilon: float = 0.05
    split_threshold: int = 80
    interest_window: int = 20
    competence_cell: float = 0.05
    resolve_depth: int = 3
    transfer_length_default: int = 4
    sigma_demo: float = 0.05
    sigma_local_max: float = 0.2
    sigma_local_scale: float = 0.25
    p_local_min: float = 0.1
    p_local_max: float = 0.9
    length_geometric_p: float = 0.5


@dataclass
class ExperimentConfig:
    profile: str = "simulation"
    variant: str = "SGIM-PB"
    seed: int = 0
    iterations: int = 5000
    eval_every: int = 250
    testbench_seed: int = 20_000
    testbench_per_space: int = 500
    teacher_seed: int = 77_000
    transfer_lump: str | None = None
    arm: ArmConfig = field(default_factory=ArmConfig)
    dmp: DmpConfig = field(default_factory=DmpConfig)
    table: TableConfig = field(default_factory=TableConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}, expected one of {PROFILES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.variant == "SGIM-TL" and not self.transfer_lump:
            raise ValueError("SGIM-TL requires a transfer_lump path")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.eval_every <= 0:
            raise ValueError("eval_every must be positive")

    @property
    def include_maintained(self) -> bool:
        return self.profile == "physical"

    def build_spaces(self) -> dict[int, OutcomeSpace]:
        return build_spaces(self.table.build(), self.include_maintained)

    def build_arm(self) -> ArmModel:
        arm_cfg = self.arm
        if self.profile == "left-arm":
            axis = self.table.origin[0] + self.table.width / 2.0
            arm_cfg = arm_cfg.mirrored(axis)
        return arm_cfg.build()


def for_profile(profile: str, **overrides) -> ExperimentConfig:
    return ExperimentConfig(profile=profile, **overrides)


def _to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def _from_dict(data: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    nested = {"arm": ArmConfig, "dmp": DmpConfig, "table": TableConfig,
              "learner": LearnerConfig}
    kwargs = {}
    for key, value in data.items():
        if key in nested:
            sub_known = {f.name for f in dataclasses.fields(nested[key])}
            sub_unknown = set(value) - sub_known
            if sub_unknown:
                raise ValueError(f"unknown {key} fields: {sorted(sub_unknown)}")
            kwargs[key] = nested[key](**value)
        else:
            kwargs[key] = value
    return ExperimentConfig(**kwargs)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(_to_dict(cfg), sort_keys=False))


def load_config(path) -> ExperimentConfig:
    data = yaml.safe_load(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    return _from_dict(data)
