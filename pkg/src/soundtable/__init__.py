"""Curiosity-driven multi-task skill learning on a simulated sound table."""

from .config import ExperimentConfig, load_config, save_config
from .learner import Learner, build_teachers, variant_strategies
from .memory import EpisodicMemory, EpisodeRecord, ProcedureRecord
from .outcomes import Outcome, Procedure, build_spaces, sample_testbench
from .table import TableGeometry, TableState

__all__ = [
    "ExperimentConfig", "load_config", "save_config",
    "Learner", "build_teachers", "variant_strategies",
    "EpisodicMemory", "EpisodeRecord", "ProcedureRecord",
    "Outcome", "Procedure", "build_spaces", "sample_testbench",
    "TableGeometry", "TableState",
]
