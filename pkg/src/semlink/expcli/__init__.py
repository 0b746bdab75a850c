from .config import ConfigError, ExperimentConfig
from .pipeline import CHECKPOINTS, build_data, run_pipeline
from .plotdata import emit_plotdata
from .schemes import CLASSICAL_SCHEMES, ModelBundle, run_cell, scheme_names
from .sweep import run_sweep, verify_outputs

__all__ = [
    "ConfigError", "ExperimentConfig", "CHECKPOINTS", "build_data",
    "run_pipeline", "emit_plotdata", "CLASSICAL_SCHEMES", "ModelBundle",
    "run_cell", "scheme_names", "run_sweep", "verify_outputs",
]
