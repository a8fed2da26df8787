"""Multi-agent actor-critic training with learned, penalised communication gates."""
from .agent import PolicyNet
from .config import PRESETS, ConfigError, ExperimentConfig, preset
from .envs import make_env
from .experiment import RunAborted, audit, emit_plotdata, eval_checkpoint, run, sweep
from .gating import GateMode
from .trainer import TrainConfig, Trainer

__version__ = "0.1.0"

__all__ = [
    "PRESETS", "ConfigError", "ExperimentConfig", "GateMode", "PolicyNet", "RunAborted", "TrainConfig", "Trainer",
    "audit", "emit_plotdata", "eval_checkpoint", "make_env", "preset", "run", "sweep",
]
