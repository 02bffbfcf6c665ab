"""bowlroll: learn to extrapolate the trajectory of a ball rolling inside a
bowl from short rendered video clips, with least-squares and state-input
baselines for comparison."""

__version__ = "0.1.0"

from .autodiff import Tensor, ParameterSet, backward_pass, finite_difference_check
from .config import ExperimentConfig, desk_config, paper_scale_config, smoke_config
from .models import VariantConfig, VARIANTS

__all__ = [
    "Tensor", "ParameterSet", "backward_pass", "finite_difference_check",
    "ExperimentConfig", "desk_config", "paper_scale_config", "smoke_config",
    "VariantConfig", "VARIANTS", "__version__",
]
