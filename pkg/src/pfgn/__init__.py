"""Point-cloud flow-matching, diffusion and regression PointNets for flow fields."""

from .autodiff import Tape, Tensor, backward
from .baseline import BaselineModel
from .data import FlowConfig, GeometrySpec, NormStats, build_dataset, oracle_fields, sample_cloud
from .diffusion import DiffusionModel, build_schedule
from .evaluation import evaluate_model, pressure_forces, relative_l2, robustness_eval
from .flow import FlowMatchingModel
from .pointnet import build, count_parameters, forward
from .training import TrainConfig, Trainer

__version__ = "0.1.0"
