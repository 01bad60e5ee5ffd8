"""Optimization of bias-free ReLU MLPs in the space of basis-path values."""
__version__ = "0.1.0"

from .network import Architecture, Loss, backward, batch_gradient, forward, loss_value
from .optim import TrainConfig, gsgd_step, icr_gradients, sgd_step, train, weight_allocation
from .paths import Path, enumerate_paths, exact_rank, path_sum_output, structure_matrix
from .scaling import apply_scaling, check_equivalence
from .skeleton import SkeletonPlan, build_skeleton, verify_basis

__all__ = [
    "Architecture", "Loss", "Path", "SkeletonPlan", "TrainConfig",
    "apply_scaling", "backward", "batch_gradient", "build_skeleton", "check_equivalence",
    "enumerate_paths", "exact_rank", "forward", "gsgd_step", "icr_gradients", "loss_value",
    "path_sum_output", "sgd_step", "structure_matrix", "train", "verify_basis", "weight_allocation",
]
