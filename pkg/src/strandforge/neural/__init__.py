"""Differentiable tensor core, network definitions, losses, and training."""

from . import layers, losses, nets, tensor, train
from .gradcheck import GradCheckReport, grad_check
from .losses import LossWeights
from .nets import build_pair, forward, infer_shapes, init_params, spec_hash
from .tensor import Tensor, grad_of, no_grad
from .train import Adam, TrainHyper, TrainingDiverged, load_weights, save_weights
from .train import train as train_pair

__all__ = [
    "layers", "losses", "nets", "tensor", "train",
    "GradCheckReport", "grad_check", "LossWeights",
    "build_pair", "forward", "infer_shapes", "init_params", "spec_hash",
    "Tensor", "grad_of", "no_grad",
    "Adam", "TrainHyper", "TrainingDiverged", "load_weights", "save_weights", "train_pair",
]
