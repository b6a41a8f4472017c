"""Minimal reverse-mode autodiff: tensors, layers, Adam, gradient checks."""

from . import ops
from .gradcheck import GradCheckReport, grad_check
from .optim import Adam
from .params import ParameterSet, load_parameters, save_parameters
from .tensor import Tensor, as_tensor, backward

__all__ = [
    "Tensor", "as_tensor", "backward", "ops", "Adam", "ParameterSet", "save_parameters",
    "load_parameters", "grad_check", "GradCheckReport",
]
