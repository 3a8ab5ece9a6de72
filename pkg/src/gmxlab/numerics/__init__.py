"""Numeric substrate: tensors, autodiff MLPs, optimizers, seeded streams.

Tensors are plain float64 numpy arrays; every op validates that its output
is finite (NaN/Inf aborts with the op name).
"""

from . import autodiff
from .autodiff import Node, backward, constant, softmax, stop_gradient
from .checkpoint import load_params, save_params
from .nn import (
    GradientRecord,
    LossSpec,
    MlpSpec,
    ModelBundle,
    forward,
    init_model,
    init_params,
    mlp_value,
    predict,
    value_and_grad,
)
from .optim import OptimizerConfig, OptimizerState, init_state, optimizer_step
from .rng import seeded_rng, substream, substream_seed

__all__ = [
    "autodiff",
    "Node",
    "backward",
    "constant",
    "softmax",
    "stop_gradient",
    "load_params",
    "save_params",
    "GradientRecord",
    "LossSpec",
    "MlpSpec",
    "ModelBundle",
    "forward",
    "init_model",
    "init_params",
    "mlp_value",
    "predict",
    "value_and_grad",
    "OptimizerConfig",
    "OptimizerState",
    "init_state",
    "optimizer_step",
    "seeded_rng",
    "substream",
    "substream_seed",
]
