"""Small float64 network engine: dense/conv2d/relu stacks, backprop, SGD/Adam."""
from __future__ import annotations

from ..errors import ConfigurationError
from .checkpoint import dumps, load, loads, save
from .gradcheck import gradient_check, numeric_gradient, relative_error
from .layers import LayerSpec, conv2d, dense, relu
from .network import (DuelingNetwork, Module, Network, TwoStreamNetwork, aggregate_dueling,
                      build, conv_two_stream, mlp, mlp_specs)
from .optim import OptimizerState, optimizer_step


def forward(net: Module, x):
    return net.forward(x)


def backward(net: Module, x, upstream):
    return net.backward(x, upstream)


def copy_params(src: Module, dst: Module) -> Module:
    if not src.same_architecture(dst):
        raise ConfigurationError("cannot copy parameters between different architectures")
    dst.params[...] = src.params
    return dst


__all__ = [
    "DuelingNetwork", "LayerSpec", "Module", "Network", "OptimizerState", "TwoStreamNetwork",
    "aggregate_dueling", "backward", "build", "conv2d", "conv_two_stream", "copy_params",
    "dense", "dumps", "forward", "gradient_check", "load", "loads", "mlp", "mlp_specs",
    "numeric_gradient", "optimizer_step", "relative_error", "relu", "save",
]
