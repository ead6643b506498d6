"""Minimal tensor-network core: layers with hand-written backward passes,
a sequential container, parameter serialization, and gradient checking."""

from .gradcheck import check_function, check_layer, check_network, rel_err
from .layers import (BatchNorm2d, Conv2d, Dense, Dropout, Flatten,
                     GlobalAvgPool, Layer, LayerSpec, MaxPool2, ReLU,
                     ResidualBlock, SoftmaxCrossEntropy, col2im, im2col,
                     softmax)
from .network import Network, build_layers
from .params import ParamStore

__all__ = [
    "BatchNorm2d", "Conv2d", "Dense", "Dropout", "Flatten", "GlobalAvgPool",
    "Layer", "LayerSpec", "MaxPool2", "Network", "ParamStore", "ReLU",
    "ResidualBlock", "SoftmaxCrossEntropy", "build_layers", "check_function",
    "check_layer", "check_network", "col2im", "im2col", "rel_err", "softmax",
]
