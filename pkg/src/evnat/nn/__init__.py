"""Minimal reverse-mode autodiff with the layers the networks need."""

from evnat.nn import functional
from evnat.nn.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from evnat.nn.modules import (
    BatchNorm2d, Conv2d, ConvTranspose2d, Dropout, Flatten, LeakyReLU, Linear, MaxPool2d, Module,
    ReLU, Sequential, Sigmoid, Tanh,
)
from evnat.nn.optim import Adam, AdamState, adam_step
from evnat.nn.tensor import Tensor, as_tensor, concat, float64_mode, no_grad, parameter

__all__ = [
    "Adam", "AdamState", "BatchNorm2d", "Conv2d", "ConvTranspose2d", "Dropout", "Flatten", "LeakyReLU",
    "Linear", "MaxPool2d", "Module", "ReLU", "Sequential", "Sigmoid", "Tanh", "Tensor", "adam_step",
    "as_tensor", "concat", "decode_checkpoint", "encode_checkpoint", "float64_mode", "functional",
    "load_checkpoint", "no_grad", "parameter", "save_checkpoint",
]
