"""Layer containers holding parameters and running statistics."""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Iterator

import numpy as np

from evnat.nn import functional as F
from evnat.nn.tensor import Tensor, default_dtype, parameter
from evnat.rng import make_rng


class Module:
    """Base class: collects parameters, buffers and children by attribute scan."""

    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in getattr(self, "_buffers", ()):
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((k, p.data) for k, p in self.named_parameters())
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)[:3]}")
        for k, p in params.items():
            if p.shape != np.shape(state[k]):
                raise ValueError(f"{k}: shape {np.shape(state[k])} != {p.shape}")
            p.data = np.array(state[k], dtype=p.dtype)
        for k, buf in buffers.items():
            buf[...] = state[k]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def _he_normal(rng, shape, fan_in):
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, bias=True, rng=None):
        rng = rng or make_rng(0)
        k = kernel_size
        self.stride, self.padding = stride, padding
        self.weight = parameter(_he_normal(rng, (out_channels, in_channels, k, k), in_channels * k * k))
        self.bias = parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, bias=True, rng=None):
        rng = rng or make_rng(0)
        k = kernel_size
        self.stride, self.padding = stride, padding
        self.weight = parameter(_he_normal(rng, (in_channels, out_channels, k, k), in_channels * k * k))
        self.bias = parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x):
        return F.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    """Dense layer stored as a 1x1 convolution kernel of shape (out, in, 1, 1)."""

    def __init__(self, in_features, out_features, bias=True, rng=None):
        rng = rng or make_rng(0)
        self.weight = parameter(_he_normal(rng, (out_features, in_features, 1, 1), in_features))
        self.bias = parameter(np.zeros(out_features)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class BatchNorm2d(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.momentum, self.eps = momentum, eps
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels, dtype=default_dtype())
        self.running_var = np.ones(channels, dtype=default_dtype())

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class LeakyReLU(Module):
    def __init__(self, slope=0.2):
        self.slope = slope

    def forward(self, x):
        return F.leaky_relu(x, self.slope)


class ReLU(Module):
    def forward(self, x):
        return F.relu(x)


class Tanh(Module):
    def forward(self, x):
        return F.tanh(x)


class Sigmoid(Module):
    def forward(self, x):
        return F.sigmoid(x)


class MaxPool2d(Module):
    def __init__(self, k=2, stride=None):
        self.k, self.stride = k, stride or k

    def forward(self, x):
        return F.max_pool2d(x, self.k, self.stride)


class Dropout(Module):
    """Dropout with its own Philox stream, so masks are reproducible per seed."""

    def __init__(self, p=0.5, seed=0):
        self.p = p
        self.rng = make_rng(seed, "dropout")

    def forward(self, x):
        return F.dropout(x, self.p, self.rng, self.training)


class Flatten(Module):
    def forward(self, x):
        return x.flatten()


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)
