"""Independent oracles shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np


def rel_error(analytic: float, numeric: float, floor: float = 1e-7) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_difference_check(loss_fn, params, n_coords, rng, h=1e-5):
    """Compare autodiff gradients with central differences at random coordinates.

    ``loss_fn()`` must rebuild the graph from the current ``param.data``
    and return a scalar Tensor. Coordinates are spread over all ``params``
    in proportion to their sizes (at least one each). Returns the list of
    relative errors.
    """
    loss = loss_fn()
    for p in params:
        p.grad = None
    loss.backward()
    grads = [p.grad.copy() for p in params]
    sizes = np.array([p.data.size for p in params], dtype=float)
    owners = list(range(len(params))) + list(
        rng.choice(len(params), size=max(0, n_coords - len(params)), p=sizes / sizes.sum())
    )
    errors = []
    for k in owners:
        p = params[k]
        idx = tuple(int(rng.integers(0, s)) for s in p.shape)
        old = p.data[idx]
        p.data[idx] = old + h
        plus = loss_fn().item()
        p.data[idx] = old - h
        minus = loss_fn().item()
        p.data[idx] = old
        errors.append(rel_error(float(grads[k][idx]), (plus - minus) / (2 * h)))
    return errors


def conv2d_direct(x, w, b, stride, padding):
    """Direct-summation cross-correlation with explicit loops."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((n, o, oh, ow), dtype=np.float64)
    for ni in range(n):
        for oi in range(o):
            for yi in range(oh):
                for xi in range(ow):
                    acc = 0.0 if b is None else float(b[oi])
                    for ci in range(c):
                        for i in range(k):
                            for j in range(k):
                                acc += float(xp[ni, ci, yi * stride + i, xi * stride + j]) * float(w[oi, ci, i, j])
                    out[ni, oi, yi, xi] = acc
    return out


def conv_transpose2d_scatter(x, w, b, stride, padding):
    """Scatter-add oracle: every input pixel stamps the kernel onto the output."""
    n, c, h, wd = x.shape
    _, o, k, _ = w.shape
    full_h = (h - 1) * stride + k
    full_w = (wd - 1) * stride + k
    full = np.zeros((n, o, full_h, full_w), dtype=np.float64)
    for ni in range(n):
        for ci in range(c):
            for yi in range(h):
                for xi in range(wd):
                    v = float(x[ni, ci, yi, xi])
                    for oi in range(o):
                        for i in range(k):
                            for j in range(k):
                                full[ni, oi, yi * stride + i, xi * stride + j] += v * float(w[ci, oi, i, j])
    out = full[:, :, padding : full_h - padding, padding : full_w - padding]
    if b is not None:
        out = out + np.asarray(b, dtype=np.float64)[None, :, None, None]
    return out


def random_conv_case(rng, transpose=False):
    """A random small (input, weight, bias, stride, padding) with integral output."""
    while True:
        n = int(rng.integers(1, 3))
        c = int(rng.integers(1, 4))
        o = int(rng.integers(1, 4))
        k = int(rng.integers(1, 5))
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, min(k, 3)))
        h = int(rng.integers(max(1, k - 2 * padding), 8))
        w = int(rng.integers(max(1, k - 2 * padding), 8))
        if transpose:
            if (h - 1) * stride + k - 2 * padding < 1 or (w - 1) * stride + k - 2 * padding < 1:
                continue
            wshape = (c, o, k, k)
        else:
            if (h + 2 * padding - k) % stride or (w + 2 * padding - k) % stride:
                continue
            wshape = (o, c, k, k)
        x = rng.normal(size=(n, c, h, w))
        wt = rng.normal(size=wshape)
        b = rng.normal(size=o)
        return x, wt, b, stride, padding


# -- finite-difference cases --------------------------------------------------
#
# Each builder runs under float64_mode and returns ``(loss_fn, params)``.
# Inputs are placed away from kinks (|x| >= 0.1 for relu-like ops and abs,
# well separated values for max pooling) so central differences are valid.


def _away_from_zero(rng, shape, gap=0.1):
    v = rng.normal(size=shape)
    return np.sign(v) * (np.abs(v) + gap)


def _projected(out, rng_state):
    """Reduce an output to a scalar through a fixed random projection."""
    from evnat.nn import Tensor

    r = np.random.default_rng(rng_state).normal(size=out.shape)
    return (out * Tensor(r)).sum()


def op_cases():
    """Name -> builder(rng) for every differentiable op in the engine."""
    from evnat.nn import Tensor, concat, functional as F, parameter

    def unary(fn, gen=None):
        def build(rng):
            x = parameter(gen(rng) if gen else rng.normal(size=(2, 3, 4, 4)))
            return (lambda: _projected(fn(x), 1)), [x]
        return build

    def binary(fn, shape_b=(2, 3, 4, 4)):
        def build(rng):
            a = parameter(rng.normal(size=(2, 3, 4, 4)))
            b = parameter(rng.normal(size=shape_b) + 3.0)
            return (lambda: _projected(fn(a, b), 2)), [a, b]
        return build

    def conv(rng):
        x = parameter(rng.normal(size=(2, 3, 7, 7)))
        w = parameter(rng.normal(size=(4, 3, 3, 3)))
        b = parameter(rng.normal(size=4))
        return (lambda: _projected(F.conv2d(x, w, b, stride=2, padding=1), 3)), [x, w, b]

    def convt(rng):
        x = parameter(rng.normal(size=(2, 3, 3, 3)))
        w = parameter(rng.normal(size=(3, 2, 4, 4)))
        b = parameter(rng.normal(size=2))
        return (lambda: _projected(F.conv_transpose2d(x, w, b, stride=2, padding=1), 4)), [x, w, b]

    def linear(rng):
        x = parameter(rng.normal(size=(3, 5, 2, 2)))
        w = parameter(rng.normal(size=(4, 20, 1, 1)))
        b = parameter(rng.normal(size=4))
        return (lambda: _projected(F.linear(x.flatten(), w, b), 5)), [x, w, b]

    def bn(training):
        def build(rng):
            x = parameter(rng.normal(size=(3, 2, 3, 3)) * 2 + 1)
            g = parameter(rng.normal(size=2) + 1.5)
            b = parameter(rng.normal(size=2))
            rm, rv = rng.normal(size=2), rng.random(2) + 0.5

            def loss():
                return _projected(F.batch_norm(x, g, b, rm.copy(), rv.copy(), training), 6)
            return loss, [x, g, b]
        return build

    def pool(rng):
        x = parameter((rng.permutation(2 * 2 * 6 * 6) * 0.1).reshape(2, 2, 6, 6))
        return (lambda: _projected(F.max_pool2d(x, 2), 7)), [x]

    def drop(rng):
        x = parameter(rng.normal(size=(2, 3, 4, 4)))
        return (lambda: _projected(F.dropout(x, 0.4, 99), 8)), [x]

    def bce(rng):
        p = parameter(rng.uniform(0.05, 0.95, size=(2, 1, 3, 3)))
        t = rng.random((2, 1, 3, 3))
        return (lambda: F.bce(p, t)), [p]

    def l1(rng):
        a = parameter(rng.normal(size=(2, 3, 3, 3)))
        b = parameter(a.data + _away_from_zero(rng, a.shape))
        return (lambda: F.l1(a, b)), [a, b]

    def xent(rng):
        z = parameter(rng.normal(size=(5, 7)))
        labels = rng.integers(0, 7, size=5)
        return (lambda: F.softmax_cross_entropy(z, labels)), [z]

    def cat(rng):
        a = parameter(rng.normal(size=(2, 2, 3, 3)))
        b = parameter(rng.normal(size=(2, 3, 3, 3)))
        return (lambda: _projected(concat([a, b], axis=1), 9)), [a, b]

    return {
        "add": binary(lambda a, b: a + b, (3, 1, 1)),
        "sub": binary(lambda a, b: a - b),
        "mul": binary(lambda a, b: a * b, (1, 3, 4, 4)),
        "neg": unary(lambda x: -x),
        "truediv": unary(lambda x: x / 3.0),
        "sum_axis": unary(lambda x: x.sum(axis=(0, 2), keepdims=True)),
        "mean": unary(lambda x: x.mean(axis=1)),
        "reshape": unary(lambda x: x.reshape(6, 16)),
        "abs": unary(lambda x: x.abs(), lambda r: _away_from_zero(r, (2, 3, 4, 4))),
        "concat": cat,
        "conv2d": conv,
        "conv_transpose2d": convt,
        "linear": linear,
        "batch_norm_train": bn(True),
        "batch_norm_eval": bn(False),
        "relu": unary(F.relu, lambda r: _away_from_zero(r, (2, 3, 4, 4))),
        "leaky_relu": unary(lambda x: F.leaky_relu(x, 0.2), lambda r: _away_from_zero(r, (2, 3, 4, 4))),
        "tanh": unary(F.tanh),
        "sigmoid": unary(F.sigmoid),
        "max_pool2d": pool,
        "dropout": drop,
        "bce": bce,
        "l1": l1,
        "softmax_cross_entropy": xent,
    }


def _reset_dropout(module, seed):
    from evnat.nn import Dropout
    from evnat.rng import make_rng

    for i, m in enumerate(module.modules()):
        if isinstance(m, Dropout):
            m.rng = make_rng(seed, "gradcheck", i)


def classifier_case(rng):
    """conv -> bn -> leaky -> pool -> dropout (x3) -> dense -> cross-entropy."""
    from evnat.classifier import ClassifierConfig, build_classifier
    from evnat.nn import functional as F, parameter

    cfg = ClassifierConfig(input_channels=3, num_classes=4, conv_filters=(3, 4, 4), image_size=8)
    model = build_classifier(cfg, seed=int(rng.integers(1 << 30)))
    x = parameter(rng.normal(size=(4, 3, 8, 8)))
    labels = rng.integers(0, 4, size=4)

    def loss():
        _reset_dropout(model, 1)
        return F.softmax_cross_entropy(model(x), labels)
    return loss, [x] + model.parameters()


def gan_case(rng):
    """U-Net generator feeding a PatchGAN discriminator: adversarial + L1 loss."""
    from evnat.nn import parameter
    from evnat.pix2pix import DiscriminatorConfig, GeneratorConfig, build_discriminator, build_generator, g_loss

    G = build_generator(GeneratorConfig(base_filters=4, depth=3, image_size=16, max_filters=16), seed=3)
    D = build_discriminator(DiscriminatorConfig(base_filters=4, num_layers=2, image_size=16), seed=4)
    # larger weights than the GAN init keep gradients well above round-off
    for p in G.parameters() + D.parameters():
        if p.ndim == 4:
            p.data = rng.normal(0.0, 0.3, p.shape)
    x = parameter(rng.normal(size=(2, 1, 16, 16)))
    y = parameter(rng.uniform(-1, 1, size=(2, 3, 16, 16)))

    def loss():
        _reset_dropout(G, 2)
        return g_loss(D, x, y, G(x), lambda_l1=1.0)
    return loss, [x] + G.parameters() + D.parameters()
