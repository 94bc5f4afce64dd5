"""Layer classes wrapping the functional kernels in ops.py.

Layers own their Parameters, cache forward intermediates for the backward
pass, and can compute their output shape statically so a whole stack is
validated before any data flows.  Shapes exclude the batch axis: a layer
shape is (C, H, W) or (D,).
"""

import numpy as np

from ..errors import ConfigurationError, StateError
from . import ops


class Parameter:
    """A trainable tensor with its gradient accumulator and a role tag."""

    __slots__ = ("value", "grad", "role")

    def __init__(self, value, role):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.role = role

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0


def he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base class: forward caches what backward needs, nothing more."""

    name = "layer"

    def __init__(self):
        self._cache = None

    def parameters(self):
        return []

    def forward(self, x, training):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def output_shape(self, in_shape):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{self.name}: backward called without a cached forward pass")
        cache, self._cache = self._cache, None
        return cache


class Conv2d(Layer):
    """3x3-style convolution with optional identity skip connection.

    padding='same' keeps spatial size for odd kernels; residual=True adds
    the layer input to the convolution output and requires matching
    channel counts and unchanged spatial dims.
    """

    def __init__(self, in_channels, filters, kernel_size=3, stride=1,
                 padding="same", residual=False, rng=None, name="conv"):
        super().__init__()
        self.name = name
        self.in_channels = in_channels
        self.filters = filters
        self.kernel_size = kernel_size
        self.stride = stride
        if padding == "same":
            if kernel_size % 2 == 0:
                raise ConfigurationError(
                    f"{name}: 'same' padding needs an odd kernel, got {kernel_size}")
            padding = (kernel_size - 1) // 2
        self.padding = int(padding)
        self.residual = residual
        if residual and (in_channels != filters or stride != 1):
            raise ConfigurationError(
                f"{name}: residual skip needs in_channels == filters and stride 1 "
                f"(got {in_channels}->{filters}, stride {stride})")
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(
            he_uniform(rng, (filters, in_channels, kernel_size, kernel_size), fan_in),
            "kernel_weight")
        self.bias = Parameter(np.zeros(filters), "bias")

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, training):
        out, cache = ops.conv2d_forward(x, self.weight.value, self.bias.value,
                                        self.stride, self.padding)
        if self.residual:
            out = out + x
        self._cache = cache
        return out

    def backward(self, dout):
        cache = self._take_cache()
        dx, dw, db = ops.conv2d_backward(dout, cache, self.weight.value)
        if self.residual:
            dx = dx + dout
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ConfigurationError(
                f"{self.name}: expected {self.in_channels} input channels, got {c}")
        k, s, p = self.kernel_size, self.stride, self.padding
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise ConfigurationError(f"{self.name}: output collapses on input {in_shape}")
        return (self.filters, ho, wo)


class MaxPool2(Layer):
    def __init__(self, size=2, name="pool"):
        super().__init__()
        self.name = name
        self.size = size

    def forward(self, x, training):
        out, idx = ops.maxpool2_forward(x, self.size)
        self._cache = idx
        return out

    def backward(self, dout):
        idx = self._take_cache()
        return ops.maxpool2_backward(dout, idx, self.size)

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if h % self.size or w % self.size:
            raise ConfigurationError(
                f"{self.name}: {h}x{w} not divisible by pool size {self.size}")
        return (c, h // self.size, w // self.size)


class Activation(Layer):
    def __init__(self, kind, axis=1, name=None):
        super().__init__()
        if kind not in ("relu", "sigmoid", "softmax"):
            raise ConfigurationError(f"unknown activation kind: {kind!r}")
        self.kind = kind
        self.axis = axis
        self.name = name or kind

    def forward(self, x, training):
        if self.kind == "relu":
            out = ops.relu(x)
            self._cache = np.asarray(x, dtype=np.float64)
        elif self.kind == "sigmoid":
            out = ops.sigmoid(x)
            self._cache = out
        else:
            out = ops.softmax(x, axis=self.axis)
            self._cache = out
        return out

    def backward(self, dout):
        cache = self._take_cache()
        if self.kind == "relu":
            return ops.relu_backward(dout, cache)
        if self.kind == "sigmoid":
            return ops.sigmoid_backward(dout, cache)
        return ops.softmax_backward(dout, cache, axis=self.axis)

    def output_shape(self, in_shape):
        return in_shape


class Flatten(Layer):
    """Reshape (C,H,W) feature maps to vectors ahead of the dense head."""

    name = "flatten"

    def forward(self, x, training):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        shape = self._take_cache()
        return dout.reshape(shape)

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


class Dense(Layer):
    def __init__(self, in_features, out_features, rng=None, name="dense"):
        super().__init__()
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(
            he_uniform(rng, (in_features, out_features), in_features), "dense_weight")
        self.bias = Parameter(np.zeros(out_features), "bias")

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, training):
        out = ops.dense_forward(x, self.weight.value, self.bias.value)
        self._cache = np.asarray(x, dtype=np.float64)
        return out

    def backward(self, dout):
        x = self._take_cache()
        dx, dw, db = ops.dense_backward(dout, x, self.weight.value)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def output_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_features:
            raise ConfigurationError(
                f"{self.name}: expected ({self.in_features},) input, got {in_shape}")
        return (self.out_features,)


class BatchNorm(Layer):
    def __init__(self, channels, momentum=0.9, eps=1e-5, name="bn"):
        super().__init__()
        self.name = name
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels), "bn_scale")
        self.beta = Parameter(np.zeros(channels), "bn_shift")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def parameters(self):
        return [self.gamma, self.beta]

    def forward(self, x, training):
        out, cache, self.running_mean, self.running_var = ops.batchnorm_forward(
            x, self.gamma.value, self.beta.value, training,
            self.running_mean, self.running_var, self.momentum, self.eps)
        self._cache = cache if training else None
        return out

    def backward(self, dout):
        cache = self._take_cache()
        dx, dgamma, dbeta = ops.batchnorm_backward(dout, cache)
        self.gamma.grad += dgamma
        self.beta.grad += dbeta
        return dx

    def output_shape(self, in_shape):
        c = in_shape[0] if len(in_shape) == 3 else in_shape[-1]
        if c != self.channels:
            raise ConfigurationError(
                f"{self.name}: expected {self.channels} channels, got {c}")
        return in_shape


class Dropout(Layer):
    """Inverted dropout with its own seeded mask stream.

    Masks are drawn from a private Generator advanced once per training
    forward, so a fixed seed reproduces the exact mask sequence.  While
    `frozen` is set the last mask is reused, which gradient checking
    requires.
    """

    def __init__(self, rate, seed=0, name="dropout"):
        super().__init__()
        self.name = name
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"{name}: rate must be in [0,1), got {rate}")
        self.rate = rate
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.frozen = False
        self._frozen_mask = None

    def forward(self, x, training):
        if not training or self.rate == 0.0:
            out, mask = ops.dropout_forward(x, self.rate, False, self._rng)
        elif self.frozen:
            if self._frozen_mask is None or self._frozen_mask.shape != x.shape:
                _, self._frozen_mask = ops.dropout_forward(
                    x, self.rate, True, self._rng)
            mask = self._frozen_mask
            out = np.asarray(x, dtype=np.float64) * mask
        else:
            out, mask = ops.dropout_forward(x, self.rate, True, self._rng)
        self._cache = mask
        return out

    def backward(self, dout):
        mask = self._take_cache()
        return ops.dropout_backward(dout, mask)

    def output_shape(self, in_shape):
        return in_shape

    def reset_stream(self):
        self._rng = np.random.default_rng(self.seed)
        self._frozen_mask = None


class Upsample2(Layer):
    """Nearest-neighbor 2x upscaling (decoder-style reconstruction step)."""

    name = "upsample"

    def forward(self, x, training):
        self._cache = x.shape
        return ops.upsample2_forward(x)

    def backward(self, dout):
        self._take_cache()
        return ops.upsample2_backward(dout)

    def output_shape(self, in_shape):
        c, h, w = in_shape
        return (c, 2 * h, 2 * w)
