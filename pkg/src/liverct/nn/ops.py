"""Functional tensor kernels with explicit forward and backward passes.

Every kernel operates on plain float64 numpy arrays in NCHW layout
(row-major, last axis fastest) and is a pure function of its inputs, so
results are bit-identical across runs.  Forward functions return whatever
cache their backward counterpart needs; no global state is involved.
"""

import numpy as np

from ..errors import ConfigurationError, ContractError

BCE_CLAMP = 1e-7


def _as_f64(x):
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# convolution

def _im2col(x, kh, kw, stride):
    # x is already padded. Returns [N, C*kh*kw, Ho*Wo].
    n, c, h, w = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j, :, :] = x[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(n, c * kh * kw, ho * wo), ho, wo


def _col2im(cols, x_shape, kh, kw, stride):
    # Inverse scatter-add of _im2col over the padded input shape.
    n, c, h, w = x_shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    x = np.zeros(x_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            x[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j, :, :]
    return x


def conv2d_forward(x, weights, bias, stride=1, padding=0):
    """Cross-correlation of [N,C,H,W] with [F,C,k,k] kernels plus bias.

    Output spatial size is floor((H + 2*padding - k)/stride) + 1.
    """
    x = _as_f64(x)
    weights = _as_f64(weights)
    bias = _as_f64(bias)
    n, c, h, w = x.shape
    f, cw, kh, kw = weights.shape
    if cw != c:
        raise ConfigurationError(
            f"conv2d: weights expect {cw} input channels, input has {c}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ConfigurationError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    if stride < 1:
        raise ConfigurationError(f"conv2d: stride must be >= 1, got {stride}")
    if padding:
        x_pad = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        x_pad = x
    cols, ho, wo = _im2col(x_pad, kh, kw, stride)
    out = np.einsum("fk,nkl->nfl", weights.reshape(f, -1), cols, optimize=True)
    out = out.reshape(n, f, ho, wo) + bias.reshape(1, f, 1, 1)
    cache = (cols, x_pad.shape, weights.shape, stride, padding)
    return out, cache


def conv2d_backward(dout, cache, weights):
    """Gradients of conv2d_forward w.r.t. input, weights, and bias."""
    cols, x_pad_shape, w_shape, stride, padding = cache
    f, c, kh, kw = w_shape
    n = dout.shape[0]
    dflat = dout.reshape(n, f, -1)
    dw = np.einsum("nfl,nkl->fk", dflat, cols, optimize=True).reshape(w_shape)
    db = dflat.sum(axis=(0, 2))
    dcols = np.einsum("fk,nfl->nkl", weights.reshape(f, -1), dflat, optimize=True)
    dx_pad = _col2im(dcols, x_pad_shape, kh, kw, stride)
    if padding:
        dx = dx_pad[:, :, padding:-padding, padding:-padding]
    else:
        dx = dx_pad
    return dx, dw, db


# ---------------------------------------------------------------------------
# pooling / upsampling

def maxpool2_forward(x, size=2):
    """Non-overlapping max pooling; H and W must be divisible by size.

    Returns the pooled map and the flat argmax index per window for the
    backward scatter.
    """
    x = _as_f64(x)
    n, c, h, w = x.shape
    if h % size or w % size:
        raise ConfigurationError(
            f"maxpool2: spatial dims {h}x{w} not divisible by pool size {size}")
    ho, wo = h // size, w // size
    windows = x.reshape(n, c, ho, size, wo, size).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(n, c, ho, wo, size * size)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(dout, idx, size=2):
    n, c, ho, wo = dout.shape
    dwin = np.zeros((n, c, ho, wo, size * size), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(n, c, ho, wo, size, size).transpose(0, 1, 2, 4, 3, 5)
    return dwin.reshape(n, c, ho * size, wo * size)


def upsample2_forward(x):
    """Nearest-neighbor 2x upsampling: each value fills a 2x2 block."""
    x = _as_f64(x)
    return np.repeat(np.repeat(x, 2, axis=-2), 2, axis=-1)


def upsample2_backward(dout):
    n, c, h2, w2 = dout.shape
    return dout.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))


# ---------------------------------------------------------------------------
# activations

def relu(x):
    return np.maximum(0.0, _as_f64(x))


def relu_backward(dout, x):
    return dout * (x > 0)


def sigmoid(x):
    x = _as_f64(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dout, s):
    return dout * s * (1.0 - s)


def softmax(x, axis=-1):
    """Max-shifted softmax along `axis`."""
    x = _as_f64(x)
    if not -x.ndim <= axis < x.ndim:
        raise ConfigurationError(f"softmax: axis {axis} invalid for shape {x.shape}")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dout, s, axis=-1):
    return s * (dout - (dout * s).sum(axis=axis, keepdims=True))


def activation(kind, x, axis=-1):
    """Dispatch over the supported activation kinds."""
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "softmax":
        return softmax(x, axis=axis)
    raise ConfigurationError(f"unknown activation kind: {kind!r}")


# ---------------------------------------------------------------------------
# dense

def dense_forward(x, weights, bias):
    """Affine map out = x @ weights + bias for x [N,D], weights [D,M]."""
    x = _as_f64(x)
    weights = _as_f64(weights)
    if x.ndim != 2:
        raise ConfigurationError(f"dense: expected 2-d input, got shape {x.shape}")
    if x.shape[1] != weights.shape[0]:
        raise ConfigurationError(
            f"dense: input width {x.shape[1]} != weight rows {weights.shape[0]}")
    return x @ weights + _as_f64(bias)


def dense_backward(dout, x, weights):
    dx = dout @ weights.T
    dw = x.T @ dout
    db = dout.sum(axis=0)
    return dx, dw, db


# ---------------------------------------------------------------------------
# batch normalization

def batchnorm_forward(x, gamma, beta, training, running_mean, running_var,
                      momentum=0.9, eps=1e-5):
    """Per-channel batch normalization over all non-channel axes.

    Channel axis is 1 for 4-d input, the last axis for 2-d input.  In
    training mode batch statistics are used and the running stats are
    updated as running = momentum*running + (1-momentum)*batch; inference
    mode normalizes with the running stats.  Returns
    (out, cache, running_mean, running_var).
    """
    x = _as_f64(x)
    if x.ndim == 4:
        axes = (0, 2, 3)
        shape = (1, -1, 1, 1)
    elif x.ndim == 2:
        axes = (0,)
        shape = (1, -1)
    else:
        raise ConfigurationError(f"batchnorm: unsupported input rank {x.ndim}")
    if eps <= 0:
        raise ConfigurationError("batchnorm: eps must be > 0")
    if training:
        if x.shape[0] < 2:
            raise ConfigurationError(
                "batchnorm: training mode needs batch size >= 2 (variance is degenerate)")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean = momentum * running_mean + (1.0 - momentum) * mean
        running_var = momentum * running_var + (1.0 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = gamma.reshape(shape) * xhat + beta.reshape(shape)
    cache = (xhat, gamma, inv_std, axes, shape)
    return out, cache, running_mean, running_var


def batchnorm_backward(dout, cache):
    xhat, gamma, inv_std, axes, shape = cache
    m = np.prod([dout.shape[a] for a in axes])
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma.reshape(shape)
    dx = (inv_std.reshape(shape) / m) * (
        m * dxhat
        - dxhat.sum(axis=axes).reshape(shape)
        - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape)
    )
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# dropout

def dropout_forward(x, rate, training, rng):
    """Inverted dropout: kept elements are scaled by 1/(1-rate).

    `rng` is a numpy Generator (or a seed for one).  Inference mode and
    rate 0 are identity.  Returns (out, mask) where mask already carries
    the 1/(1-rate) scale.
    """
    x = _as_f64(x)
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout: rate must be in [0,1), got {rate}")
    if not training or rate == 0.0:
        return x, np.ones_like(x)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout * mask


# ---------------------------------------------------------------------------
# loss

def bce_loss(pred, label):
    """Mean binary cross-entropy with probability clamping at 1e-7.

    Returns (loss, grad_wrt_pred).  Predictions must already be
    probabilities in [0,1].
    """
    pred = _as_f64(pred)
    label = _as_f64(label)
    if pred.shape != label.shape:
        raise ContractError(f"bce: shape mismatch {pred.shape} vs {label.shape}")
    if pred.min() < 0.0 or pred.max() > 1.0:
        raise ContractError(
            f"bce: predictions outside [0,1] (min {pred.min():.4g}, max {pred.max():.4g})")
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    n = pred.size
    loss = float(-(label * np.log(p) + (1.0 - label) * np.log1p(-p)).sum() / n)
    grad = (-(label / p) + (1.0 - label) / (1.0 - p)) / n
    return loss, grad
