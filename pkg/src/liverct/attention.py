"""Spatial attention over CNN feature maps.

Each head turns a feature map into one logit per spatial position via a
two-conv network (3x3 -> relu -> 3x3 to one channel) plus an additive
global-context scalar (global average pool -> dense).  From the same
logits it derives a sigmoid gate (multiplicative fusion, preserves
feature scale) and a softmax spatial distribution (pooled concat
fusion).  Multiple heads act independently and their gated outputs are
averaged in fixed head-id order; refinement feeds the fused output back
through the same heads.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .nn import ops
from .nn.layers import Layer, Parameter, he_uniform

FUSIONS = ("multiply", "concat", "both")
DEFAULT_MAX_ITERATIONS = 3


@dataclass
class AttentionConfig:
    heads: int = 4
    placements: tuple = (2,)
    fusion: str = "multiply"
    iterations: int = 1
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if self.heads < 1:
            raise ConfigurationError(f"attention heads must be >= 1, got {self.heads}")
        if self.fusion not in FUSIONS:
            raise ConfigurationError(f"fusion must be one of {FUSIONS}, got {self.fusion!r}")
        if self.iterations < 0 or self.iterations > self.max_iterations:
            raise ConfigurationError(
                f"refinement iterations {self.iterations} outside [0, {self.max_iterations}]")
        self.placements = tuple(sorted(self.placements))


@dataclass
class AttentionMap:
    """Per-position weights derived from one head's logit map."""

    gate: np.ndarray          # [N,1,H,W], sigmoid of the logits
    dist: np.ndarray          # [N,H*W], softmax of the flattened logits
    head_id: int = 0


class AttentionHead:
    """Parameters of a single spatial attention head over C channels."""

    def __init__(self, channels, head_id=0, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        c = channels
        fan1 = c * 9
        self.channels = c
        self.head_id = head_id
        self.w1 = Parameter(he_uniform(rng, (c, c, 3, 3), fan1), "attention_net")
        self.b1 = Parameter(np.zeros(c), "attention_net")
        self.w2 = Parameter(he_uniform(rng, (1, c, 3, 3), fan1), "attention_net")
        self.b2 = Parameter(np.zeros(1), "attention_net")
        self.wg = Parameter(he_uniform(rng, (c, 1), c), "attention_net")
        self.bg = Parameter(np.zeros(1), "attention_net")

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2, self.wg, self.bg]


def _head_logits(features, head):
    """Logit map plus the caches needed to backpropagate through it."""
    if features.shape[1] != head.channels:
        raise ConfigurationError(
            f"attention head built for {head.channels} channels, features have "
            f"{features.shape[1]}")
    l1, cache1 = ops.conv2d_forward(features, head.w1.value, head.b1.value, 1, 1)
    a1 = ops.relu(l1)
    l2, cache2 = ops.conv2d_forward(a1, head.w2.value, head.b2.value, 1, 1)
    pooled = features.mean(axis=(2, 3))                      # [N,C]
    ctx = pooled @ head.wg.value + head.bg.value             # [N,1]
    logits = l2 + ctx[:, :, None, None]
    cache = (cache1, l1, cache2, pooled, logits)
    return logits, cache


def _head_backward(dlogits, cache, head, features_shape):
    """Gradient of the logits w.r.t. features; accumulates head param grads."""
    cache1, l1, cache2, pooled, _ = cache
    n, c, h, w = features_shape
    dctx = dlogits.sum(axis=(2, 3))                          # [N,1]
    dpooled = dctx @ head.wg.value.T                         # [N,C]
    head.wg.grad += pooled.T @ dctx
    head.bg.grad += dctx.sum(axis=0)
    dfeat = np.broadcast_to(dpooled[:, :, None, None] / (h * w), features_shape).copy()
    da1, dw2, db2 = ops.conv2d_backward(dlogits, cache2, head.w2.value)
    head.w2.grad += dw2
    head.b2.grad += db2
    dl1 = ops.relu_backward(da1, l1)
    dxc, dw1, db1 = ops.conv2d_backward(dl1, cache1, head.w1.value)
    head.w1.grad += dw1
    head.b1.grad += db1
    dfeat += dxc
    return dfeat


def spatial_attention_map(features, head):
    """Compute one head's AttentionMap for [N,C,H,W] features."""
    features = np.asarray(features, dtype=np.float64)
    logits, _ = _head_logits(features, head)
    n = features.shape[0]
    gate = ops.sigmoid(logits)
    dist = ops.softmax(logits.reshape(n, -1), axis=1)
    return AttentionMap(gate=gate, dist=dist, head_id=head.head_id)


def fuse_multiply(features, amap):
    """Gate the feature maps per position: out = features * gate."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-2:] != amap.gate.shape[-2:] or features.shape[0] != amap.gate.shape[0]:
        raise ConfigurationError(
            f"fuse_multiply: features {features.shape} vs gate {amap.gate.shape}")
    return features * amap.gate


def fuse_concat(pooled, features, amap):
    """Concatenate pooled activations with the dist-weighted feature vector.

    a[n,c] = sum_{h,w} dist[n,(h,w)] * features[n,c,h,w]; returns [N, D+C].
    """
    pooled = np.asarray(pooled, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    n, c, h, w = features.shape
    if amap.dist.shape != (n, h * w):
        raise ConfigurationError(
            f"fuse_concat: dist {amap.dist.shape} vs spatial {(n, h * w)}")
    if pooled.shape[0] != n:
        raise ConfigurationError(
            f"fuse_concat: pooled batch {pooled.shape[0]} vs features batch {n}")
    attended = np.einsum("nl,ncl->nc", amap.dist, features.reshape(n, c, -1))
    return np.concatenate([pooled, attended], axis=1)


def _sorted_heads(heads):
    heads = list(heads)
    if not heads:
        raise ConfigurationError("multi_head_attention: need at least one head")
    return sorted(heads, key=lambda hd: hd.head_id)


def multi_head_attention(features, heads):
    """Average of each head's gated feature map, in fixed head-id order."""
    features = np.asarray(features, dtype=np.float64)
    outs = []
    for head in _sorted_heads(heads):
        amap = spatial_attention_map(features, head)
        outs.append(fuse_multiply(features, amap))
    return np.mean(outs, axis=0)


def iterative_refine(features, heads, iterations, max_iterations=DEFAULT_MAX_ITERATIONS):
    """Feed the fused output back through the same heads `iterations` times."""
    if iterations < 0 or iterations > max_iterations:
        raise ConfigurationError(
            f"refinement iterations {iterations} outside [0, {max_iterations}]")
    x = np.asarray(features, dtype=np.float64)
    for _ in range(iterations):
        x = multi_head_attention(x, heads)
    return x


class AttentionBlock(Layer):
    """In-network attention: multi-head gating with optional refinement.

    Shape-preserving, differentiable, and shares head parameters across
    refinement iterations.  The mean gate of the last forward pass is kept
    for mask extraction.
    """

    def __init__(self, channels, heads=4, iterations=1,
                 max_iterations=DEFAULT_MAX_ITERATIONS, rng=None, name="attention"):
        super().__init__()
        if heads < 1:
            raise ConfigurationError(f"{name}: head count must be >= 1, got {heads}")
        if iterations < 0 or iterations > max_iterations:
            raise ConfigurationError(
                f"{name}: iterations {iterations} outside [0, {max_iterations}]")
        self.name = name
        self.channels = channels
        self.iterations = iterations
        rng = rng if rng is not None else np.random.default_rng(0)
        self.heads = [AttentionHead(channels, head_id=i, rng=rng) for i in range(heads)]
        self.last_gate = None

    def parameters(self):
        params = []
        for head in self.heads:
            params.extend(head.parameters())
        return params

    def forward(self, x, training):
        x = np.asarray(x, dtype=np.float64)
        iteration_caches = []
        gates = None
        for _ in range(self.iterations):
            head_caches = []
            outs = []
            gates = []
            for head in self.heads:
                logits, cache = _head_logits(x, head)
                gate = ops.sigmoid(logits)
                outs.append(x * gate)
                gates.append(gate)
                head_caches.append((cache, gate))
            iteration_caches.append((x, head_caches))
            x = np.mean(outs, axis=0)
        self.last_gate = np.mean(gates, axis=0) if gates is not None else None
        self._cache = iteration_caches
        return x

    def backward(self, dout):
        iteration_caches = self._take_cache()
        k = len(self.heads)
        grad = dout
        for x_in, head_caches in reversed(iteration_caches):
            dhead = grad / k
            dx = np.zeros_like(x_in)
            for head, (cache, gate) in zip(self.heads, head_caches):
                dgate = (dhead * x_in).sum(axis=1, keepdims=True)
                dx += dhead * gate
                dlogits = dgate * gate * (1.0 - gate)
                dx += _head_backward(dlogits, cache, head, x_in.shape)
            grad = dx
        return grad

    def output_shape(self, in_shape):
        c = in_shape[0]
        if c != self.channels:
            raise ConfigurationError(
                f"{self.name}: built for {self.channels} channels, got {c}")
        return in_shape
