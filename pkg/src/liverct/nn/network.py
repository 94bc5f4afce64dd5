"""Sequential network container with static shape validation.

A Network owns an ordered layer stack and a training/inference mode flag.
One instance is single-writer through a forward/backward/step cycle;
independent instances never share state.
"""

import copy

import numpy as np

from ..errors import ConfigurationError, StateError


class Network:
    def __init__(self, layers, input_shape, seed=0):
        """`input_shape` is (C, H, W) without the batch axis."""
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.training = True
        self._forward_ran = False
        self.output_shape = self.validate()

    def validate(self):
        """Chain output_shape through the stack; raises on any mismatch."""
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def parameters(self):
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    def parameter_count(self):
        return sum(p.value.size for p in self.parameters())

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ConfigurationError(
                f"network: input shape {x.shape[1:]} != declared {self.input_shape}")
        for layer in self.layers:
            x = layer.forward(x, self.training)
        self._forward_ran = self.training
        return x

    def __call__(self, x):
        return self.forward(x)

    def backward(self, loss_grad):
        """Propagate d(loss)/d(output) back through the stack.

        Accumulates into Parameter.grad and returns the input gradient.
        """
        if not self._forward_ran:
            raise StateError("network: backward requires a forward pass in training mode")
        self._forward_ran = False
        grad = np.asarray(loss_grad, dtype=np.float64)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    # -- weight snapshots (best-epoch restore, checkpointing) ---------------

    def get_state(self):
        state = [p.value.copy() for p in self.parameters()]
        for layer in self.layers:
            if hasattr(layer, "running_mean"):
                state.append(layer.running_mean.copy())
                state.append(layer.running_var.copy())
        return state

    def set_state(self, state):
        params = self.parameters()
        for p, v in zip(params, state):
            if p.value.shape != v.shape:
                raise ConfigurationError(
                    f"state shape {v.shape} != parameter shape {p.value.shape}")
            p.value = np.asarray(v, dtype=np.float64).copy()
            p.grad = np.zeros_like(p.value)
        rest = state[len(params):]
        it = iter(rest)
        for layer in self.layers:
            if hasattr(layer, "running_mean"):
                layer.running_mean = np.asarray(next(it), dtype=np.float64).copy()
                layer.running_var = np.asarray(next(it), dtype=np.float64).copy()

    def clone(self):
        return copy.deepcopy(self)

    # -- introspection -------------------------------------------------------

    def find(self, layer_type):
        return [l for l in self.layers if isinstance(l, layer_type)]
