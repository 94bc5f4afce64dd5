"""SGD and Adam parameter updates.

Both optimizers clear gradients after applying an update, so each step
consumes exactly one backward pass.
"""

import numpy as np

from ..errors import ConfigurationError


class SGD:
    def __init__(self, params, learning_rate):
        if learning_rate <= 0:
            raise ConfigurationError(f"learning rate must be > 0, got {learning_rate}")
        self.params = list(params)
        self.learning_rate = learning_rate
        self.t = 0

    def step(self):
        for p in self.params:
            p.value -= self.learning_rate * p.grad
            p.zero_grad()
        self.t += 1


class Adam:
    """Adam with bias-corrected first and second moments.

    Update: p <- p - lr * m_hat / (sqrt(v_hat) + eps).
    """

    def __init__(self, params, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        if learning_rate <= 0:
            raise ConfigurationError(f"learning rate must be > 0, got {learning_rate}")
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            p.value -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
            p.zero_grad()


def make_optimizer(name, params, learning_rate):
    if name == "adam":
        return Adam(params, learning_rate)
    if name == "sgd":
        return SGD(params, learning_rate)
    raise ConfigurationError(f"unknown optimizer: {name!r}")
