"""Plain SGD (optionally with momentum) and Adam over autodiff parameters.

Parameters are leaf Tensors; a step rebinds each parameter's `.data` to a
fresh array so previously built graphs keep their values.
"""

from __future__ import annotations

import numpy as np

from audiodiff.errors import ParameterError


def make_optimizer(method: str, learning_rate: float, momentum: float = 0.0):
    if not learning_rate > 0.0:
        raise ParameterError("learning_rate must be positive")
    if method == "sgd":
        return Sgd(learning_rate, momentum)
    if method == "adam":
        return Adam(learning_rate)
    raise ParameterError(f"unknown optimizer {method!r}")


class Sgd:
    def __init__(self, learning_rate: float, momentum: float = 0.0):
        if not 0.0 <= momentum < 1.0:
            raise ParameterError("momentum must lie in [0, 1)")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self._velocity = {}

    def step(self, params, grads) -> None:
        for p, g in zip(params, grads):
            update = g.data
            if self.momentum > 0.0:
                vel = self._velocity.get(id(p))
                vel = update if vel is None else \
                    self.momentum * vel + update
                self._velocity[id(p)] = vel
                update = vel
            p.data = p.data - self.learning_rate * update


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {}
        self._v = {}
        self._t = 0

    def step(self, params, grads) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g in zip(params, grads):
            m = self._m.get(id(p), 0.0)
            v = self._v.get(id(p), 0.0)
            m = b1 * m + (1.0 - b1) * g.data
            v = b2 * v + (1.0 - b2) * g.data * g.data
            self._m[id(p)] = m
            self._v[id(p)] = v
            m_hat = m / (1.0 - b1 ** self._t)
            v_hat = v / (1.0 - b2 ** self._t)
            p.data = p.data - self.learning_rate * m_hat / (
                np.sqrt(v_hat) + self.eps)
