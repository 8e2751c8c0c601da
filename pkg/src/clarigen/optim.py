"""Adam with global-norm gradient clipping."""

import numpy as np

from .errors import ContractError


class Adam:
    """Adam over a fixed set of named parameter tensors.

    step() clips the global gradient norm, applies the update, and zeroes
    the grads. One optimizer instance per model; instances never share
    moment state.
    """

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm=5.0):
        # params: dict name -> Tensor (insertion order is the update order)
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def grad_norm(self):
        sq = 0.0
        for k, p in self.params.items():
            if p.grad is None:
                raise ContractError(f"parameter {k!r} has no gradient")
            sq += float((p.grad * p.grad).sum())
        return np.sqrt(sq)

    def step(self):
        norm = self.grad_norm()
        factor = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            factor = self.clip_norm / norm
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad if factor == 1.0 else p.grad * factor
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad[...] = 0.0
        return norm

    def zero_grad(self):
        for p in self.params.values():
            if p.grad is not None:
                p.grad[...] = 0.0
