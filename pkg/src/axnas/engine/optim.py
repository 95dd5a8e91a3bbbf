"""Optimizers and the cosine learning-rate schedule.

Weight decay is L2-coupled in both optimizers (added to the gradient
before the momentum/moment updates).
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor


def sgd_step(param: np.ndarray, grad: np.ndarray, velocity: np.ndarray,
             lr: float, momentum: float, weight_decay: float):
    """One classical-momentum SGD update, in place."""
    g = grad + weight_decay * param
    velocity *= momentum
    velocity += g
    param -= lr * velocity


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              t: int, lr: float, beta1: float, beta2: float,
              weight_decay: float, eps: float):
    """One Adam update with bias correction, in place."""
    g = grad + weight_decay * param
    m *= beta1
    m += (1 - beta1) * g
    v *= beta2
    v += (1 - beta2) * g * g
    mhat = m / (1 - beta1 ** t)
    vhat = v / (1 - beta2 ** t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)


def cosine_lr(epoch: int, total_epochs: int, lr0: float) -> float:
    """lr0 * 0.5 * (1 + cos(pi * epoch / total_epochs)); lr0 at epoch 0,
    annealed to 0 at epoch == total_epochs."""
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


class SGD:
    def __init__(self, params: list[Tensor], lr: float, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, vel in zip(self.params, self.velocities):
            if p.grad is None:
                continue
            sgd_step(p.data, p.grad, vel, self.lr, self.momentum, self.weight_decay)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Adam:
    def __init__(self, params: list[Tensor], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999),
                 weight_decay: float = 0.0, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.weight_decay = weight_decay
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            adam_step(p.data, p.grad, m, v, self.t, self.lr, self.beta1,
                      self.beta2, self.weight_decay, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
