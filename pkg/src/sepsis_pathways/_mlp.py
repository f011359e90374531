"""Dense feed-forward layers with manual backprop and an Adam/SGD optimizer."""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("tanh", "linear", "relu", "sigmoid")


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d activation / dz given pre-activation ``z`` and output ``a``."""
    if name == "tanh":
        return 1.0 - a * a
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {name!r}")


def init_layers(sizes, rng: np.random.Generator, scheme: str = "glorot_uniform"):
    """Weights ``(fan_in, fan_out)`` and zero biases for consecutive sizes."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if scheme == "glorot_uniform":
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        elif scheme == "zeros":
            w = np.zeros((fan_in, fan_out))
        else:
            raise ValueError(f"unknown init scheme {scheme!r}")
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return weights, biases


def forward(x: np.ndarray, weights, biases, activations):
    """Return ``(output, cache)``; cache holds (input, z, a) per layer."""
    cache = []
    a = x
    for w, b, act in zip(weights, biases, activations):
        z = a @ w + b
        out = activate(act, z)
        cache.append((a, z, out))
        a = out
    return a, cache


def backward(grad_out: np.ndarray, cache, weights, activations, output_is_preactivation: bool = False):
    """Gradients of the loss w.r.t. every weight and bias.

    Args:
        grad_out: dLoss/d(output of last layer), or dLoss/dz of the last
            layer when ``output_is_preactivation`` is set (softmax + CE).
    """
    n_layers = len(weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    delta = grad_out
    for k in range(n_layers - 1, -1, -1):
        a_in, z, a_out = cache[k]
        if not (output_is_preactivation and k == n_layers - 1):
            delta = delta * activation_grad(activations[k], z, a_out)
        gw[k] = a_in.T @ delta
        gb[k] = delta.sum(axis=0)
        if k:
            delta = delta @ weights[k].T
    return gw, gb


class Optimizer:
    """Plain SGD or Adam over a flat list of parameter arrays (updated in place)."""

    def __init__(self, params, kind: str = "adam", lr: float = 1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {kind!r}")
        self.params = params
        self.kind = kind
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        if self.kind == "sgd":
            for p, g in zip(self.params, grads):
                p -= self.lr * g
            return
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
