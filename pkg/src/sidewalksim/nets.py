"""Small fully-connected student network with hand-written backpropagation.

The architecture is fixed (275 -> 256 -> 128 -> 2, rectifier hidden units,
tanh output), so the gradients are spelled out directly instead of pulling in
an autodiff framework. Sub-gradients at the rectifier and L1 kinks are zero.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import TrainingDivergedError

ARCH = (275, 256, 128, 2)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class StudentNet:
    """275-input, 2-output MLP; outputs live in (-1, 1) via tanh."""

    def __init__(self, seed: int = 0, arch=ARCH):
        self.arch = tuple(arch)
        rng = np.random.default_rng(seed)
        self.params = []
        for fan_in, fan_out in zip(self.arch[:-1], self.arch[1:]):
            self.params.append(_glorot(rng, fan_in, fan_out))
            self.params.append(np.zeros(fan_out))

    # parameters are ordered W1, b1, W2, b2, W3, b3

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Network output for a (B, 275) batch or a single (275,) vector."""
        squeeze = x.ndim == 1
        h = np.atleast_2d(x)
        w1, b1, w2, b2, w3, b3 = self.params
        a1 = np.maximum(h @ w1 + b1, 0.0)
        a2 = np.maximum(a1 @ w2 + b2, 0.0)
        out = np.tanh(a2 @ w3 + b3)
        return out[0] if squeeze else out

    def _forward_cache(self, x: np.ndarray):
        w1, b1, w2, b2, w3, b3 = self.params
        z1 = x @ w1 + b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ w2 + b2
        a2 = np.maximum(z2, 0.0)
        y = np.tanh(a2 @ w3 + b3)
        return z1, a1, z2, a2, y

    def loss(self, x: np.ndarray, target: np.ndarray) -> float:
        """Mean absolute error over batch and output components."""
        return float(np.mean(np.abs(self.forward(np.atleast_2d(x)) - target)))

    def loss_and_grads(self, x: np.ndarray, target: np.ndarray):
        """L1 loss and its exact gradients for every parameter."""
        x = np.atleast_2d(x)
        target = np.atleast_2d(target)
        w1, b1, w2, b2, w3, b3 = self.params
        z1, a1, z2, a2, y = self._forward_cache(x)
        resid = y - target
        loss = float(np.mean(np.abs(resid)))

        d_y = np.sign(resid) / resid.size          # zero sub-gradient at the kink
        d_z3 = d_y * (1.0 - y * y)
        g_w3 = a2.T @ d_z3
        g_b3 = d_z3.sum(axis=0)
        d_a2 = d_z3 @ w3.T
        d_z2 = d_a2 * (z2 > 0.0)
        g_w2 = a1.T @ d_z2
        g_b2 = d_z2.sum(axis=0)
        d_a1 = d_z2 @ w2.T
        d_z1 = d_a1 * (z1 > 0.0)
        g_w1 = x.T @ d_z1
        g_b1 = d_z1.sum(axis=0)
        return loss, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3]

    def kink_margins(self, x: np.ndarray, target: np.ndarray) -> float:
        """Smallest distance of any pre-activation or residual to its kink."""
        x = np.atleast_2d(x)
        z1, _, z2, _, y = self._forward_cache(x)
        resid = y - np.atleast_2d(target)
        return float(min(np.abs(z1).min(), np.abs(z2).min(), np.abs(resid).min()))

    def activation_signature(self, x: np.ndarray, target: np.ndarray):
        """Sign pattern of both rectifier layers and the L1 residual."""
        x = np.atleast_2d(x)
        z1, _, z2, _, y = self._forward_cache(x)
        resid = y - np.atleast_2d(target)
        return (z1 > 0.0, z2 > 0.0, np.sign(resid))

    # flat parameter views, used by the finite-difference checks and model IO

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise ValueError("flat parameter vector has the wrong length")

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)


class Adam:
    """Per-parameter adaptive steps with (0.9, 0.999) moment decay."""

    def __init__(self, net: StudentNet, learning_rate: float = 1e-3,
                 beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
                 eps: float = ADAM_EPS):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.params]
        self.v = [np.zeros_like(p) for p in net.params]

    def step(self, net: StudentNet, grads) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(net.params, grads, self.m, self.v):
            if not np.isfinite(g).all():
                raise TrainingDivergedError("non-finite gradient")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def save_model(net: StudentNet, norm: dict, path) -> None:
    """Write the versioned model JSON: architecture, flat weights, normalization."""
    doc = {
        "version": 1,
        "arch": list(net.arch),
        "weights": [float(w) for w in net.get_flat()],
        "norm": norm,
    }
    with open(path, "w") as f:
        json.dump(doc, f, separators=(",", ":"))
        f.write("\n")


def load_model(path) -> tuple[StudentNet, dict]:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    net = StudentNet(seed=0, arch=tuple(doc["arch"]))
    net.set_flat(np.array(doc["weights"], dtype=float))
    return net, doc["norm"]
