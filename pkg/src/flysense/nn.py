"""Minimal dense networks with exact analytic backprop.

Just enough machinery for small actor/critic heads: tanh hidden layers,
tanh or identity output, Adam, Polyak target updates, and a JSON
checkpoint format that round-trips parameters bit-exactly.  Inputs may
be single vectors or batches (rows).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

_ACTIVATIONS = ("identity", "tanh")


class Mlp:
    """Fully connected net: y = act_out(W_L ... tanh(x W_1 + b_1) ...).

    Weights are (fan_in, fan_out) and initialized uniformly in
    +-1/sqrt(fan_in) from the supplied generator.
    """

    def __init__(self, dims, out_act: str = "identity", rng: np.random.Generator | None = None):
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if out_act not in _ACTIVATIONS:
            raise ValueError(f"unknown output activation {out_act!r}")
        rng = rng or np.random.default_rng()
        self.dims = [int(d) for d in dims]
        self.out_act = out_act
        self.ws = []
        self.bs = []
        for d_in, d_out in zip(self.dims[:-1], self.dims[1:]):
            bound = 1.0 / np.sqrt(d_in)
            self.ws.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
            self.bs.append(rng.uniform(-bound, bound, size=d_out))

    @property
    def n_layers(self) -> int:
        return len(self.ws)

    def forward(self, x):
        """Returns (y, cache); feed the cache to backward unchanged."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = np.atleast_2d(x)
        acts = [a]
        last = self.n_layers - 1
        for l, (w, b) in enumerate(zip(self.ws, self.bs)):
            z = a @ w + b
            if l < last or self.out_act == "tanh":
                a = np.tanh(z)
            else:
                a = z
            acts.append(a)
        y = acts[-1][0] if single else acts[-1]
        return y, (acts, single)

    def backward(self, cache, dy):
        """Gradients of sum(y * dy) w.r.t. every parameter and the input.

        Returns (grads, dx) where grads is a per-layer list of (dW, db).
        """
        acts, single = cache
        dy = np.asarray(dy, dtype=float)
        g = np.atleast_2d(dy)
        last = self.n_layers - 1
        if self.out_act == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        grads = [None] * self.n_layers
        for l in range(last, -1, -1):
            grads[l] = (acts[l].T @ g, g.sum(axis=0))
            g = g @ self.ws[l].T
            if l > 0:
                g = g * (1.0 - acts[l] ** 2)
        dx = g[0] if single else g
        return grads, dx

    def copy(self) -> "Mlp":
        dup = Mlp.__new__(Mlp)
        dup.dims = list(self.dims)
        dup.out_act = self.out_act
        dup.ws = [w.copy() for w in self.ws]
        dup.bs = [b.copy() for b in self.bs]
        return dup

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "out_act": self.out_act,
            "w": [w.tolist() for w in self.ws],
            "b": [b.tolist() for b in self.bs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        net = cls.__new__(cls)
        net.dims = [int(d) for d in data["dims"]]
        net.out_act = data["out_act"]
        net.ws = [np.array(w, dtype=float) for w in data["w"]]
        net.bs = [np.array(b, dtype=float) for b in data["b"]]
        return net


class Adam:
    """Standard Adam bound to one network's layer list."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = None
        self._v = None

    def step(self, net: Mlp, grads) -> None:
        if self._m is None:
            self._m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.ws, net.bs)]
            self._v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.ws, net.bs)]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for l, (dw, db) in enumerate(grads):
            for params, grad, m, v in (
                (net.ws[l], dw, self._m[l][0], self._v[l][0]),
                (net.bs[l], db, self._m[l][1], self._v[l][1]),
            ):
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad ** 2
                params -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """Polyak blend: target <- (1 - tau) * target + tau * online."""
    for tw, ow in zip(target.ws, online.ws):
        tw *= 1.0 - tau
        tw += tau * ow
    for tb, ob in zip(target.bs, online.bs):
        tb *= 1.0 - tau
        tb += tau * ob


def save_checkpoint(path, nets: dict) -> None:
    """Write named networks to a JSON file; floats survive bit-exactly."""
    payload = {"version": 1, "nets": {name: net.to_dict() for name, net in nets.items()}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    return {name: Mlp.from_dict(data) for name, data in payload["nets"].items()}
