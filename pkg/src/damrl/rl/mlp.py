"""Small fully connected networks with hand-written backpropagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("tanh", "relu", "linear")
SQUASHES = ("none", "tanh")


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z, a):
    # derivative expressed through the cached pre-activation z and output a
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


@dataclass
class Tape:
    """Forward intermediates needed by :meth:`Mlp.backward`."""

    inputs: list
    pre: list
    post: list
    output: np.ndarray


class Mlp:
    """Affine layers with per-layer activations.

    Weights are stored ``(fan_in, fan_out)`` and inputs are row batches, so
    one layer is ``act(x @ W + b)``. ``squash="tanh"`` bounds the output to
    ``[-1, 1]`` for action heads.
    """

    def __init__(self, sizes, activations=None, squash="none", rng=None, final_scale=3e-3):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        n_layers = len(sizes) - 1
        if activations is None:
            activations = ["tanh"] * (n_layers - 1) + ["linear"]
        activations = list(activations)
        if len(activations) != n_layers or any(a not in ACTIVATIONS for a in activations):
            raise ValueError(f"need {n_layers} activations from {ACTIVATIONS}, got {activations}")
        if squash not in SQUASHES:
            raise ValueError(f"squash must be one of {SQUASHES}")
        self.sizes = sizes
        self.activations = activations
        self.squash = squash
        rng = np.random.default_rng(0) if rng is None else rng
        self.weights, self.biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = final_scale if i == n_layers - 1 and final_scale else 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def params(self) -> list:
        """Parameter arrays in the fixed order W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input has {x.shape[1]} features, network expects {self.sizes[0]}")
        inputs, pre, post = [], [], []
        h = x
        for W, b, name in zip(self.weights, self.biases, self.activations):
            inputs.append(h)
            z = h @ W + b
            h = _act(name, z)
            pre.append(z)
            post.append(h)
        if self.squash == "tanh":
            h = np.tanh(h)
        return (h[0] if single else h), Tape(inputs, pre, post, h)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, tape: Tape, dy):
        """Gradients of a scalar loss given ``dy = dLoss/doutput``.

        Returns ``(grads, dx)`` where ``grads`` follows :attr:`params` order.
        """
        d = np.asarray(dy, dtype=float).reshape(tape.output.shape)
        if self.squash == "tanh":
            d = d * (1.0 - tape.output ** 2)
        grads = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            d = d * _act_grad(self.activations[i], tape.pre[i], tape.post[i])
            grads[2 * i] = tape.inputs[i].T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.weights[i].T
        return grads, d

    def copy(self) -> "Mlp":
        twin = Mlp.__new__(Mlp)
        twin.sizes, twin.activations, twin.squash = self.sizes, list(self.activations), self.squash
        twin.weights = [W.copy() for W in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.size}")
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "activations": self.activations,
                "squash": self.squash, "params": [float(v) for v in self.get_flat()]}

    @classmethod
    def from_dict(cls, d) -> "Mlp":
        net = cls(d["sizes"], d["activations"], d["squash"])
        net.set_flat(d["params"])
        return net


def mlp_forward(net: Mlp, x):
    return net(x)


def grad(net: Mlp, x, loss_fn):
    """Reverse-mode gradient of ``loss_fn(net(x))``.

    ``loss_fn`` maps the network output to ``(loss, dLoss/doutput)``.
    Returns ``(loss, grads)`` with grads in :attr:`Mlp.params` order.
    """
    y, tape = net.forward(x)
    loss, dy = loss_fn(y)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    grads, _ = net.backward(tape, dy)
    return loss, grads


def polyak_update(target: Mlp, source: Mlp, tau: float) -> Mlp:
    """In place ``target <- tau * source + (1 - tau) * target``; returns ``target``."""
    if target.sizes != source.sizes:
        raise ValueError(f"shape mismatch {target.sizes} vs {source.sizes}")
    if tau == 1.0:
        for t, s in zip(target.params, source.params):
            t[...] = s
    elif tau != 0.0:
        for t, s in zip(target.params, source.params):
            t *= 1.0 - tau
            t += tau * s
    return target


class SGD:
    def __init__(self, params, lr):
        self.params, self.lr = params, lr

    def step(self, grads):
        for p, g in zip(self.params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params, self.lr, self.betas, self.eps = params, lr, betas, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name, params, lr):
    if name == "sgd":
        return SGD(params, lr)
    if name == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {name!r}")
