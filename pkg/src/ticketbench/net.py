"""Masked dense ReLU networks in float64 numpy.

Weights of layer ``l`` are stored as ``(n_{l-1}, n_l)`` matrices so a batch of
row vectors propagates as ``X @ W + b``. Column ``i`` of a weight matrix holds
the incoming weights of neuron ``i``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LOSS_KINDS = ("mse", "softmax-cross-entropy")


@dataclass(frozen=True)
class Architecture:
    widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2:
            raise ValueError("an architecture needs at least an input and an output layer")
        if any(w < 1 for w in widths):
            raise ValueError(f"all widths must be >= 1, got {widths}")
        object.__setattr__(self, "widths", widths)

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    def weight_shapes(self) -> list[tuple[int, int]]:
        return [(self.widths[l - 1], self.widths[l]) for l in range(1, len(self.widths))]

    def n_weights(self) -> int:
        return sum(a * b for a, b in self.weight_shapes())

    def n_biases(self) -> int:
        return sum(self.widths[1:])


def as_arch(arch) -> Architecture:
    return arch if isinstance(arch, Architecture) else Architecture(tuple(arch))


@dataclass
class InitSpec:
    """Uniform init scales. ``sigma_w=None`` means ``sqrt(6 / n_{l-1})`` per layer,
    the uniform bound that keeps ReLU activations O(1) with depth."""

    sigma_w: Sequence[float] | None = None
    seed: int = 0

    def resolve(self, arch: Architecture) -> np.ndarray:
        if self.sigma_w is None:
            return np.array([np.sqrt(6.0 / n) for n in arch.widths[:-1]])
        sig = np.broadcast_to(np.asarray(self.sigma_w, dtype=np.float64), (arch.depth,)).copy()
        if np.any(sig <= 0):
            raise ValueError("sigma_w must be positive in every layer")
        return sig


@dataclass
class MaskedMLP:
    arch: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    weight_masks: list[np.ndarray] = field(default=None)
    bias_masks: list[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.arch = as_arch(self.arch)
        if self.weight_masks is None:
            self.weight_masks = [np.ones_like(w) for w in self.weights]
        if self.bias_masks is None:
            self.bias_masks = [np.ones_like(b) for b in self.biases]
        shapes = self.arch.weight_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError("number of layers does not match the architecture")
        for l, (w, b, wm, bm, shp) in enumerate(
            zip(self.weights, self.biases, self.weight_masks, self.bias_masks, shapes), start=1
        ):
            if w.shape != shp or wm.shape != shp:
                raise ValueError(f"layer {l}: weight shape {w.shape} (mask {wm.shape}) != {shp}")
            if b.shape != (shp[1],) or bm.shape != (shp[1],):
                raise ValueError(f"layer {l}: bias shape {b.shape} (mask {bm.shape}) != {(shp[1],)}")

    @property
    def depth(self) -> int:
        return self.arch.depth

    def copy(self) -> "MaskedMLP":
        return MaskedMLP(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [m.copy() for m in self.weight_masks],
            [m.copy() for m in self.bias_masks],
        )

    def effective(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        ws = [w * m for w, m in zip(self.weights, self.weight_masks)]
        bs = [b * m for b, m in zip(self.biases, self.bias_masks)]
        return ws, bs

    def params(self) -> list[np.ndarray]:
        """Flat list ``[W1, b1, W2, b2, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def masks(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weight_masks, self.bias_masks):
            out += [w, b]
        return out

    def predict(self, X) -> np.ndarray:
        return forward(self, X)[1]

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "arch": list(self.arch.widths),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "weight_masks": [m.astype(int).tolist() for m in self.weight_masks],
            "bias_masks": [m.astype(int).tolist() for m in self.bias_masks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MaskedMLP":
        arch = Architecture(tuple(d["arch"]))
        wshapes = arch.weight_shapes()
        bshapes = [(s[1],) for s in wshapes]

        def arrays(key, shapes):
            return [np.asarray(x, dtype=np.float64).reshape(s) for x, s in zip(d[key], shapes)]

        return cls(
            arch,
            arrays("weights", wshapes),
            arrays("biases", bshapes),
            arrays("weight_masks", wshapes),
            arrays("bias_masks", bshapes),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "MaskedMLP":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def mlp_new(arch, init: InitSpec | None = None) -> MaskedMLP:
    """Uniform init: ``w ~ U[-s_l, s_l]``, ``b ~ U[-prod_{k<=l} s_k, prod_{k<=l} s_k]``."""
    arch = as_arch(arch)
    init = init or InitSpec()
    sig = init.resolve(arch)
    rng = np.random.default_rng(init.seed)
    weights, biases = [], []
    bias_scale = 1.0
    for l, (n_in, n_out) in enumerate(arch.weight_shapes()):
        bias_scale *= sig[l]
        weights.append(rng.uniform(-sig[l], sig[l], size=(n_in, n_out)))
        biases.append(rng.uniform(-bias_scale, bias_scale, size=n_out))
    return MaskedMLP(arch, weights, biases)


def relu(z):
    return np.maximum(z, 0.0)


def _forward(weights, biases, X):
    """Returns (hidden activations incl. input, pre-activations, output)."""
    acts = [X]
    pre = []
    a = X
    L = len(weights)
    for l in range(L):
        z = a @ weights[l] + biases[l]
        if l < L - 1:
            pre.append(z)
            a = relu(z)
            acts.append(a)
        else:
            return acts, pre, z


def _as_batch(net: MaskedMLP, x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.arch.n_in:
        raise ValueError(f"expected inputs of dimension {net.arch.n_in}, got shape {np.shape(x)}")
    return X, single


def forward(net: MaskedMLP, x) -> tuple[list[np.ndarray], np.ndarray]:
    """Hidden activations (input first) and linear output.

    Accepts one input vector or a batch of row vectors.
    """
    X, single = _as_batch(net, x)
    ws, bs = net.effective()
    acts, _, out = _forward(ws, bs, X)
    if single:
        return [a[0] for a in acts], out[0]
    return acts, out


def loss_value(out: np.ndarray, y: np.ndarray, kind: str) -> tuple[float, np.ndarray]:
    """Loss and its gradient w.r.t. the network output."""
    B = out.shape[0]
    if kind == "mse":
        y = np.asarray(y, dtype=np.float64).reshape(out.shape)
        r = out - y
        return float(np.mean(r * r)), 2.0 * r / r.size
    if kind == "softmax-cross-entropy":
        labels = np.asarray(y).astype(np.int64).reshape(-1)
        if labels.shape[0] != B:
            raise ValueError("one label per sample expected")
        z = out - out.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = -float(np.mean(logp[np.arange(B), labels]))
        g = np.exp(logp)
        g[np.arange(B), labels] -= 1.0
        return loss, g / B
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def _grads(weights, biases, X, y, kind):
    acts, pre, out = _forward(weights, biases, X)
    loss, delta = loss_value(out, y, kind)
    L = len(weights)
    gW, gb = [None] * L, [None] * L
    for l in range(L - 1, -1, -1):
        gW[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ weights[l].T) * (pre[l - 1] > 0)
    return loss, gW, gb


def loss_and_grad(net: MaskedMLP, X, y, kind: str) -> tuple[float, list[np.ndarray]]:
    """Mean batch loss and gradients ``[dW1, db1, ...]`` w.r.t. the effective parameters.

    Gradients of masked entries are reported unmasked; optimizers zero them.
    """
    X, _ = _as_batch(net, X)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    ws, bs = net.effective()
    loss, gW, gb = _grads(ws, bs, X, y, kind)
    out = []
    for a, b in zip(gW, gb):
        out += [a, b]
    return loss, out


@dataclass
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=1e-3, **kw) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], lr=lr, **kw)


def adam_step(state: OptimizerState, params, grads, masks=None) -> None:
    """In-place Adam update. Entries with ``mask == 0`` get a zero gradient and are left untouched."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if masks is not None:
            g = g * masks[i]
        m, v = state.m[i], state.v[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        upd = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if masks is not None:
            upd = np.where(masks[i] > 0, upd, 0.0)
        p -= upd


def apply_mask(net: MaskedMLP, weight_masks, bias_masks) -> MaskedMLP:
    """Copy of ``net`` with the given masks; masked entries are set to exactly 0."""
    out = net.copy()
    for l, (wm, bm) in enumerate(zip(weight_masks, bias_masks)):
        wm = np.asarray(wm, dtype=np.float64)
        bm = np.asarray(bm, dtype=np.float64)
        if wm.shape != out.weights[l].shape or bm.shape != out.biases[l].shape:
            raise ValueError(f"layer {l + 1}: mask shape mismatch")
        out.weight_masks[l] = (wm != 0).astype(np.float64)
        out.bias_masks[l] = (bm != 0).astype(np.float64)
        out.weights[l] = np.where(out.weight_masks[l] > 0, out.weights[l], 0.0)
        out.biases[l] = np.where(out.bias_masks[l] > 0, out.biases[l], 0.0)
    return out


def sparsity(net_or_masks) -> float:
    """Kept weight entries over all weight entries (biases excluded)."""
    masks = net_or_masks.weight_masks if isinstance(net_or_masks, MaskedMLP) else net_or_masks
    kept = sum(int(np.count_nonzero(m)) for m in masks)
    total = sum(m.size for m in masks)
    return kept / total


def sparsity_all(net: MaskedMLP) -> float:
    """Like :func:`sparsity` but counting biases too."""
    kept = sum(int(np.count_nonzero(m)) for m in net.masks())
    total = sum(m.size for m in net.masks())
    return kept / total


def evaluate(net: MaskedMLP, X, y, kind: str) -> float:
    """Accuracy for classification, mean squared error for regression."""
    out = net.predict(X)
    if kind == "softmax-cross-entropy":
        return float(np.mean(np.argmax(out, axis=1) == np.asarray(y).reshape(-1)))
    y = np.asarray(y, dtype=np.float64).reshape(out.shape)
    return float(np.mean((out - y) ** 2))


def train(
    net: MaskedMLP,
    train_set,
    test_set=None,
    epochs: int = 10,
    batch_size: int = 32,
    lr: float = 1e-3,
    kind: str | None = None,
    seed: int = 0,
) -> tuple[MaskedMLP, float]:
    """Adam training of the unmasked entries. Returns a trained copy and the test metric.

    ``train_set``/``test_set`` are :class:`ticketbench.datasets.Dataset` objects
    (anything with ``X``, ``y`` and ``loss_kind``).
    """
    kind = kind or train_set.loss_kind
    n = len(train_set.X)
    if n == 0:
        raise ValueError("empty dataset")
    net = net.copy()
    params, masks = net.params(), net.masks()
    state = OptimizerState.for_params(params, lr=lr)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, grads = loss_and_grad(net, train_set.X[idx], train_set.y[idx], kind)
            adam_step(state, params, grads, masks)
    test_set = test_set if test_set is not None else train_set
    return net, evaluate(net, test_set.X, test_set.y, kind)
