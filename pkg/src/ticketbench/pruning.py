"""Saliency scores, mask selection and pruning strategies for :class:`MaskedMLP`.

Score formulas follow the methods' original definitions:

* magnitude ``|theta|``
* SNIP ``|theta * dL/dtheta|``
* GraSP ``theta * (H g)``; GraSP removes the largest ``-theta * Hg``,
  which is keeping the largest ``theta * Hg``
* SynFlow ``|theta| * dR/d|theta|`` with ``R`` the summed output of the
  all-ones input through the absolute-valued network

Higher scores are kept everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .net import MaskedMLP, _forward, _grads, apply_mask, train

METHODS = ("magnitude", "random", "snip", "grasp", "synflow")
DATA_METHODS = ("snip", "grasp")
STRATEGIES = ("singleshot", "multishot", "edge-popup")


@dataclass
class ScoreSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        for s in self.weights + self.biases:
            if not np.all(np.isfinite(s)):
                raise ValueError("scores must be finite")


@dataclass
class PruneResult:
    weight_masks: list[np.ndarray]
    bias_masks: list[np.ndarray]
    schedule: list[float] = field(default_factory=list)
    achieved: list[float] = field(default_factory=list)


# --------------------------------------------------------------------- scores

def score_magnitude(net: MaskedMLP) -> ScoreSet:
    ws, bs = net.effective()
    return ScoreSet([np.abs(w) for w in ws], [np.abs(b) for b in bs])


def score_random(net: MaskedMLP, seed: int = 0) -> ScoreSet:
    rng = np.random.default_rng(seed)
    return ScoreSet([rng.random(w.shape) for w in net.weights], [rng.random(b.shape) for b in net.biases])


def score_snip(net: MaskedMLP, X, y, kind: str) -> ScoreSet:
    ws, bs = net.effective()
    _, gW, gb = _grads(ws, bs, np.asarray(X, float), y, kind)
    return ScoreSet([np.abs(w * g) for w, g in zip(ws, gW)], [np.abs(b * g) for b, g in zip(bs, gb)])


def hessian_gradient_product(net: MaskedMLP, X, y, kind: str, h: float | None = None):
    """Gradient ``g`` and ``H g`` via a central difference of gradients along ``g/||g||``.

    The step is ``h = 1e-4 * (1 + ||theta||)`` unless given. Masked entries are
    held at zero throughout.
    """
    X = np.asarray(X, float)
    ws, bs = net.effective()
    wm, bm = net.weight_masks, net.bias_masks
    _, gW, gb = _grads(ws, bs, X, y, kind)
    gW = [g * m for g, m in zip(gW, wm)]
    gb = [g * m for g, m in zip(gb, bm)]
    gnorm = np.sqrt(sum(float(np.sum(g * g)) for g in gW + gb))
    if gnorm == 0.0:
        return (gW, gb), ([np.zeros_like(w) for w in ws], [np.zeros_like(b) for b in bs])
    if h is None:
        tnorm = np.sqrt(sum(float(np.sum(p * p)) for p in ws + bs))
        h = 1e-4 * (1.0 + tnorm)

    def grad_at(sign):
        w2 = [w + sign * h * g / gnorm for w, g in zip(ws, gW)]
        b2 = [b + sign * h * g / gnorm for b, g in zip(bs, gb)]
        _, a, c = _grads(w2, b2, X, y, kind)
        return [x * m for x, m in zip(a, wm)], [x * m for x, m in zip(c, bm)]

    pW, pb = grad_at(+1.0)
    mW, mb = grad_at(-1.0)
    scale = gnorm / (2.0 * h)
    HgW = [(p - m) * scale for p, m in zip(pW, mW)]
    Hgb = [(p - m) * scale for p, m in zip(pb, mb)]
    return (gW, gb), (HgW, Hgb)


def score_grasp(net: MaskedMLP, X, y, kind: str, h: float | None = None) -> ScoreSet:
    ws, bs = net.effective()
    _, (HgW, Hgb) = hessian_gradient_product(net, X, y, kind, h)
    return ScoreSet([w * g for w, g in zip(ws, HgW)], [b * g for b, g in zip(bs, Hgb)])


def score_synflow(net: MaskedMLP) -> ScoreSet:
    ws, bs = net.effective()
    aw = [np.abs(w) for w in ws]
    ab = [np.abs(b) for b in bs]
    X = np.ones((1, net.arch.n_in))
    acts, pre, out = _forward(aw, ab, X)
    delta = np.ones_like(out)
    L = len(aw)
    sw, sb = [None] * L, [None] * L
    for l in range(L - 1, -1, -1):
        sw[l] = aw[l] * (acts[l].T @ delta)
        sb[l] = ab[l] * delta.sum(axis=0)
        if l > 0:
            delta = (delta @ aw[l].T) * (pre[l - 1] > 0)
    return ScoreSet(sw, sb)


def compute_scores(net: MaskedMLP, method: str, data=None, seed: int = 0, batch_size: int = 32) -> ScoreSet:
    if method == "magnitude":
        return score_magnitude(net)
    if method == "random":
        return score_random(net, seed)
    if method == "synflow":
        return score_synflow(net)
    if method in DATA_METHODS:
        if data is None:
            raise ValueError(f"{method} needs a dataset")
        X, y = _batch(data, seed, batch_size)
        fn = score_snip if method == "snip" else score_grasp
        return fn(net, X, y, data.loss_kind)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _batch(data, seed, batch_size):
    idx = np.random.default_rng(seed).permutation(len(data.X))[:batch_size]
    return data.X[idx], data.y[idx]


# ------------------------------------------------------------- mask selection

def _apportion(rho: float, sizes: list[int]) -> list[int]:
    """Per-layer keep counts close to ``rho * size`` that sum to ``round(rho * total)``."""
    exact = np.array([rho * n for n in sizes])
    k = np.floor(exact).astype(int)
    rest = int(round(rho * sum(sizes))) - int(k.sum())
    frac = exact - k
    for i in np.argsort(-frac, kind="stable")[: max(rest, 0)]:
        k[i] += 1
    return [min(int(x), n) for x, n in zip(k, sizes)]


def _top_k(flat_scores: np.ndarray, k: int) -> np.ndarray:
    keep = np.zeros(flat_scores.size, dtype=bool)
    if k > 0:
        keep[np.argsort(-flat_scores, kind="stable")[:k]] = True
    return keep


def _bias_from_weights(weight_masks, current_bias=None):
    out = []
    for l, wm in enumerate(weight_masks):
        b = (wm.sum(axis=0) > 0).astype(float)
        if current_bias is not None:
            b = b * (current_bias[l] > 0)
        out.append(b)
    return out


def select_mask(
    scores: ScoreSet,
    rho: float,
    scope: str = "global",
    current: tuple[list[np.ndarray], list[np.ndarray]] | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Keep the highest-scoring ``round(rho * N)`` weight entries.

    ``global`` ranks all weights together, ``local`` apportions the budget per
    layer. Ties go to the earlier ``(layer, row, col)``. Entries already masked
    in ``current`` are never revived. A bias survives iff its neuron keeps at
    least one incoming weight.
    """
    if not 0 < rho <= 1:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    ws = [np.asarray(s, float) for s in scores.weights]
    if current is not None:
        ws = [np.where(m > 0, s, -np.inf) for s, m in zip(ws, current[0])]
    sizes = [s.size for s in ws]
    if scope == "global":
        flat = np.concatenate([s.ravel() for s in ws])
        keep = _top_k(flat, int(round(rho * flat.size)))
        masks, off = [], 0
        for s in ws:
            masks.append(keep[off:off + s.size].reshape(s.shape).astype(float))
            off += s.size
    elif scope == "local":
        masks = [_top_k(s.ravel(), k).reshape(s.shape).astype(float) for s, k in zip(ws, _apportion(rho, sizes))]
    else:
        raise ValueError(f"unknown scope {scope!r}")
    if current is not None:
        masks = [m * (c > 0) for m, c in zip(masks, current[0])]
    return masks, _bias_from_weights(masks, None if current is None else current[1])


def masks_sparsity(weight_masks) -> float:
    return sum(float(m.sum()) for m in weight_masks) / sum(m.size for m in weight_masks)


# ------------------------------------------------------------------ strategies

def singleshot(
    net: MaskedMLP,
    method: str,
    rho: float,
    data=None,
    synflow_iterations: int = 1,
    scope: str = "global",
    seed: int = 0,
    batch_size: int = 32,
) -> PruneResult:
    """Score once (or ``synflow_iterations`` times at ``rho^(r/R)``) and prune, no training."""
    if method in DATA_METHODS and data is None:
        raise ValueError(f"{method} needs a dataset")
    R = max(1, int(synflow_iterations))
    current = (net.weight_masks, net.bias_masks)
    schedule, achieved = [], []
    cur = net
    for r in range(1, R + 1):
        target = rho ** (r / R)
        scores = compute_scores(cur, method, data, seed + r - 1, batch_size)
        current = select_mask(scores, target, scope, current)
        cur = apply_mask(net, *current)
        schedule.append(target)
        achieved.append(masks_sparsity(current[0]))
    return PruneResult(current[0], current[1], schedule, achieved)


def multishot(
    net: MaskedMLP,
    method: str,
    rho: float,
    data,
    rounds: int = 10,
    epochs: int = 5,
    scope: str = "global",
    seed: int = 0,
    lr: float = 1e-3,
    batch_size: int = 32,
    on_round=None,
) -> PruneResult:
    """Train, prune to ``rho^(r/rounds)``, reset to the initial values; repeat.

    ``on_round(r, reset_net)`` is called with the freshly reset network at the
    start of every round.
    """
    current = (net.weight_masks, net.bias_masks)
    schedule, achieved = [], []
    for r in range(1, rounds + 1):
        start = apply_mask(net, *current)
        if on_round is not None:
            on_round(r, start)
        trained, _ = train(start, data, None, epochs, batch_size, lr, data.loss_kind, seed + r)
        target = rho ** (r / rounds)
        scores = compute_scores(trained, method, data, seed + r, batch_size)
        current = select_mask(scores, target, scope, current)
        schedule.append(target)
        achieved.append(masks_sparsity(current[0]))
    return PruneResult(current[0], current[1], schedule, achieved)


def anneal_schedule(rho: float, epochs: int, anneal: bool = True, anneal_rounds: int = 10) -> list[float]:
    """Keep fraction used during epoch ``i = 1..epochs``."""
    if not anneal:
        return [rho] * epochs
    return [rho ** (min(i, anneal_rounds) / anneal_rounds) for i in range(1, epochs + 1)]


def _layer_masks_exact(sw, sb, frac):
    # weight budget apportioned so the total matches round(frac * N)
    ks = _apportion(frac, [s.size for s in sw])
    wm = [_top_k(s.ravel(), k).reshape(s.shape).astype(float) for s, k in zip(sw, ks)]
    bm = [_top_k(s, int(round(frac * s.size))).astype(float) for s in sb]
    return wm, bm


def edge_popup(
    net: MaskedMLP,
    rho: float,
    data,
    epochs: int = 10,
    anneal: bool = False,
    seed: int = 0,
    lr: float = 0.5,
    momentum: float = 0.9,
    weight_decay: float = 5e-4,
    batch_size: int = 32,
    anneal_rounds: int = 10,
) -> PruneResult:
    """Learn per-parameter scores on frozen weights; the forward pass keeps the
    top fraction of each layer (weights and biases ranked separately).

    Scores start ``U[0, 1)``, receive straight-through gradients
    ``dL/d(effective) * theta`` and are updated by SGD with momentum, weight
    decay and a per-epoch cosine learning rate.
    """
    if not 0 < rho <= 1:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    rng = np.random.default_rng(seed)
    Ws = [w.copy() for w in net.weights]
    bs = [b.copy() for b in net.biases]
    sw = [rng.random(w.shape) for w in Ws]
    sb = [rng.random(b.shape) for b in bs]
    bw = [np.zeros_like(s) for s in sw]
    bb = [np.zeros_like(s) for s in sb]
    fracs = anneal_schedule(rho, epochs, anneal, anneal_rounds)
    n = len(data.X)
    kind = data.loss_kind
    for e, frac in enumerate(fracs):
        lr_e = 0.5 * lr * (1.0 + np.cos(np.pi * e / epochs))
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            wm, bm = _layer_masks_exact(sw, sb, frac)
            ew = [w * m for w, m in zip(Ws, wm)]
            eb = [b * m for b, m in zip(bs, bm)]
            _, gW, gb = _grads(ew, eb, data.X[idx], data.y[idx], kind)
            for s, buf, g, w in zip(sw + sb, bw + bb, gW + gb, Ws + bs):
                grad = g * w + weight_decay * s
                buf *= momentum
                buf += grad
                s -= lr_e * buf
    final = fracs[-1] if fracs else rho
    wm, bm = _layer_masks_exact(sw, sb, final)
    return PruneResult(wm, bm, fracs, [masks_sparsity(wm)])


# --------------------------------------------------------------- diagnostics

@dataclass
class CollapseReport:
    collapsed_layers: list[int]
    flow_interrupted: bool

    @property
    def collapsed(self) -> bool:
        return bool(self.collapsed_layers) or self.flow_interrupted


def detect_layer_collapse(weight_masks, arch=None) -> CollapseReport:
    """Layers (1-based) without kept weights, and whether any input reaches the output."""
    collapsed = [l for l, m in enumerate(weight_masks, start=1) if not np.any(m)]
    reach = np.ones(weight_masks[0].shape[0], dtype=bool)
    for m in weight_masks:
        reach = (reach.astype(float) @ (np.asarray(m) != 0).astype(float)) > 0
    return CollapseReport(collapsed, not bool(reach.any()))


def prune(
    net: MaskedMLP,
    method: str,
    rho: float,
    strategy: str = "singleshot",
    data=None,
    *,
    scope: str = "global",
    rounds: int = 10,
    epochs: int = 5,
    synflow_iterations: int = 1,
    anneal: bool = False,
    seed: int = 0,
    lr: float | None = None,
    batch_size: int = 32,
) -> PruneResult:
    if strategy == "singleshot":
        return singleshot(net, method, rho, data, synflow_iterations, scope, seed, batch_size)
    if strategy == "multishot":
        if data is None:
            raise ValueError("multishot needs a dataset")
        return multishot(net, method, rho, data, rounds, epochs, scope, seed, lr or 1e-3, batch_size)
    if strategy == "edge-popup":
        if data is None:
            raise ValueError("edge-popup needs a dataset")
        return edge_popup(net, rho, data, epochs, anneal, seed, lr or 0.5, batch_size=batch_size)
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
