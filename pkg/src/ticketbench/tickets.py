"""Hand-constructed sparse target networks with known structure.

Entries use 1-based layer indices; weight ``(l, row, col)`` connects neuron
``row`` of layer ``l-1`` to neuron ``col`` of layer ``l``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .datasets import CIRCLE_THRESHOLDS, helix_targets
from .net import Architecture, MaskedMLP, as_arch, forward


@dataclass(frozen=True)
class SparseTicket:
    arch: Architecture
    weight_entries: tuple[tuple[int, int, int, float], ...]
    bias_entries: tuple[tuple[int, int, float], ...]
    task: str = "custom"
    head: str = "linear"  # or "softmax-logits"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arch = as_arch(self.arch)
        object.__setattr__(self, "arch", arch)
        shapes = arch.weight_shapes()
        for l, r, c, v in self.weight_entries:
            if not 1 <= l <= arch.depth or not (0 <= r < shapes[l - 1][0] and 0 <= c < shapes[l - 1][1]):
                raise ValueError(f"weight entry {(l, r, c)} out of bounds for {arch.widths}")
            if v == 0:
                raise ValueError(f"weight entry {(l, r, c)} is zero")
        for l, i, v in self.bias_entries:
            if not 1 <= l <= arch.depth or not 0 <= i < arch.widths[l]:
                raise ValueError(f"bias entry {(l, i)} out of bounds for {arch.widths}")
            if v == 0:
                raise ValueError(f"bias entry {(l, i)} is zero")

    @classmethod
    def from_dense(cls, arch, weights, biases, task="custom", head="linear", meta=None) -> "SparseTicket":
        wents, bents = [], []
        for l, (W, b) in enumerate(zip(weights, biases), start=1):
            for r, c in zip(*np.nonzero(W)):
                wents.append((l, int(r), int(c), float(W[r, c])))
            for i in np.flatnonzero(b):
                bents.append((l, int(i), float(b[i])))
        return cls(as_arch(arch), tuple(wents), tuple(bents), task, head, dict(meta or {}))

    def dense(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        shapes = self.arch.weight_shapes()
        Ws = [np.zeros(s) for s in shapes]
        bs = [np.zeros(s[1]) for s in shapes]
        for l, r, c, v in self.weight_entries:
            Ws[l - 1][r, c] = v
        for l, i, v in self.bias_entries:
            bs[l - 1][i] = v
        return Ws, bs

    def to_mlp(self) -> MaskedMLP:
        Ws, bs = self.dense()
        return MaskedMLP(
            self.arch, Ws, bs, [(W != 0).astype(float) for W in Ws], [(b != 0).astype(float) for b in bs]
        )

    @property
    def depth(self) -> int:
        return self.arch.depth

    @property
    def n_weights(self) -> int:
        return len(self.weight_entries)

    def in_degrees(self, layer: int) -> np.ndarray:
        """Nonzero incoming weights plus one for a nonzero bias, per neuron of ``layer``."""
        k = np.zeros(self.arch.widths[layer], dtype=int)
        for l, _, c, _ in self.weight_entries:
            if l == layer:
                k[c] += 1
        for l, i, _ in self.bias_entries:
            if l == layer:
                k[i] += 1
        return k

    def k_max(self, layer: int) -> int:
        return int(self.in_degrees(layer).max())

    def to_dict(self) -> dict:
        return {
            "arch": list(self.arch.widths),
            "task": self.task,
            "head": self.head,
            "weights": [list(e) for e in self.weight_entries],
            "biases": [list(e) for e in self.bias_entries],
        }

    @classmethod
    def from_dict(cls, d) -> "SparseTicket":
        return cls(
            Architecture(tuple(d["arch"])),
            tuple((int(l), int(r), int(c), float(v)) for l, r, c, v in d["weights"]),
            tuple((int(l), int(i), float(v)) for l, i, v in d["biases"]),
            d.get("task", "custom"),
            d.get("head", "linear"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "SparseTicket":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class KnotGrid:
    knots: tuple[float, ...]
    signs: tuple[int, ...]

    def __post_init__(self):
        s = np.asarray(self.knots, dtype=float)
        if len(s) < 1 or len(self.signs) != len(s):
            raise ValueError("need one sign per knot and at least one knot")
        if np.any(np.diff(s) <= 0):
            raise ValueError("knots must be strictly increasing (no duplicates)")
        if any(p not in (-1, 1) for p in self.signs):
            raise ValueError("signs must be +1 or -1")

    @classmethod
    def equidistant(cls, lo: float, hi: float, n: int, alternate: bool = True) -> "KnotGrid":
        knots = np.linspace(lo, hi, n)
        signs = [1 if (j % 2 == 0 or not alternate) else -1 for j in range(n)]
        return cls(tuple(float(k) for k in knots), tuple(signs))


def pwl_eval(a, b, grid: KnotGrid, x) -> np.ndarray:
    s = np.asarray(grid.knots)
    p = np.asarray(grid.signs)
    x = np.asarray(x, dtype=float)
    return np.maximum(p * (x[..., None] - s), 0.0) @ np.asarray(a) + b


def univariate_pwl(f: Callable, grid: KnotGrid, eps: float = 1e-6) -> tuple[np.ndarray, float]:
    """Coefficients ``(a, b)`` of ``g(x) = sum_j a_j relu(p_j (x - s_j)) + b``.

    ``a_j`` is the slope change at knot ``j`` (``a_1`` the first slope) and
    ``s_{N+1} = s_N + eps``. For negative signs, ``relu(-(x - s))`` carries an
    extra linear term ``-(x - s)``; that slope is folded into ``a_1`` so ``g``
    interpolates ``f`` at every knot for any sign pattern with ``p_1 = +1``.
    """
    s = np.asarray(grid.knots, dtype=float)
    p = np.asarray(grid.signs)
    ext = np.append(s, s[-1] + eps)
    fv = np.array([f(v) for v in ext], dtype=float)
    m = np.diff(fv) / np.diff(ext)
    a = np.empty_like(m)
    a[0] = m[0]
    a[1:] = np.diff(m)
    neg = p < 0
    if neg.any():
        if p[0] < 0:
            raise ValueError("mixed signs need p_1 = +1 to absorb the linear correction")
        a[0] += a[neg].sum()
    b = fv[0] - float(np.sum(a * np.maximum(p * (s[0] - s), 0.0)))
    return a, b


def build_relu_ticket(L: int = 5) -> SparseTicket:
    """One neuron per layer, unit weights, zero biases: computes ``max(0, x)``."""
    if L < 2:
        raise ValueError("relu ticket needs depth >= 2 (the output layer is linear)")
    arch = Architecture((1,) * (L + 1))
    return SparseTicket(arch, tuple((l, 0, 0, 1.0) for l in range(1, L + 1)), (), "relu", "linear")


def circle_logit_offsets(thresholds=CIRCLE_THRESHOLDS) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(thresholds)])


def build_circle_ticket(L: int = 5, knots: int = 10, logit_scale: float = 1.0) -> SparseTicket:
    """Ring classifier over ``g = x1^2 + x2^2``.

    Layers 1-2 fold the input into the first quadrant, layers ``3..L-2`` fold
    it about axes at angle ``pi / 2^(l-1)`` (the represented 2-vector is
    ``(x1, x2 + x3)``; ``x2``/``x3`` are the positive/negative perpendicular
    parts), layer ``L-1`` holds knot neurons of a PWL ``h(u) = u^2`` for each
    component, and the linear head emits ``logit_c = scale*((c+1) g - T_c)``
    with ``T_c`` the cumulative thresholds, so ``argmax`` counts the crossed rings.
    """
    if L < 4:
        raise ValueError("circle ticket needs depth >= 4")
    n_mirror = L - 4
    widths = [2, 4, 2] + [3] * n_mirror + [2 * knots, 4]
    arch = Architecture(tuple(widths))
    Ws = [np.zeros(s) for s in arch.weight_shapes()]
    bs = [np.zeros(s[1]) for s in arch.weight_shapes()]
    Ws[0][0, 0], Ws[0][0, 1], Ws[0][1, 2], Ws[0][1, 3] = 1.0, -1.0, 1.0, -1.0
    Ws[1][0, 0] = Ws[1][1, 0] = Ws[1][2, 1] = Ws[1][3, 1] = 1.0
    # rows of the previous layer feeding the (u, v) components
    u_rows, v_rows = [0], [1]
    for l in range(3, 3 + n_mirror):
        ang = np.pi / 2 ** (l - 1)
        a1, a2 = np.cos(ang), np.sin(ang)
        W = Ws[l - 1]
        for r in u_rows:
            W[r, 0], W[r, 1], W[r, 2] = a1, a2, -a2
        for r in v_rows:
            W[r, 0], W[r, 1], W[r, 2] = a2, -a1, a1
        u_rows, v_rows = [0], [1, 2]

    # u spans [0, sqrt 2] after any fold; v shrinks with each fold
    u_hi = np.sqrt(2.0) if n_mirror else 1.0
    v_hi = np.sqrt(2.0) * np.sin(np.pi / 2 ** (n_mirror + 1)) if n_mirror else 1.0
    grids = [KnotGrid.equidistant(0.0, u_hi, knots), KnotGrid.equidistant(0.0, v_hi, knots)]
    coefs = [univariate_pwl(lambda u: u * u, g) for g in grids]
    W = Ws[L - 2]
    for comp, rows in enumerate((u_rows, v_rows)):
        p = np.asarray(grids[comp].signs, dtype=float)
        cols = slice(comp * knots, (comp + 1) * knots)
        for r in rows:
            W[r, cols] = p
        bs[L - 2][cols] = -p * np.asarray(grids[comp].knots)
    a_all = np.concatenate([coefs[0][0], coefs[1][0]])
    b_all = coefs[0][1] + coefs[1][1]
    offsets = circle_logit_offsets()
    head = Ws[L - 1]
    for c in range(4):
        head[:, c] = logit_scale * (c + 1) * a_all
        bs[L - 1][c] = logit_scale * ((c + 1) * b_all - offsets[c])
    return SparseTicket.from_dense(
        arch, Ws, bs, "circle", "softmax-logits", {"knots": grids, "pwl_a": a_all, "pwl_b": b_all}
    )


def build_helix_ticket(L: int = 5, knots: int = 30) -> SparseTicket:
    """Helix regression ticket.

    Layer 1 shifts ``y = x + 1`` into ``[0, 2]``; layer 2 has the knot neurons
    ``relu(p_j (y - s_j))`` plus one path neuron carrying ``y``; layer 3 (when
    hidden) emits ``f1 + 1``, ``f2 + 1`` and ``y``; later hidden layers are
    identities and the head removes the ``+1`` shifts and maps ``y`` to ``f3``.
    """
    if L < 3:
        raise ValueError("helix ticket needs depth >= 3")
    widths = [1, 1, knots + 1] + [3] * (L - 2)
    arch = Architecture(tuple(widths))
    Ws = [np.zeros(s) for s in arch.weight_shapes()]
    bs = [np.zeros(s[1]) for s in arch.weight_shapes()]
    Ws[0][0, 0], bs[0][0] = 1.0, 1.0
    grid = KnotGrid.equidistant(0.0, 2.0, knots)
    p = np.asarray(grid.signs, dtype=float)
    Ws[1][0, :knots] = p
    bs[1][:knots] = -p * np.asarray(grid.knots)
    Ws[1][0, knots] = 1.0

    coefs = [univariate_pwl(lambda y, i=i: helix_targets(y - 1.0)[0, i], grid) for i in (0, 1)]
    # f3(x) = 0.25 + 0.375 * y
    f3_w, f3_b = 3.0 / 8.0, 0.25
    W3, b3 = Ws[2], bs[2]
    shift = 0.0 if L == 3 else 1.0
    for i, (a, b) in enumerate(coefs):
        W3[:knots, i] = a
        b3[i] = b + shift
    if L == 3:
        W3[knots, 2], b3[2] = f3_w, f3_b
    else:
        W3[knots, 2] = 1.0
        for l in range(4, L):
            np.fill_diagonal(Ws[l - 1], 1.0)
        np.fill_diagonal(Ws[L - 1], 1.0)
        Ws[L - 1][2, 2] = f3_w
        bs[L - 1][:] = (-1.0, -1.0, f3_b)
    return SparseTicket.from_dense(arch, Ws, bs, "helix", "linear", {"knots": grid, "pwl": coefs})


def build_ticket(task: str, L: int, knots: int | None = None) -> SparseTicket:
    if task == "relu":
        return build_relu_ticket(L)
    if task == "circle":
        return build_circle_ticket(L, knots or 10)
    if task == "helix":
        return build_helix_ticket(L, knots or 30)
    raise ValueError(f"unknown task {task!r}")


def eval_ticket(t: SparseTicket, x) -> np.ndarray:
    return forward(t.to_mlp(), x)[1]


def circle_score(t: SparseTicket, X) -> np.ndarray:
    """Pre-head scalar ``g`` of a circle ticket (its squared-radius estimate)."""
    meta = t.meta
    acts, _ = forward(t.to_mlp(), np.atleast_2d(X))
    h = acts[-1]
    return h @ meta["pwl_a"] + meta["pwl_b"]


def ticket_sparsity_in(t: SparseTicket, mother_arch) -> float:
    mother = as_arch(mother_arch)
    if mother.depth != t.depth:
        raise ValueError(f"depth mismatch: ticket {t.depth}, mother {mother.depth}")
    if any(m < w for m, w in zip(mother.widths, t.arch.widths)):
        raise ValueError(f"mother {mother.widths} narrower than ticket {t.arch.widths}")
    return t.n_weights / mother.n_weights()
