"""Hiding a sparse ticket inside a dense network by layerwise neuron matching."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .net import MaskedMLP, forward
from .tickets import SparseTicket


class PlantingError(ValueError):
    pass


@dataclass
class PlantReport:
    """Where each target neuron went and how it was rescaled.

    ``placement[l - 1]`` maps target neuron -> mother neuron for layer ``l``;
    a planted mother neuron computes ``target / neuron_scales[l - 1][i]``.
    """

    placement: list[dict[int, int]]
    neuron_scales: list[dict[int, float]]
    lambda_out: np.ndarray
    weight_support: list[np.ndarray] = field(repr=False)
    bias_support: list[np.ndarray] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "placement": [{str(k): v for k, v in p.items()} for p in self.placement],
            "neuron_scales": [{str(k): v for k, v in s.items()} for s in self.neuron_scales],
            "lambda_out": self.lambda_out.tolist(),
            "weight_support": [np.argwhere(m).tolist() for m in self.weight_support],
            "bias_support": [np.flatnonzero(m).tolist() for m in self.bias_support],
            "weight_shapes": [list(m.shape) for m in self.weight_support],
        }

    @classmethod
    def from_dict(cls, d) -> "PlantReport":
        wsup, bsup = [], []
        for shape, idx, bidx in zip(d["weight_shapes"], d["weight_support"], d["bias_support"]):
            m = np.zeros(shape, dtype=bool)
            if idx:
                r, c = np.array(idx).T
                m[r, c] = True
            b = np.zeros(shape[1], dtype=bool)
            b[bidx] = True
            wsup.append(m)
            bsup.append(b)
        return cls(
            [{int(k): int(v) for k, v in p.items()} for p in d["placement"]],
            [{int(k): float(v) for k, v in s.items()} for s in d["neuron_scales"]],
            np.asarray(d["lambda_out"], dtype=float),
            wsup,
            bsup,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "PlantReport":
        return cls.from_dict(json.loads(s))


def match_quality(theta, m) -> tuple[float, float]:
    """Residual ``||theta - lam m||`` at the least-squares scale ``lam = theta.m / ||m||^2``."""
    theta = np.asarray(theta, dtype=float)
    m = np.asarray(m, dtype=float)
    if theta.shape != m.shape:
        raise ValueError("theta and m must have the same length")
    mm = float(m @ m)
    if mm == 0.0:
        raise ValueError("candidate parameter vector is all zero")
    lam = float(theta @ m) / mm
    return float(np.linalg.norm(theta - lam * m)), lam


def _best_candidates(theta, M):
    """Vectorised match_quality over candidate columns of ``M`` (k x n)."""
    mm = np.einsum("ij,ij->j", M, M)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (theta @ M) / mm
    q = np.linalg.norm(theta[:, None] - lam[None, :] * M, axis=0)
    return q, lam, mm


def plant(target: SparseTicket, mother: MaskedMLP, rescale: bool = True) -> tuple[MaskedMLP, PlantReport]:
    """Overwrite the best-matching mother neurons with rescaled target neurons.

    Hidden layers are processed from the input up; within a layer the target
    neurons go in order of decreasing in-degree (ties by index) and each takes
    the unmatched mother neuron with the smallest residual among those with a
    positive scale. Output neurons map one to one; their scales form
    ``lambda_out`` so that ``lambda_out * f_planted = f_target``.

    ``rescale=False`` copies the raw target values instead (scale 1), which
    leaves the ticket easy to spot; it exists for comparison.
    """
    L = target.depth
    if mother.depth != L:
        raise PlantingError(f"depth mismatch: target {L}, mother {mother.depth}")
    tw, mw = target.arch.widths, mother.arch.widths
    if tw[0] != mw[0] or tw[-1] != mw[-1]:
        raise PlantingError(f"input/output widths must agree: target {tw}, mother {mw}")
    for l in range(1, L):
        if mw[l] < tw[l]:
            raise PlantingError(f"layer {l}: mother width {mw[l]} < target width {tw[l]}")

    out = mother.copy()
    Wt, bt = target.dense()
    prev_map = {i: i for i in range(tw[0])}
    prev_scale = {i: 1.0 for i in range(tw[0])}
    placement, scales = [], []
    wsup = [np.zeros(s, dtype=bool) for s in mother.arch.weight_shapes()]
    bsup = [np.zeros(s[1], dtype=bool) for s in mother.arch.weight_shapes()]
    lambda_out = np.ones(tw[-1])

    for l in range(1, L + 1):
        W, b = Wt[l - 1], bt[l - 1]
        Wm, bm = out.weights[l - 1], out.biases[l - 1]
        k = (W != 0).sum(axis=0) + (b != 0)
        order = sorted(range(tw[l]), key=lambda i: (-k[i], i))
        free = np.ones(mw[l], dtype=bool)
        cur_map, cur_scale = {}, {}
        for i in order:
            rows = [r for r in np.flatnonzero(W[:, i]) if r in prev_map]
            has_bias = b[i] != 0
            if not rows and not has_bias:
                continue
            theta = np.array([W[r, i] * prev_scale[r] for r in rows] + ([b[i]] if has_bias else []))
            mrows = [prev_map[r] for r in rows]
            if l < L:
                M = np.vstack([Wm[mrows, :]] + ([bm[None, :]] if has_bias else []))
                q, lam, mm = _best_candidates(theta, M)
                ok = free & (mm > 0) & (lam > 0)
                if not rescale:
                    ok = free.copy()
                    lam = np.ones(mw[l])
                    q = np.zeros(mw[l])
                if not ok.any():
                    raise PlantingError(f"layer {l}: no candidate with positive scale for target neuron {i}")
                j = int(np.flatnonzero(ok)[np.argmin(q[ok])])
                s = float(lam[j])
                free[j] = False
            else:
                j = i
                M = np.concatenate([Wm[mrows, j], [bm[j]] if has_bias else []])
                mm = float(M @ M)
                s = float(theta @ M) / mm if (rescale and mm > 0) else 1.0
                if s == 0.0:
                    s = 1.0
                lambda_out[i] = s
            planted = theta / s
            Wm[mrows, j] = planted[: len(rows)]
            wsup[l - 1][mrows, j] = True
            if has_bias:
                bm[j] = planted[-1]
                bsup[l - 1][j] = True
            cur_map[i], cur_scale[i] = j, s
        placement.append(cur_map)
        scales.append(cur_scale)
        prev_map, prev_scale = cur_map, cur_scale
    return out, PlantReport(placement, scales, lambda_out, wsup, bsup)


def extract_subnet(mother: MaskedMLP, report: PlantReport) -> MaskedMLP:
    """The planted network masked down to exactly the planted entries."""
    if [m.shape for m in report.weight_support] != [w.shape for w in mother.weights]:
        raise PlantingError("report does not match the mother network's shapes")
    sub = mother.copy()
    for l in range(mother.depth):
        sub.weight_masks[l] = report.weight_support[l].astype(float)
        sub.bias_masks[l] = report.bias_support[l].astype(float)
        sub.weights[l] = np.where(report.weight_support[l], sub.weights[l], 0.0)
        sub.biases[l] = np.where(report.bias_support[l], sub.biases[l], 0.0)
    return sub


def rescaled_output(sub: MaskedMLP, report: PlantReport, X) -> np.ndarray:
    return forward(sub, X)[1] * report.lambda_out


def planted_masks(report: PlantReport) -> tuple[list[np.ndarray], list[np.ndarray]]:
    return [m.astype(float) for m in report.weight_support], [m.astype(float) for m in report.bias_support]


def hiding_score(mother: MaskedMLP, report: PlantReport) -> list[dict]:
    """Per-layer RMS of planted weight entries over the RMS of the others.

    Layers without planted entries report ``ratio=None``.
    """
    rows = []
    for l, (W, sup) in enumerate(zip(mother.weights, report.weight_support), start=1):
        planted, rest = W[sup], W[~sup]
        if planted.size == 0 or rest.size == 0:
            rows.append({"layer": l, "n_planted": int(planted.size), "ratio": None})
            continue
        rms_p = float(np.sqrt(np.mean(planted**2)))
        rms_b = float(np.sqrt(np.mean(rest**2)))
        rows.append({
            "layer": l,
            "n_planted": int(planted.size),
            "planted_rms": rms_p,
            "background_rms": rms_b,
            "planted_max": float(np.abs(planted).max()),
            "background_max": float(np.abs(rest).max()),
            "ratio": rms_p / rms_b if rms_b > 0 else float("inf"),
        })
    return rows
