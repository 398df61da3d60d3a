"""Synthetic benchmark tasks: ReLU regression, ring classification, helix regression."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

TASKS = ("relu", "circle", "helix")
# ring boundaries on the squared radius
CIRCLE_THRESHOLDS = (0.2, 0.5, 0.7)
N_CLASSES = 4


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str
    seed: int | None = None

    def __len__(self):
        return len(self.X)

    @property
    def is_classification(self) -> bool:
        return self.task == "circle"

    @property
    def loss_kind(self) -> str:
        return "softmax-cross-entropy" if self.is_classification else "mse"

    def to_csv(self, path) -> None:
        xcols = [f"x{i}" for i in range(self.X.shape[1])]
        if self.is_classification:
            ycols = ["label"]
            Y = self.y.reshape(-1, 1)
        else:
            Y = self.y.reshape(len(self.y), -1)
            ycols = [f"y{i}" for i in range(Y.shape[1])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(xcols + ycols)
            for xr, yr in zip(self.X, Y):
                w.writerow([repr(float(v)) for v in xr] + [int(v) if self.is_classification else repr(float(v)) for v in yr])


def helix_targets(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    t = 5 * np.pi + 3 * np.pi * x
    return np.stack([t * np.cos(t), t * np.sin(t), t], axis=1) / (8 * np.pi)


def circle_labels(X) -> np.ndarray:
    r2 = np.sum(np.asarray(X) ** 2, axis=1)
    return np.searchsorted(np.array(CIRCLE_THRESHOLDS), r2, side="right").astype(np.int64)


def _flip_targets(labels, r2):
    """Adjacent band whose shared boundary is closest in squared radius."""
    th = np.array(CIRCLE_THRESHOLDS)
    lower = np.abs(r2 - th[np.clip(labels - 1, 0, 2)])
    upper = np.abs(r2 - th[np.clip(labels, 0, 2)])
    go_up = upper < lower
    go_up = np.where(labels == 0, True, np.where(labels == N_CLASSES - 1, False, go_up))
    return np.where(go_up, labels + 1, labels - 1)


def gen_relu(n: int = 10000, noise_sigma: float = 0.01, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 1))
    y = np.maximum(X, 0.0) + noise_sigma * rng.standard_normal((n, 1))
    return Dataset(X, y, "relu", seed)


def gen_circle(n: int = 10000, flip_rate: float = 0.01, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 2))
    labels = circle_labels(X)
    flip = rng.random(n) < flip_rate
    flipped = _flip_targets(labels, np.sum(X**2, axis=1))
    return Dataset(X, np.where(flip, flipped, labels), "circle", seed)


def gen_helix(n: int = 10000, noise_sigma: float = 0.01, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 1))
    y = helix_targets(X) + noise_sigma * rng.standard_normal((n, 3))
    return Dataset(X, y, "helix", seed)


def generate(task: str, n: int = 10000, noise: float | None = None, seed: int = 0) -> Dataset:
    """Dispatch on task name; ``noise`` is the flip rate for circle, sigma otherwise."""
    if task == "relu":
        return gen_relu(n, 0.01 if noise is None else noise, seed)
    if task == "circle":
        return gen_circle(n, 0.01 if noise is None else noise, seed)
    if task == "helix":
        return gen_helix(n, 0.01 if noise is None else noise, seed)
    raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")


def split(d: Dataset, test_frac: float = 0.1, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0 < test_frac < 1:
        raise ValueError("test_frac must lie in (0, 1)")
    n = len(d)
    order = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_frac * n))
    te, tr = order[:n_test], order[n_test:]
    return Dataset(d.X[tr], d.y[tr], d.task, d.seed), Dataset(d.X[te], d.y[te], d.task, d.seed)
