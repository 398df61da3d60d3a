"""Experiment orchestration: plant a ticket, prune, evaluate, persist rows."""
from __future__ import annotations

import csv
import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datasets import generate, split
from .net import InitSpec, MaskedMLP, apply_mask, evaluate, forward, mlp_new, sparsity, sparsity_all, train
from .planting import PlantReport, plant
from .pruning import METHODS, STRATEGIES, detect_layer_collapse, prune
from .tickets import build_ticket, ticket_sparsity_in

PLANTED = "planted"
WORKERS_ENV = "TICKETBENCH_WORKERS"


@dataclass
class ExperimentConfig:
    task: str = "circle"
    depth: int = 5
    width: int = 100
    sparsities: list = field(default_factory=lambda: [PLANTED, 0.01, 0.1, 0.5, 1.0])
    methods: list = field(default_factory=lambda: ["magnitude", "random", "snip", "grasp", "synflow"])
    strategy: str = "singleshot"
    scope: str = "global"
    rounds: int = 10
    prune_epochs: int | None = None
    train_epochs: int = 10
    synflow_iterations: int = 1
    anneal: bool = False
    repetitions: int = 1
    seed: int = 0
    n_samples: int = 10000
    noise: float | None = None
    lr: float = 1e-3
    prune_lr: float | None = None
    batch_size: int = 32
    knots: int | None = None
    sigma_w: float | None = None
    out: str | None = None

    def __post_init__(self):
        if self.task not in ("relu", "circle", "helix"):
            raise ValueError(f"unknown task {self.task!r}")
        min_depth = {"relu": 2, "circle": 4, "helix": 3}[self.task]
        if self.depth < min_depth:
            raise ValueError(f"{self.task} needs depth >= {min_depth}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        for m in self.methods:
            if m not in METHODS + (PLANTED, "edge-popup"):
                raise ValueError(f"unknown method {m!r}")
        for s in self.sparsities:
            if s != PLANTED and not 0 < float(s) <= 1:
                raise ValueError(f"sparsity {s!r} outside (0, 1]")


@dataclass
class ResultRow:
    task: str
    method: str
    strategy: str
    target_rho: float
    achieved_rho: float
    achieved_rho_all: float
    post_prune: float
    post_train: float
    seed: int
    layer_collapse: bool
    flow_interrupted: bool
    collapsed_layers: str = ""
    post_prune_rescaled: float | None = None
    recovered_fraction: float | None = None
    iou: float | None = None
    sparsity_label: str = ""


ROW_FIELDS = [f.name for f in dataclasses.fields(ResultRow)]


@dataclass
class Trial:
    """Everything shared by the cells of one repetition."""

    ticket: object
    mother: MaskedMLP
    report: PlantReport
    train_set: object
    test_set: object
    seed: int


def make_trial(cfg: ExperimentConfig, rep: int) -> Trial:
    seed = cfg.seed + rep
    ticket = build_ticket(cfg.task, cfg.depth, cfg.knots)
    arch = [ticket.arch.n_in] + [cfg.width] * (cfg.depth - 1) + [ticket.arch.n_out]
    mother = mlp_new(arch, InitSpec(sigma_w=cfg.sigma_w, seed=seed))
    planted, report = plant(ticket, mother)
    data = generate(cfg.task, cfg.n_samples, cfg.noise, seed)
    tr, te = split(data, 0.1, seed)
    return Trial(ticket, planted, report, tr, te, seed)


def recovery_metrics(found_masks, report: PlantReport) -> dict:
    """Overlap of kept weight positions with the planted support."""
    if len(found_masks) != len(report.weight_support) or any(
        np.shape(f) != s.shape for f, s in zip(found_masks, report.weight_support)
    ):
        raise ValueError("mask shapes do not match the plant report")
    found = np.concatenate([np.asarray(f).ravel() != 0 for f in found_masks])
    truth = np.concatenate([s.ravel() for s in report.weight_support])
    inter = int(np.sum(found & truth))
    union = int(np.sum(found | truth))
    n_true = int(truth.sum())
    return {
        "iou": inter / union if union else 1.0,
        "recovered_fraction": inter / n_true if n_true else 1.0,
        "n_found": int(found.sum()),
        "n_planted": n_true,
    }


def _rescaled_metric(net, report, test_set):
    out = forward(net, test_set.X)[1] * report.lambda_out
    if test_set.is_classification:
        return float(np.mean(out.argmax(axis=1) == test_set.y))
    return float(np.mean((out - test_set.y) ** 2))


def _prune_epochs(cfg: ExperimentConfig, strategy: str) -> int:
    # multishot trains 5 epochs per round; edge-popup learns scores for 10
    if cfg.prune_epochs is not None:
        return cfg.prune_epochs
    return 10 if strategy == "edge-popup" else 5


def run_cell(cfg: ExperimentConfig, trial: Trial, method: str, sparsity_spec) -> ResultRow:
    mother, report = trial.mother, trial.report
    strategy = "edge-popup" if method == "edge-popup" else cfg.strategy
    if sparsity_spec == PLANTED:
        rho = ticket_sparsity_in(trial.ticket, mother.arch)
    else:
        rho = float(sparsity_spec)
    if method == PLANTED:
        wm = [m.astype(float) for m in report.weight_support]
        bm = [m.astype(float) for m in report.bias_support]
        strategy = PLANTED
    else:
        res = prune(
            mother, method, rho, strategy, trial.train_set,
            scope=cfg.scope, rounds=cfg.rounds, epochs=_prune_epochs(cfg, strategy),
            synflow_iterations=cfg.synflow_iterations, anneal=cfg.anneal,
            seed=trial.seed, lr=cfg.prune_lr, batch_size=cfg.batch_size,
        )
        wm, bm = res.weight_masks, res.bias_masks
    pruned = apply_mask(mother, wm, bm)
    kind = trial.test_set.loss_kind
    post_prune = evaluate(pruned, trial.test_set.X, trial.test_set.y, kind)
    _, post_train = train(pruned, trial.train_set, trial.test_set, cfg.train_epochs, cfg.batch_size, cfg.lr, kind, trial.seed)
    collapse = detect_layer_collapse(wm)
    rec = recovery_metrics(wm, report)
    return ResultRow(
        task=cfg.task,
        method=method,
        strategy=strategy,
        target_rho=rho,
        achieved_rho=sparsity(pruned),
        achieved_rho_all=sparsity_all(pruned),
        post_prune=post_prune,
        post_train=post_train,
        seed=trial.seed,
        layer_collapse=bool(collapse.collapsed_layers),
        flow_interrupted=collapse.flow_interrupted,
        collapsed_layers=",".join(str(l) for l in collapse.collapsed_layers),
        post_prune_rescaled=_rescaled_metric(pruned, report, trial.test_set) if method == PLANTED else None,
        recovered_fraction=rec["recovered_fraction"],
        iou=rec["iou"],
        sparsity_label=str(sparsity_spec),
    )


def _run_repetition(args) -> list[ResultRow]:
    cfg, rep = args
    trial = make_trial(cfg, rep)
    methods = list(dict.fromkeys("edge-popup" if (cfg.strategy == "edge-popup" and m != PLANTED) else m for m in cfg.methods))
    rows = []
    for method in methods:
        specs = [PLANTED] if method == PLANTED else cfg.sparsities
        for s in specs:
            rows.append(run_cell(cfg, trial, method, s))
    return rows


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[ResultRow]:
    """All repetitions x methods x sparsities. Repetition ``r`` uses seed ``cfg.seed + r``
    for the mother network, the data and the split, so methods are compared on the same draws."""
    workers = workers or int(os.environ.get(WORKERS_ENV, "1"))
    jobs = [(cfg, r) for r in range(cfg.repetitions)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_run_repetition, jobs))
    else:
        parts = [_run_repetition(j) for j in jobs]
    rows = [row for part in parts for row in part]
    if cfg.out:
        write_tsv(rows, cfg.out)
        write_summary_tsv(rows, summary_path(cfg.out))
    return rows


# ------------------------------------------------------------------------ TSV

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_tsv(rows, path) -> None:
    """Raw rows, one per cell. ``path`` may also be an open text file."""
    if hasattr(path, "write"):
        _write_rows(rows, path)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(rows, fh)


def _write_rows(rows, fh) -> None:
    w = csv.writer(fh, delimiter="\t", lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        w.writerow([_fmt(getattr(r, f)) for f in ROW_FIELDS])


def read_tsv(path) -> list[ResultRow]:
    types = {f.name: f.type for f in dataclasses.fields(ResultRow)}
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh, delimiter="\t"):
            kw = {}
            for k, v in rec.items():
                t = types[k]
                if "bool" in t:
                    kw[k] = v == "1"
                elif "float" in t:
                    kw[k] = None if v == "" else float(v)
                elif t == "int":
                    kw[k] = int(v)
                else:
                    kw[k] = v
            rows.append(ResultRow(**kw))
    return rows


SUMMARY_METRICS = ("post_prune", "post_train", "achieved_rho")


def summarize(rows) -> list[dict]:
    """Mean/min/max per (task, method, strategy, sparsity) group, in first-seen order."""
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r.task, r.method, r.strategy, r.sparsity_label or repr(r.target_rho)), []).append(r)
    out = []
    for (task, method, strategy, label), rs in groups.items():
        rec = {"task": task, "method": method, "strategy": strategy, "sparsity": label,
               "target_rho": float(np.mean([r.target_rho for r in rs])), "n": len(rs)}
        for m in SUMMARY_METRICS:
            vals = np.array([getattr(r, m) for r in rs], dtype=float)
            rec[f"{m}_mean"] = float(vals.mean())
            rec[f"{m}_min"] = float(vals.min())
            rec[f"{m}_max"] = float(vals.max())
        rec["collapse_rate"] = float(np.mean([r.layer_collapse or r.flow_interrupted for r in rs]))
        out.append(rec)
    return out


SUMMARY_FIELDS = ["task", "method", "strategy", "sparsity", "target_rho", "n"] + [
    f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "min", "max")
] + ["collapse_rate"]


def write_summary_tsv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for rec in summarize(rows):
            w.writerow([_fmt(rec[f]) for f in SUMMARY_FIELDS])


def summary_path(path) -> str:
    root, ext = os.path.splitext(str(path))
    return f"{root}.summary{ext or '.tsv'}"
