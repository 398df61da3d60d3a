"""Command line entry point: ``plant``, ``prune``, ``theory`` and ``data``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .datasets import generate
from .harness import PLANTED, ExperimentConfig, run_experiment, write_tsv
from .net import InitSpec, mlp_new
from .planting import extract_subnet, hiding_score, plant, rescaled_output
from .pruning import METHODS, STRATEGIES
from .theory import domain_grid, eps_layer, existence_lower_bound, relu_path_prob
from .tickets import build_ticket, eval_ticket, ticket_sparsity_in


def _sparsity(s: str):
    if s == PLANTED:
        return PLANTED
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a sparsity: {s!r}") from None
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"sparsity {v} outside (0, 1]")
    return v


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


# dest -> (converter, repeatable, builtin default)
OPTIONS = {
    "task": (str, False, None),
    "depth": (int, False, 5),
    "width": (int, False, 100),
    "seed": (int, False, 0),
    "out": (str, False, None),
    "sparsity": (_sparsity, True, [PLANTED, 0.01, 0.1, 0.5, 1.0]),
    "method": (str, True, ["magnitude", "random", "snip", "grasp", "synflow"]),
    "strategy": (str, False, "singleshot"),
    "scope": (str, False, "global"),
    "rounds": (int, False, 10),
    "epochs": (int, False, None),
    "train_epochs": (int, False, 10),
    "reps": (int, False, 1),
    "anneal": (_bool, False, False),
    "synflow_iterations": (int, False, 1),
    "samples": (int, False, 10000),
    "noise": (float, False, None),
    "knots": (int, False, None),
    "eps": (float, False, 0.1),
}


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; repeatable keys take comma lists."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key=value")
            key, val = (p.strip() for p in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in OPTIONS:
                raise ValueError(f"{path}:{n}: unknown key {key!r}")
            conv, many, _ = OPTIONS[key]
            try:
                out[key] = [conv(v.strip()) for v in val.split(",") if v.strip()] if many else conv(val)
            except (argparse.ArgumentTypeError, ValueError) as e:
                raise ValueError(f"{path}:{n}: {e}") from None
    return out


def _common(p: argparse.ArgumentParser, *names):
    helps = {
        "task": "relu, circle or helix",
        "depth": "number of layers L (default 5)",
        "width": "hidden width of the mother network (default 100)",
        "seed": "base seed (default 0)",
        "out": "output path",
    }
    for name in names:
        conv, many, _ = OPTIONS[name]
        kw = {"type": conv, "default": None, "help": helps.get(name)}
        if name == "task":
            kw["choices"] = ["relu", "circle", "helix"]
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, action="append" if many else "store", **kw)
    p.add_argument("--config", help="key=value file; flags take precedence")
    p.set_defaults(subparser=p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ticketbench", description="Planted lottery ticket benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plant", help="build a ticket, plant it in a random network, verify, emit the report")
    _common(p, "task", "depth", "width", "seed", "out", "knots")
    p.add_argument("--net-out", help="also save the planted network as JSON")

    p = sub.add_parser("prune", help="run a pruning experiment and write TSV rows")
    _common(p, "task", "depth", "width", "seed", "out", "sparsity", "method", "strategy", "scope",
            "rounds", "epochs", "train_epochs", "reps", "anneal", "synflow_iterations", "samples", "noise", "knots")

    p = sub.add_parser("theory", help="per-layer tolerances and existence bounds")
    _common(p, "task", "depth", "width", "eps", "knots", "out")

    p = sub.add_parser("data", help="export a generated dataset as CSV")
    _common(p, "task", "seed", "samples", "noise", "out")
    return parser


def _resolve(parser, args) -> dict:
    cfg = {}
    if args.config:
        try:
            cfg = read_config(args.config)
        except (OSError, ValueError) as e:
            parser.error(str(e))
    vals = {}
    for name, (_, _, default) in OPTIONS.items():
        if not hasattr(args, name):
            continue
        v = getattr(args, name)
        vals[name] = v if v is not None else cfg.get(name, default)
    if vals.get("task") is None:
        parser.error("--task is required")
    if vals["task"] not in ("relu", "circle", "helix"):
        parser.error(f"unknown task {vals['task']!r}")
    for m in vals.get("method") or []:
        if m not in METHODS + (PLANTED, "edge-popup"):
            parser.error(f"unknown method {m!r}")
    if vals.get("strategy") is not None and vals["strategy"] not in STRATEGIES:
        parser.error(f"unknown strategy {vals['strategy']!r}")
    return vals


def _emit(text: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_plant(v, args) -> int:
    ticket = build_ticket(v["task"], v["depth"], v["knots"])
    arch = [ticket.arch.n_in] + [v["width"]] * (v["depth"] - 1) + [ticket.arch.n_out]
    mother = mlp_new(arch, InitSpec(seed=v["seed"]))
    planted, report = plant(ticket, mother)
    grid = domain_grid(ticket.arch.n_in)
    err = float(np.abs(rescaled_output(extract_subnet(planted, report), report, grid) - eval_ticket(ticket, grid)).max())
    doc = {
        "task": v["task"],
        "mother_widths": arch,
        "seed": v["seed"],
        "ticket": ticket.to_dict(),
        "report": report.to_dict(),
        "planted_sparsity": ticket_sparsity_in(ticket, planted.arch),
        "roundtrip_max_error": err,
        "hiding": hiding_score(planted, report),
    }
    if args.net_out:
        planted.save(args.net_out)
    _emit(json.dumps(doc, indent=1) + "\n", v["out"])
    print(f"planted {v['task']} ticket: sparsity {doc['planted_sparsity']:.5f}, round-trip error {err:.2e}", file=sys.stderr)
    return 0


def cmd_prune(v, args) -> int:
    cfg = ExperimentConfig(
        task=v["task"], depth=v["depth"], width=v["width"], sparsities=v["sparsity"], methods=v["method"],
        strategy=v["strategy"], scope=v["scope"], rounds=v["rounds"], prune_epochs=v["epochs"],
        train_epochs=v["train_epochs"], synflow_iterations=v["synflow_iterations"], anneal=v["anneal"],
        repetitions=v["reps"], seed=v["seed"], n_samples=v["samples"], noise=v["noise"], knots=v["knots"],
        out=v["out"],
    )
    rows = run_experiment(cfg)
    if not v["out"]:
        write_tsv(rows, sys.stdout)
    print(f"{len(rows)} rows", file=sys.stderr)
    return 0


def cmd_theory(v, args) -> int:
    ticket = build_ticket(v["task"], v["depth"], v["knots"])
    arch = [ticket.arch.n_in] + [v["width"]] * (v["depth"] - 1) + [ticket.arch.n_out]
    budget = eps_layer(v["eps"], ticket)
    eb = existence_lower_bound(v["eps"], ticket, arch)
    lines = ["layer\tn_target\tk_max\tsup_norm\teps_l\tfailure_term\tlayer_factor"]
    for l in range(ticket.depth):
        lines.append("\t".join([
            str(l + 1), str(int(budget.widths[l])), str(int(budget.k_max[l])), f"{budget.sup_norms[l]:.6g}",
            f"{budget.eps_l[l]:.6g}", f"{eb.failure_terms[l]:.6g}", f"{eb.layer_factors[l]:.6g}",
        ]))
    lines.append(f"# existence bound {eb.bound:.6g} (unclamped {eb.raw:.6g})")
    if v["task"] == "relu":
        lines.append(f"# relu path probability {relu_path_prob(arch[1:]):.6g}")
    _emit("\n".join(lines) + "\n", v["out"])
    return 0


def cmd_data(v, args) -> int:
    if not v["out"]:
        args.subparser.error("--out is required")
    generate(v["task"], v["samples"], v["noise"], v["seed"]).to_csv(v["out"])
    return 0


COMMANDS = {"plant": cmd_plant, "prune": cmd_prune, "theory": cmd_theory, "data": cmd_data}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        v = _resolve(args.subparser, args)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](v, args)
    except SystemExit as e:
        return int(e.code or 0)
    except ValueError as e:
        print(f"{args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
