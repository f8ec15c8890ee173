"""Command line entry point: ``graphcf {dataset,train,counterfactual,eval}``.

Options can come from a plain ``key = value`` file given with ``--config``;
flags on the command line override it. Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import fields
from pathlib import Path


from . import __version__, graph6
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dataset import (
    METHOD_EDGE,
    METHOD_VERTEX,
    DatasetError,
    enumerate_connected_planar,
    label_histogram,
    load,
    save,
    split,
)
from .denoiser import Condition, DenoiserError
from .diffusion import DiffusionError
from .evaluation import emit_report, format_table, judge, run_experiment, to_dot
from .graphs import GraphError, from_dense, to_dense
from .guidance import GuidanceConfig, generate_counterfactuals
from .training import TrainConfig, TrainingDiverged, train

log = logging.getLogger("graphcf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATA_ERRORS = (DatasetError, graph6.Graph6Error, CheckpointError, GraphError, DenoiserError, DiffusionError,
               ValueError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _int_list(s) -> list[int]:
    if isinstance(s, list):
        return s
    try:
        return [int(x) for x in s.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _add_split(p):
    p.add_argument("--test-fraction", type=float, default=None, help="held-out fraction (default 0.1)")
    p.add_argument("--split-seed", type=int, default=None, help="split seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphcf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"graphcf {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dataset", help="enumerate connected planar graphs")
    p.add_argument("--config")
    p.add_argument("--n", type=int)
    p.add_argument("--out")
    p.add_argument("--method", choices=["vertex", "edge", "both"], default="both",
                   help="enumeration strategy; 'both' cross-checks the two")

    p = sub.add_parser("train", help="train the conditional denoiser")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--resume", help="continue from this checkpoint")
    p.add_argument("--threads", type=int, default=None)
    _add_split(p)
    for f in fields(TrainConfig):
        kind = _bool if f.type in (bool, "bool") else (float if f.type in (float, "float") else int)
        p.add_argument("--" + f.name.replace("_", "-"), type=kind, default=None)

    p = sub.add_parser("counterfactual", help="counterfactuals for one graph")
    p.add_argument("--config")
    p.add_argument("--ckpt")
    p.add_argument("--graph", help="graph6 string of the input graph")
    p.add_argument("--y-target", type=int, default=None, help="target edge count (default |E|-1)")
    p.add_argument("--tau", type=int, default=50)
    p.add_argument("--s", type=float, default=2.0)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="graph6 output file (default stdout)")
    p.add_argument("--dot-dir")

    p = sub.add_parser("eval", help="sweep noise depths and report the metrics table")
    p.add_argument("--config")
    p.add_argument("--ckpt")
    p.add_argument("--data")
    p.add_argument("--out-dir")
    p.add_argument("--taus", type=_int_list, default=[1, 5, 10, 25, 50, 100, 200])
    p.add_argument("--s", type=float, default=2.0)
    p.add_argument("--num-samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-inputs", type=int, default=None)
    p.add_argument("--baseline", type=_bool, default=True)
    p.add_argument("--dot", type=int, default=0, help="write DOT drawings for this many valid samples")
    p.add_argument("--threads", type=int, default=None)
    _add_split(p)
    return parser


REQUIRED = {
    "dataset": ["n", "out"],
    "train": ["data", "out"],
    "counterfactual": ["ckpt", "graph"],
    "eval": ["ckpt", "data", "out_dir"],
}


def _subparser(parser, name):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices[name]


def parse_args(argv) -> argparse.Namespace:
    """Parse flags, fill unset options from ``--config``, then check required options."""
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = _subparser(parser, args.command)
    if getattr(args, "config", None):
        known = {a.dest: a for a in sub._actions}
        for key, value in read_config(args.config).items():
            if key not in known or key in ("config", "help"):
                raise UsageError(f"{args.config}: unknown option {key!r} for '{args.command}'")
            action = known[key]
            given = any(a == opt or a.startswith(opt + "=") for a in argv for opt in action.option_strings)
            if not given:
                try:
                    setattr(args, key, action.type(value) if action.type else value)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"{args.config}: bad value for {key!r}: {exc}") from None
    missing = ["--" + k.replace("_", "-") for k in REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        raise UsageError(f"graphcf {args.command}: the following arguments are required: {', '.join(missing)}")
    return args


def provenance(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    return {"graphcf_version": __version__, "run_config": cfg}


def _threads(args) -> int:
    t = getattr(args, "threads", None)
    return t if t else (os.cpu_count() or 1)


def cmd_dataset(args) -> int:
    methods = {"vertex": [METHOD_VERTEX], "edge": [METHOD_EDGE], "both": [METHOD_VERTEX, METHOD_EDGE]}[args.method]
    results = [enumerate_connected_planar(args.n, m) for m in methods]
    ds = results[0]
    if len(results) == 2:
        if results[0].graphs != results[1].graphs:
            print("enumeration strategies disagree", file=sys.stderr)
            return EXIT_DATA
        ds.methods = tuple(methods)
    save(ds, args.out, provenance=provenance(args))
    print(f"{len(ds)} connected planar graphs on {args.n} nodes -> {args.out}")
    for y, c in label_histogram(ds).items():
        print(f"  |E|={y:3d}: {c}")
    return EXIT_OK


def _split_params(args, meta=None):
    meta = meta or {}
    tf = args.test_fraction if args.test_fraction is not None else meta.get("test_fraction", 0.1)
    ss = args.split_seed if args.split_seed is not None else meta.get("split_seed", 0)
    return tf, ss


def cmd_train(args) -> int:
    import torch

    torch.set_num_threads(_threads(args))
    ds = load(args.data)
    tf, ss = _split_params(args)
    train_set, _ = split(ds, tf, ss)
    overrides = {f.name: getattr(args, f.name) for f in fields(TrainConfig) if getattr(args, f.name) is not None}
    config = TrainConfig(**overrides)
    init = load_checkpoint(args.resume) if args.resume else None
    out = Path(args.out)
    t0 = time.time()

    def on_log(step, value):
        log.info("step %d  loss %.5f  (%.0fs)", step, value, time.time() - t0)

    ckpt, curve = train(train_set, config, init=init, on_log=on_log)
    ckpt.meta.update(test_fraction=tf, split_seed=ss, dataset=str(args.data), provenance=provenance(args))
    save_checkpoint(ckpt, out)
    loss_path = out.with_name(out.name + ".loss.csv")
    with open(loss_path, "w", newline="") as fh:
        fh.write(f"# {json.dumps(provenance(args), sort_keys=True)}\n")
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        w.writerows((s, repr(v)) for s, v in curve)
    print(f"trained {config.steps} steps, final loss {curve[-1][1]:.5f} -> {out}")
    return EXIT_OK


def cmd_counterfactual(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    g = graph6.decode(args.graph)
    y = args.y_target if args.y_target is not None else g.m - 1
    ckpt.check_compatible(1, 2)
    den = ckpt.denoiser()
    cfg = GuidanceConfig(s=args.s, tau=args.tau, num_samples=args.k, seed=args.seed)
    outs = generate_counterfactuals(den, to_dense(g, y=g.m), Condition(y), cfg)
    lines, judged = [], []
    for k, G in enumerate(outs):
        h = from_dense(G)
        r = judge(g, h, y)
        lines.append(graph6.encode(h))
        judged.append({"sample": k, "graph6": lines[-1], "valid": r.valid, "accurate": r.accurate,
                       "ged": r.ged, "edge_count": r.edge_count})
        if args.dot_dir:
            Path(args.dot_dir).mkdir(parents=True, exist_ok=True)
            (Path(args.dot_dir) / f"cf_{k}.dot").write_text(to_dot(g, h, f"cf_{k}"))
    text = "".join(s + "\n" for s in lines)
    if args.out:
        Path(args.out).write_text(text)
        Path(args.out + ".json").write_text(json.dumps({"provenance": provenance(args), "input": args.graph,
                                                        "y_target": y, "samples": judged}, indent=1))
    else:
        sys.stdout.write(text)
    valid = sum(j["valid"] for j in judged)
    print(f"{valid}/{len(judged)} valid, {sum(bool(j['accurate']) for j in judged)} on target", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    ds = load(args.data)
    tf, ss = _split_params(args, ckpt.meta)
    _, test = split(ds, tf, ss)
    cfg = GuidanceConfig(s=args.s, tau=0, num_samples=args.num_samples, seed=args.seed)

    def progress(done, total):
        log.info("input %d/%d", done, total)

    summary = run_experiment(ckpt, test, args.taus, cfg, baseline=args.baseline, max_inputs=args.max_inputs,
                             threads=_threads(args), progress=progress)
    summary.config.update(test_fraction=tf, split_seed=ss)
    emit_report(summary, args.out_dir, test=test, dot_limit=args.dot, provenance=provenance(args))
    print(format_table(summary), end="")
    return EXIT_OK


COMMANDS = {"dataset": cmd_dataset, "train": cmd_train, "counterfactual": cmd_counterfactual, "eval": cmd_eval}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except TrainingDiverged as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
