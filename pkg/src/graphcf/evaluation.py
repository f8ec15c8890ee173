"""Benchmark metrics: validity, target accuracy and graph edit distance, swept over noise depth."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import graph6
from .checkpoint import ModelCheckpoint, from_bytes, to_bytes
from .dataset import LabeledDataset
from .denoiser import Condition
from .ged import ged_cached
from .graphs import GraphError, SimpleGraph, from_dense, is_connected, to_dense
from .guidance import GuidanceConfig, baseline_stream, free_generate, generate_counterfactuals
from .planarity import is_planar

log = logging.getLogger(__name__)

BASELINE = "baseline"
CSV_FIELDS = ["input_id", "tau", "sample_index", "valid", "accurate", "ged", "edge_count", "seed"]


@dataclass
class EvalRecord:
    input_id: int
    tau: object  # int noise depth, or BASELINE
    sample_index: int
    valid: bool
    accurate: Optional[bool]
    ged: Optional[int]
    edge_count: int
    seed: int = 0
    graph: Optional[str] = None  # graph6 of the generated graph; not part of the CSV schema


@dataclass
class ColumnStats:
    samples: int
    valid: int
    accurate: int
    ged_sum: int

    @property
    def validity(self) -> float:
        return self.valid / self.samples if self.samples else float("nan")

    @property
    def accuracy(self) -> float:
        return self.accurate / self.valid if self.valid else float("nan")

    @property
    def mean_ged(self) -> float:
        return self.ged_sum / self.valid if self.valid else float("nan")


@dataclass
class EvalSummary:
    columns: dict  # column label -> ColumnStats, baseline first then taus in sweep order
    config: dict
    records: list = field(default_factory=list)
    skipped_inputs: list = field(default_factory=list)

    def column(self, tau) -> ColumnStats:
        return self.columns[tau]


def judge(original: SimpleGraph, generated: SimpleGraph, y_target: int) -> EvalRecord:
    if original.n != generated.n:
        raise GraphError(f"node counts differ: {original.n} vs {generated.n}")
    valid = is_connected(generated) and is_planar(generated)
    accurate = generated.m == y_target if valid else None
    dist = ged_cached(original, generated) if valid else None
    return EvalRecord(0, None, 0, valid, accurate, dist, generated.m)


def summarize(records: Sequence[EvalRecord], order: Sequence = ()) -> dict:
    cols: dict = {key: ColumnStats(0, 0, 0, 0) for key in order}
    for r in records:
        c = cols.setdefault(r.tau, ColumnStats(0, 0, 0, 0))
        c.samples += 1
        if r.valid:
            c.valid += 1
            c.accurate += bool(r.accurate)
            c.ged_sum += r.ged
    return cols


def _judge_all(original, outputs, y_target, input_id, tau, seed):
    recs = []
    for k, G in enumerate(outputs):
        g = from_dense(G)
        r = judge(original, g, y_target)
        r.input_id, r.tau, r.sample_index, r.seed, r.graph = input_id, tau, k, seed, graph6.encode(g)
        recs.append(r)
    return recs


def evaluate_input(den, original: SimpleGraph, input_id: int, taus: Sequence[int], cfg: GuidanceConfig,
                   baseline: bool) -> list[EvalRecord]:
    """All counterfactual and baseline records for one test graph with target ``|E| - 1``."""
    y = original.m - 1
    G = to_dense(original, y=original.m)
    recs = []
    if baseline:
        rngs = [baseline_stream(cfg.seed, input_id, k) for k in range(cfg.num_samples)]
        outs = free_generate(den, original.n, Condition(y), cfg.s, cfg.num_samples, rngs)
        recs += _judge_all(original, outs, y, input_id, BASELINE, cfg.seed)
    for tau in taus:
        c = GuidanceConfig(s=cfg.s, tau=tau, num_samples=cfg.num_samples, seed=cfg.seed)
        outs = generate_counterfactuals(den, G, Condition(y), c, input_index=input_id)
        recs += _judge_all(original, outs, y, input_id, tau, cfg.seed)
    return recs


_worker_den = None


def _worker_init(blob: bytes):
    global _worker_den
    import torch

    torch.set_num_threads(1)
    _worker_den = from_bytes(blob).denoiser()


def _worker_run(args):
    return evaluate_input(_worker_den, *args)


def run_experiment(ckpt: ModelCheckpoint, test: LabeledDataset, taus: Sequence[int], cfg: GuidanceConfig,
                   baseline: bool = True, max_inputs: Optional[int] = None, threads: int = 1,
                   progress: Optional[Callable[[int, int], None]] = None) -> EvalSummary:
    """Sweep counterfactual generation over ``taus`` (plus the free-generation baseline).

    Inputs whose shifted target ``|E| - 1`` is outside the model's condition
    vocabulary are skipped and listed in ``skipped_inputs``. ``max_inputs``
    keeps a uniform random subset of the rest, drawn from ``cfg.seed``, since
    the test split is ordered by canonical form and its prefix is biased
    towards sparse graphs. Results are
    identical for any ``threads`` value because every sample owns its stream.
    """
    ckpt.check_compatible(test.a, test.b)
    den = ckpt.denoiser()
    for tau in taus:
        if not 0 <= tau <= den.T:
            raise ValueError(f"tau={tau} outside [0, {den.T}]")
    inputs, skipped = [], []
    for i, g in enumerate(test.graphs):
        (inputs if g.m - 1 in den.vocab else skipped).append(i)
    if max_inputs is not None and max_inputs < len(inputs):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
        pick = rng.choice(len(inputs), max_inputs, replace=False)
        inputs = [inputs[k] for k in sorted(pick)]
    jobs = [(test.graphs[i], i, list(taus), cfg, baseline) for i in inputs]
    records: list[EvalRecord] = []
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(threads, initializer=_worker_init, initargs=(to_bytes(ckpt),)) as pool:
            for k, recs in enumerate(pool.map(_worker_run, jobs)):
                records += recs
                if progress:
                    progress(k + 1, len(jobs))
    else:
        for k, job in enumerate(jobs):
            records += evaluate_input(den, *job)
            if progress:
                progress(k + 1, len(jobs))
    order = ([BASELINE] if baseline else []) + list(taus)
    config = {"s": cfg.s, "num_samples": cfg.num_samples, "seed": cfg.seed, "T": den.T, "taus": list(taus),
              "baseline": baseline, "inputs": len(inputs), "target": "|E|-1"}
    return EvalSummary(summarize(records, order), config, records, skipped)


def _fmt(x: float) -> str:
    return "nan" if x != x else f"{x:.2f}"


def format_table(summary: EvalSummary) -> str:
    labels = [BASELINE if k == BASELINE else f"tau={k}" for k in summary.columns]
    rows = [
        ("Validity", [c.validity for c in summary.columns.values()]),
        ("Accuracy", [c.accuracy for c in summary.columns.values()]),
        ("Mean-GED", [c.mean_ged for c in summary.columns.values()]),
    ]
    width = max(10, *(len(s) for s in labels))
    lines = ["y_target = |E|-1".ljust(18) + "".join(s.rjust(width) for s in labels)]
    for name, vals in rows:
        lines.append(name.ljust(18) + "".join(_fmt(v).rjust(width) for v in vals))
    lines.append("Samples".ljust(18) + "".join(str(c.samples).rjust(width) for c in summary.columns.values()))
    return "\n".join(lines) + "\n"


def write_records(records: Sequence[EvalRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([r.input_id, r.tau, r.sample_index, int(r.valid),
                        "" if r.accurate is None else int(r.accurate),
                        "" if r.ged is None else r.ged, r.edge_count, r.seed])


def read_records(path) -> list[EvalRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            tau = row["tau"] if row["tau"] == BASELINE else int(row["tau"])
            out.append(EvalRecord(
                int(row["input_id"]), tau, int(row["sample_index"]), row["valid"] == "1",
                None if row["accurate"] == "" else row["accurate"] == "1",
                None if row["ged"] == "" else int(row["ged"]), int(row["edge_count"]), int(row["seed"])))
    return out


def to_dot(original: SimpleGraph, generated: SimpleGraph, name: str = "counterfactual") -> str:
    """Side-by-side drawing: kept edges solid, removed dashed red, added bold green."""
    lines = [f'graph "{name}" {{', "  node [shape=circle];"]
    for tag, g in (("original", original), ("counterfactual", generated)):
        lines.append(f'  subgraph "cluster_{tag}" {{')
        lines.append(f'    label="{tag} |E|={g.m}";')
        for v in range(g.n):
            lines.append(f'    "{tag[0]}{v}" [label="{v}"];')
        for u, v in sorted(original.edges | generated.edges):
            if (u, v) not in g.edges and tag == "original":
                continue
            style = ""
            if tag == "counterfactual":
                if (u, v) not in original.edges:
                    style = ' [color="darkgreen", penwidth=2]'
                elif (u, v) not in generated.edges:
                    style = ' [color="red", style="dashed"]'
            lines.append(f'    "{tag[0]}{u}" -- "{tag[0]}{v}"{style};')
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def emit_report(summary: EvalSummary, out_dir, test: Optional[LabeledDataset] = None, dot_limit: int = 0,
                provenance: Optional[dict] = None) -> list[Path]:
    """Write the records CSV, per-depth metric tables (text and CSV), a JSON summary and optional DOT drawings."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "records.csv", out / "table.txt", out / "table.csv", out / "summary.json"]
    write_records(summary.records, paths[0])
    header = "".join(f"# {k}: {json.dumps(v)}\n" for k, v in (provenance or {}).items())
    paths[1].write_text(header + format_table(summary))
    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric"] + [str(k) for k in summary.columns])
        w.writerow(["validity"] + [c.validity for c in summary.columns.values()])
        w.writerow(["accuracy"] + [c.accuracy for c in summary.columns.values()])
        w.writerow(["mean_ged"] + [c.mean_ged for c in summary.columns.values()])
    paths[3].write_text(json.dumps({
        "config": summary.config,
        "provenance": provenance or {},
        "skipped_inputs": summary.skipped_inputs,
        "columns": {str(k): dict(asdict(c), validity=c.validity, accuracy=c.accuracy, mean_ged=c.mean_ged)
                    for k, c in summary.columns.items()},
    }, indent=1))
    if dot_limit and test is not None:
        dot_dir = out / "dot"
        dot_dir.mkdir(exist_ok=True)
        written = 0
        for r in summary.records:
            if written >= dot_limit:
                break
            if r.graph is None or not r.valid:
                continue
            p = dot_dir / f"input{r.input_id}_tau{r.tau}_s{r.sample_index}.dot"
            p.write_text(to_dot(test.graphs[r.input_id], graph6.decode(r.graph), p.stem))
            paths.append(p)
            written += 1
    return paths
