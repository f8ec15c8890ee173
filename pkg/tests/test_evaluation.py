import json

import numpy as np
import pytest

from graphcf.dataset import enumerate_connected_planar, make_dataset
from graphcf.evaluation import (
    BASELINE,
    EvalRecord,
    emit_report,
    format_table,
    judge,
    read_records,
    run_experiment,
    summarize,
    to_dot,
    write_records,
)
from graphcf.graphs import SimpleGraph, complete_graph, cycle_graph, path_graph
from graphcf.guidance import GuidanceConfig
from graphcf.training import TrainConfig, train


@pytest.fixture(scope="module")
def ds5():
    return enumerate_connected_planar(5)


@pytest.fixture(scope="module")
def ckpt(ds5):
    c, _ = train(ds5, TrainConfig(steps=60, T=20, layers=2, width=16, heads=2, batch_size=16, seed=2))
    return c


def test_judge_single_edge_removal():
    g = cycle_graph(8).add_edge(0, 4)
    r = judge(g, g.remove_edge(0, 4), g.m - 1)
    assert r.valid and r.accurate and r.ged == 1


def test_judge_disconnected_is_invalid():
    g = path_graph(8)
    r = judge(g, g.remove_edge(3, 4), g.m - 1)
    assert not r.valid
    assert r.accurate is None and r.ged is None


def test_judge_nonplanar_is_invalid():
    k5 = SimpleGraph(8, complete_graph(5).edges)
    r = judge(cycle_graph(8), k5, 9)
    assert not r.valid


def test_judge_wrong_count_is_valid_not_accurate():
    g = cycle_graph(8)
    r = judge(g, g, g.m - 1)
    assert r.valid and not r.accurate and r.ged == 0


def test_accuracy_denominator_is_valid_samples():
    recs = [EvalRecord(0, 5, 0, True, True, 1, 7), EvalRecord(0, 5, 1, False, None, None, 9),
            EvalRecord(0, 5, 2, True, False, 3, 8), EvalRecord(0, 5, 3, False, None, None, 4)]
    col = summarize(recs)[5]
    assert col.validity == 0.5
    assert col.accuracy == 0.5
    assert col.mean_ged == 2.0


def test_empty_valid_set_gives_nan():
    col = summarize([EvalRecord(0, 5, 0, False, None, None, 4)])[5]
    assert np.isnan(col.accuracy) and np.isnan(col.mean_ged)


def test_tau_zero_sweep(ckpt, ds5):
    s = run_experiment(ckpt, ds5, [0], GuidanceConfig(num_samples=1), baseline=False)
    col = s.column(0)
    assert col.samples == len(ds5) - len(s.skipped_inputs)
    assert col.validity == 1.0
    assert col.accuracy == 0.0
    assert col.mean_ged == 0.0


def test_trees_skipped(ckpt, ds5):
    s = run_experiment(ckpt, ds5, [0], GuidanceConfig(num_samples=1), baseline=False)
    assert s.skipped_inputs == [i for i, g in enumerate(ds5.graphs) if g.m == 4]


@pytest.fixture(scope="module")
def sweep(ckpt, ds5):
    return run_experiment(ckpt, ds5, [1, 10, 20], GuidanceConfig(num_samples=3, seed=5), max_inputs=4)


def test_table_columns(sweep):
    assert list(sweep.columns) == [BASELINE, 1, 10, 20]
    lines = format_table(sweep).splitlines()
    assert lines[0].split()[-4:] == ["baseline", "tau=1", "tau=10", "tau=20"]
    assert [ln.split()[0] for ln in lines[1:]] == ["Validity", "Accuracy", "Mean-GED", "Samples"]


def test_sweep_reproducible(ckpt, ds5, sweep):
    again = run_experiment(ckpt, ds5, [1, 10, 20], GuidanceConfig(num_samples=3, seed=5), max_inputs=4)
    assert again.records == sweep.records
    assert format_table(again) == format_table(sweep)


def test_threads_match_serial(ckpt, ds5, sweep):
    par = run_experiment(ckpt, ds5, [1, 10, 20], GuidanceConfig(num_samples=3, seed=5), max_inputs=4, threads=2)
    assert par.records == sweep.records


def test_csv_round_trip_recount(sweep, tmp_path):
    p = tmp_path / "r.csv"
    write_records(sweep.records, p)
    back = read_records(p)
    assert len(back) == len(sweep.records)
    recount = summarize(back, list(sweep.columns))
    assert recount == sweep.columns


def test_emit_report(sweep, ds5, tmp_path):
    paths = emit_report(sweep, tmp_path, test=ds5, dot_limit=2, provenance={"seed": 5})
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["provenance"] == {"seed": 5}
    assert set(summary["columns"]) == {"baseline", "1", "10", "20"}
    assert (tmp_path / "table.txt").read_text().startswith("# seed: 5")
    assert len(list((tmp_path / "dot").glob("*.dot"))) == 2
    assert all(p.exists() for p in paths)


def test_dot_parses():
    pydot = pytest.importorskip("pydot")
    g = cycle_graph(6)
    h = g.remove_edge(0, 1).add_edge(0, 3)
    (parsed,) = pydot.graph_from_dot_data(to_dot(g, h))
    edges = [e for sub in parsed.get_subgraphs() for e in sub.get_edges()]
    styles = [e.get_attributes().get("color") for e in edges]
    assert styles.count('"darkgreen"') == 1
    assert styles.count('"red"') == 1
    assert len(edges) == 6 + 7
