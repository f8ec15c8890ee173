import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from graphcf.checkpoint import (
    CheckpointError,
        from_bytes,
    load_checkpoint,
    save_checkpoint,
    to_bytes,
)
from graphcf.dataset import enumerate_connected_planar, make_dataset
from graphcf.denoiser import NULL, Condition, DenoiserError, DenoiserOutput, GraphDenoiser, cross_entropy, log_probs, loss
from graphcf.diffusion import TransitionModel, build_schedule, forward_sample
from graphcf.graphs import SimpleGraph, cycle_graph, random_graph, to_dense
from graphcf.training import TrainConfig, TrainingDiverged, train

TINY = dict(layers=2, width=16, heads=2, batch_size=16, log_every=20)


def random_batch(rng, B, n, a, b, T, n_cond):
    x = torch.from_numpy(rng.integers(0, a, (B, n)))
    e = np.triu(rng.integers(0, b, (B, n, n)), 1)
    e = torch.from_numpy(e + e.transpose(0, 2, 1))
    t = torch.from_numpy(rng.integers(1, T + 1, B))
    c = torch.from_numpy(rng.integers(0, n_cond + 1, B))
    return x, e, t, c


@pytest.fixture(scope="module")
def small_ds():
    return enumerate_connected_planar(5)


@pytest.fixture(scope="module")
def small_ckpt(small_ds):
    ckpt, _ = train(small_ds, TrainConfig(steps=60, T=20, seed=3, **TINY))
    return ckpt


def test_loss_zero_for_exact_prediction(rng):
    G = to_dense(random_graph(6, 0.5, rng))
    assert loss(DenoiserOutput(G.X, G.E), G, 5.0) == 0.0


def test_loss_uniform_edge_term():
    G = to_dense(cycle_graph(5))
    pred = DenoiserOutput(np.ones((5, 1)), np.full((5, 5, 2), 0.5))
    assert loss(pred, G, 1.0) == pytest.approx(math.log(2), abs=1e-12)
    assert loss(pred, G, 3.0) == pytest.approx(3 * math.log(2), abs=1e-12)


def test_loss_shape_mismatch():
    with pytest.raises(DenoiserError):
        loss(DenoiserOutput(np.ones((4, 1)), np.full((4, 4, 2), 0.5)), to_dense(cycle_graph(5)), 1.0)


def test_loss_matches_torch_path(rng):
    G = to_dense(random_graph(6, 0.5, rng))
    lx = torch.randn(1, 6, 1, dtype=torch.float64)
    le = torch.randn(1, 6, 6, 2, dtype=torch.float64)
    le = le + le.transpose(1, 2)
    ref = cross_entropy(log_probs(lx), log_probs(le), torch.zeros(1, 6, dtype=torch.long),
                        torch.from_numpy(G.edge_labels()[None]), 2.5)
    pred = DenoiserOutput(torch.softmax(lx, -1)[0].numpy(), torch.softmax(le, -1)[0].numpy())
    assert loss(pred, G, 2.5) == pytest.approx(ref.item(), abs=1e-10)


def test_gradients_match_finite_differences(rng):
    torch.manual_seed(0)
    net = GraphDenoiser(a=2, b=3, n_conditions=3, T=10, layers=2, width=8, heads=2).double()
    # move the zero-initialised condition rows off zero so their gradients are generic
    with torch.no_grad():
        net.embed_c.weight[:3].normal_()
    x, e, t, c = random_batch(rng, 3, 4, 2, 3, 10, 3)
    x0, e0, _, _ = random_batch(rng, 3, 4, 2, 3, 10, 3)
    X, E = F.one_hot(x, 2).double(), F.one_hot(e, 3).double()

    def objective():
        lx, le = net(X, E, t, c)
        return cross_entropy(log_probs(lx), log_probs(le), x0, e0, 5.0)

    net.zero_grad()
    objective().backward()
    analytic, numeric = [], []
    h = 1e-6
    pick = np.random.default_rng(1)
    for name, p in net.named_parameters():
        flat = p.data.view(-1)
        for k in pick.choice(flat.numel(), size=min(4, flat.numel()), replace=False):
            if name == "embed_c.weight" and k >= 3 * 8:
                continue  # null row carries no gradient by construction
            old = flat[k].item()
            with torch.no_grad():
                flat[k] = old + h
                up = objective().item()
                flat[k] = old - h
                down = objective().item()
                flat[k] = old
            # the final layer's global update feeds no output, so it has no grad
            analytic.append(0.0 if p.grad is None else p.grad.view(-1)[k].item())
            numeric.append((up - down) / (2 * h))
    analytic, numeric = np.array(analytic), np.array(numeric)
    rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic)
    assert rel < 1e-4
    assert len(analytic) > 100


def test_predict_rows_normalised(small_ckpt, rng):
    den = small_ckpt.denoiser()
    G = to_dense(random_graph(5, 0.5, rng))
    for c in (NULL, Condition(6)):
        out = den.predict(G, 7, c)
        assert np.abs(out.X.sum(-1) - 1).max() < 1e-6
        assert np.abs(out.E.sum(-1) - 1).max() < 1e-6
        np.testing.assert_array_equal(out.E, out.E.transpose(1, 0, 2))


def test_predict_errors(small_ckpt, rng):
    den = small_ckpt.denoiser()
    G = to_dense(random_graph(5, 0.5, rng))
    with pytest.raises(DenoiserError):
        den.predict(G, 0, NULL)
    with pytest.raises(DenoiserError):
        den.predict(G, 21, NULL)
    with pytest.raises(DenoiserError):
        den.predict(G, 3, Condition(99))


def test_permutation_equivariance(rng):
    torch.manual_seed(1)
    net = GraphDenoiser(a=3, b=4, n_conditions=5, T=50, layers=3, width=32, extra_features=True).eval()
    with torch.no_grad():
        net.embed_c.weight[:5].normal_()
    for _ in range(100):
        n = int(rng.integers(2, 9))
        x, e, t, c = random_batch(rng, 1, n, 3, 4, 50, 5)
        perm = torch.from_numpy(rng.permutation(n))
        X, E = F.one_hot(x, 3).float(), F.one_hot(e, 4).float()
        with torch.no_grad():
            lx, le = net(X, E, t, c)
            px, pe = torch.softmax(lx, -1), torch.softmax(le, -1)
            qx, qe = net(X[:, perm], E[:, perm][:, :, perm], t, c)
            qx, qe = torch.softmax(qx, -1), torch.softmax(qe, -1)
        assert (qx - px[:, perm]).abs().max() < 1e-5
        assert (qe - pe[:, perm][:, :, perm]).abs().max() < 1e-5


def test_null_condition_differs_after_training(small_ckpt, rng):
    den = small_ckpt.denoiser()
    G = to_dense(random_graph(5, 0.5, rng))
    a = den.predict(G, 10, NULL)
    b = den.predict(G, 10, Condition(7))
    assert np.abs(a.E - b.E).max() > 1e-3


def test_p_uncond_one_ignores_condition(small_ds, rng):
    ckpt, _ = train(small_ds, TrainConfig(steps=40, T=20, p_uncond=1.0, seed=5, **TINY))
    den = ckpt.denoiser()
    G = to_dense(random_graph(5, 0.5, rng))
    for y in den.vocab:
        out = den.predict(G, 10, Condition(y))
        ref = den.predict(G, 10, NULL)
        np.testing.assert_array_equal(out.E, ref.E)


def test_training_deterministic(small_ds):
    cfg = TrainConfig(steps=30, T=20, seed=11, **TINY)
    a, ca = train(small_ds, cfg)
    b, cb = train(small_ds, cfg)
    assert a == b
    assert to_bytes(a) == to_bytes(b)
    assert ca == cb


@pytest.fixture(scope="module")
def overfit():
    g = SimpleGraph(8, frozenset({(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (0, 7), (0, 4)}))
    ds = make_dataset([g], 8)
    cfg = TrainConfig(steps=2000, T=200, layers=2, width=32, heads=4, batch_size=16, log_every=100, seed=0)
    ckpt, curve = train(ds, cfg)
    return g, ds, ckpt, curve


def test_overfit_running_average_decreases(overfit):
    _, _, _, curve = overfit
    losses = np.array([v for _, v in curve])
    running = np.cumsum(losses) / np.arange(1, len(losses) + 1)
    assert np.all(np.diff(running) < 0)
    assert losses[-1] < 0.7 * losses[0]


def test_overfit_reaches_bayes_limits(overfit):
    # near t=1 the graph is recoverable; at t=T the input carries no information,
    # so the best an equivariant model can do is the edge marginal entropy
    g, ds, ckpt, _ = overfit
    den = ckpt.denoiser()
    G = to_dense(g)
    rng = np.random.default_rng(0)
    low = np.mean([loss(den.predict(forward_sample(den.tm, G, 1, rng), 1, NULL), G, 5.0) for _ in range(20)])
    assert low < 0.1
    m = np.array(ds.marginals_e)
    floor = 5.0 * float(-(m * np.log(m)).sum())
    high = np.mean([loss(den.predict(forward_sample(den.tm, G, 200, rng), 200, NULL), G, 5.0) for _ in range(20)])
    assert high == pytest.approx(floor, rel=0.05)


def test_nan_aborts(small_ds, monkeypatch):
    import graphcf.training as training

    monkeypatch.setattr(training, "cross_entropy", lambda *a: torch.tensor(float("nan"), requires_grad=True))
    with pytest.raises(TrainingDiverged):
        train(small_ds, TrainConfig(steps=5, T=20, **TINY))


def test_resume_rejects_t_mismatch(small_ds, small_ckpt):
    with pytest.raises(ValueError, match="T="):
        train(small_ds, TrainConfig(steps=5, T=50, **TINY), init=small_ckpt)


def test_resume_continues(small_ds, small_ckpt):
    ckpt, curve = train(small_ds, TrainConfig(steps=20, T=20, seed=3, **TINY), init=small_ckpt)
    assert ckpt.meta["steps"] == 80
    assert curve[-1][0] == 80


# --- checkpoint container ----------------------------------------------------

def test_checkpoint_round_trip(small_ckpt, tmp_path):
    p = tmp_path / "m.ckpt"
    save_checkpoint(small_ckpt, p)
    back = load_checkpoint(p)
    assert back == small_ckpt
    assert to_bytes(back) == p.read_bytes()


def test_checkpoint_predictions_survive_round_trip(small_ckpt, rng):
    back = from_bytes(to_bytes(small_ckpt))
    G = to_dense(random_graph(5, 0.5, rng))
    a = small_ckpt.denoiser().predict(G, 5, Condition(6))
    b = back.denoiser().predict(G, 5, Condition(6))
    np.testing.assert_array_equal(a.E, b.E)


def test_checkpoint_corruption_detected(small_ckpt):
    data = bytearray(to_bytes(small_ckpt))
    data[len(data) // 2] ^= 0x01
    with pytest.raises(CheckpointError, match="checksum"):
        from_bytes(bytes(data))


def test_checkpoint_bad_magic():
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"x" * 100)


def test_checkpoint_version_mismatch(small_ckpt):
    import hashlib
    import struct

    data = bytearray(to_bytes(small_ckpt)[:-32])
    struct.pack_into("<I", data, 8, 99)
    data += hashlib.sha256(data).digest()
    with pytest.raises(CheckpointError, match="version"):
        from_bytes(bytes(data))


def test_checkpoint_category_mismatch(small_ckpt):
    small_ckpt.check_compatible(1, 2)
    with pytest.raises(CheckpointError, match="a=1, b=2"):
        small_ckpt.check_compatible(4, 5)


def test_checkpoint_self_describing(small_ckpt):
    back = from_bytes(to_bytes(small_ckpt))
    assert back.T == 20
    assert back.vocab == list(range(4, 10))
    tm = back.transition_model()
    assert isinstance(tm, TransitionModel)
    np.testing.assert_array_equal(tm.schedule.alpha_bar, build_schedule(20).alpha_bar)
    assert all(a.dtype == np.float32 for a in back.params.values())
