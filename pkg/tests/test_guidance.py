import numpy as np
import pytest

from graphcf.dataset import enumerate_connected_planar
from graphcf.denoiser import NULL, Condition, DenoiserError
from graphcf.ged import ged
from graphcf.graphs import check_instance, cycle_graph, from_dense, to_dense
from graphcf.guidance import (
    GuidanceConfig,
    cfg_combine,
    counterfactual_batch,
    counterfactual_stream,
    free_generate,
    generate_counterfactual,
    generate_counterfactuals,
)
from graphcf.training import TrainConfig, train


@pytest.fixture(scope="module")
def ckpt():
    ds = enumerate_connected_planar(5)
    c, _ = train(ds, TrainConfig(steps=60, T=20, layers=2, width=16, heads=2, batch_size=16, seed=1))
    return c


@pytest.fixture
def G():
    return to_dense(cycle_graph(5), y=5)


def _random_simplex(rng, shape):
    p = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
    return p


def test_cfg_s0_identity(rng):
    for _ in range(200):
        pc = _random_simplex(rng, (3, int(rng.integers(2, 6))))
        pu = _random_simplex(rng, pc.shape)
        assert np.abs(cfg_combine(pc, pu, 0.0) - pc).max() < 1e-12


def test_cfg_equal_inputs(rng):
    for s in (0.5, 1.0, 2.0, 7.0):
        p = _random_simplex(rng, (4, 3))
        assert np.abs(cfg_combine(p, p, s) - p).max() < 1e-12


def test_cfg_hand_example():
    # 0.8^2/0.5 = 1.28, 0.2^2/0.5 = 0.08 -> (1.28, 0.08)/1.36
    out = cfg_combine(np.array([0.8, 0.2]), np.array([0.5, 0.5]), 1.0)
    np.testing.assert_allclose(out, [0.9412, 0.0588], atol=1e-4)
    np.testing.assert_allclose(out, [1.28 / 1.36, 0.08 / 1.36], atol=1e-12)


def test_cfg_stays_on_simplex(rng):
    pc = _random_simplex(rng, (100, 4))
    pu = _random_simplex(rng, (100, 4))
    for s in (0.0, 0.3, 2.0, 50.0):
        out = cfg_combine(pc, pu, s)
        assert np.all(out >= 0)
        assert np.abs(out.sum(-1) - 1).max() < 1e-12


def test_cfg_handles_zero_probabilities():
    out = cfg_combine(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 2.0)
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(1.0)


def test_cfg_sharpening_monotone(rng):
    checked = 0
    s_grid = np.linspace(0, 10, 41)
    while checked < 1000:
        b = int(rng.integers(2, 6))
        pc, pu = _random_simplex(rng, (b,)), _random_simplex(rng, (b,))
        up = pc > pu
        if up.sum() != 1:
            continue
        k = int(np.argmax(up))
        traj = np.array([cfg_combine(pc, pu, s)[k] for s in s_grid])
        assert np.all(np.diff(traj) >= -1e-12)
        checked += 1


def test_tau_zero_returns_input(ckpt, G, rng):
    out = generate_counterfactual(ckpt, G, Condition(4), GuidanceConfig(tau=0), rng)
    np.testing.assert_array_equal(out.X, G.X)
    np.testing.assert_array_equal(out.E, G.E)
    assert ged(from_dense(out), cycle_graph(5)) == 0


def test_outputs_are_valid_instances(ckpt, G):
    for tau in (1, 7, 20):
        outs = generate_counterfactuals(ckpt, G, Condition(4), GuidanceConfig(tau=tau, num_samples=8))
        assert len(outs) == 8
        for o in outs:
            check_instance(o.X, o.E)
            assert o.n == 5
            assert o.y == 4


def test_seed_reproducible(ckpt, G):
    cfg = GuidanceConfig(tau=10, num_samples=6, seed=42)
    a = generate_counterfactuals(ckpt, G, Condition(4), cfg)
    b = generate_counterfactuals(ckpt, G, Condition(4), cfg)
    assert a == b


def test_batching_does_not_change_samples(ckpt, G):
    cfg = GuidanceConfig(tau=12, num_samples=5, seed=3)
    batch = generate_counterfactuals(ckpt, G, Condition(6), cfg, input_index=2)
    for k in range(5):
        one = generate_counterfactual(ckpt, G, Condition(6), cfg, counterfactual_stream(3, 2, 12, k))
        assert one == batch[k]


def test_free_generate_reproducible(ckpt):
    a = free_generate(ckpt, 5, Condition(5), 2.0, 4, np.random.default_rng(9))
    b = free_generate(ckpt, 5, Condition(5), 2.0, 4, np.random.default_rng(9))
    assert a == b
    for o in a:
        check_instance(o.X, o.E)


def test_null_target_rejected(ckpt, G, rng):
    with pytest.raises(DenoiserError):
        generate_counterfactual(ckpt, G, NULL, GuidanceConfig(tau=5), rng)
    with pytest.raises(DenoiserError):
        free_generate(ckpt, 5, NULL, 2.0, 1, rng)


def test_target_outside_vocabulary(ckpt, G, rng):
    with pytest.raises(DenoiserError):
        generate_counterfactual(ckpt, G, Condition(3), GuidanceConfig(tau=5), rng)


@pytest.mark.parametrize("cfg", [GuidanceConfig(tau=-1), GuidanceConfig(tau=21), GuidanceConfig(s=-0.5),
                                 GuidanceConfig(num_samples=0)])
def test_bad_config_rejected(ckpt, G, cfg):
    with pytest.raises(ValueError):
        counterfactual_batch(ckpt, G, Condition(4), cfg, [np.random.default_rng(0)])
