"""Denoiser training with conditioning dropout."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import ModelCheckpoint, from_net
from .dataset import LabeledDataset
from .denoiser import GraphDenoiser, cross_entropy, log_probs
from .diffusion import TransitionModel, build_schedule, sample_graph_labels

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    T: int = 200
    layers: int = 3
    width: int = 64
    heads: int = 4
    p_uncond: float = 0.1
    steps: int = 20000
    batch_size: int = 64
    lr: float = 3e-4
    clip: float = 1.0
    lambda_e: float = 5.0
    seed: int = 0
    extra_features: bool = False
    log_every: int = 100


def condition_vocab(ds: LabeledDataset) -> list[int]:
    """Edge counts realisable by connected planar graphs on ``ds.n`` nodes."""
    n = ds.n
    hi = 3 * n - 6 if n >= 3 else n * (n - 1) // 2
    return list(range(n - 1, hi + 1))


def dataset_labels(ds: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    n = ds.n
    x0 = np.zeros((len(ds), n), dtype=np.int64)
    e0 = np.stack([g.adjacency().astype(np.int64) for g in ds.graphs])
    return x0, e0


def noise_batch(tm: TransitionModel, x0, e0, ts, rng: np.random.Generator):
    """Forward-noise a batch where each graph has its own timestep."""
    ab = tm.schedule.alpha_bar[ts]
    px = ab[:, None, None] * np.eye(len(tm.m_x))[x0] + (1 - ab)[:, None, None] * tm.m_x
    pe = ab[:, None, None, None] * np.eye(len(tm.m_e))[e0] + (1 - ab)[:, None, None, None] * tm.m_e
    B, n = x0.shape
    return sample_graph_labels(px, pe, rng.random((B, n)), rng.random((B, n * (n - 1) // 2)))


def train(ds: LabeledDataset, config: TrainConfig,
          init: Optional[ModelCheckpoint] = None,
          on_log: Optional[Callable[[int, float], None]] = None) -> tuple[ModelCheckpoint, list[tuple[int, float]]]:
    """Train a denoiser on ``ds``; returns the checkpoint and the logged loss curve.

    With ``init`` the network starts from those parameters (optimizer state is fresh).
    """
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    vocab = condition_vocab(ds)
    index = {v: i for i, v in enumerate(vocab)}
    tm = TransitionModel(ds.marginals_x, ds.marginals_e, build_schedule(config.T))
    arch = dict(a=ds.a, b=ds.b, layers=config.layers, width=config.width, heads=config.heads,
                extra_features=config.extra_features)
    net = GraphDenoiser(n_conditions=len(vocab), T=config.T, **arch)
    steps_before = 0
    if init is not None:
        if init.T != config.T:
            raise ValueError(f"cannot resume: checkpoint has T={init.T}, config has T={config.T}")
        if init.arch != arch or init.vocab != vocab:
            raise ValueError("cannot resume: checkpoint architecture or vocabulary differs from config")
        net = init.build_net()
        steps_before = int(init.meta.get("steps", 0))
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)

    x0_all, e0_all = dataset_labels(ds)
    y_all = np.array([index[y] for y in ds.labels])
    null = len(vocab)
    curve = []
    running = 0.0
    t0 = time.time()
    for step in range(1, config.steps + 1):
        idx = rng.integers(len(ds), size=config.batch_size)
        ts = rng.integers(1, config.T + 1, size=config.batch_size)
        x0, e0 = x0_all[idx], e0_all[idx]
        xt, et = noise_batch(tm, x0, e0, ts, rng)
        cond = np.where(rng.random(config.batch_size) < config.p_uncond, null, y_all[idx])

        lx, le = net(F.one_hot(torch.from_numpy(xt), ds.a).float(), F.one_hot(torch.from_numpy(et), ds.b).float(),
                     torch.from_numpy(ts), torch.from_numpy(cond))
        loss = cross_entropy(log_probs(lx), log_probs(le), torch.from_numpy(x0), torch.from_numpy(e0), config.lambda_e)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(f"loss became {value} at step {step}")
        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(net.parameters(), config.clip)
        opt.step()

        running += value
        if step % config.log_every == 0 or step == config.steps:
            k = step % config.log_every or config.log_every
            avg = running / k
            running = 0.0
            curve.append((steps_before + step, avg))
            if on_log:
                on_log(steps_before + step, avg)
            log.debug("step %d loss %.5f (%.1fs)", step, avg, time.time() - t0)

    meta = {"steps": steps_before + config.steps, "seed": config.seed,
            "final_loss": curve[-1][1] if curve else None, "config": asdict(config)}
    return from_net(net, arch, vocab, tm, meta), curve
