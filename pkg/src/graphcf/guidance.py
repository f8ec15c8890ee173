"""Classifier-free guidance and counterfactual generation by partial noising."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .checkpoint import ModelCheckpoint
from .denoiser import Condition, Denoiser, DenoiserError
from .diffusion import (
    draw_uniforms,
    draw_uniforms_batch,
    forward_sample_labels,
    prior_sample_labels,
    reverse_probs,
    sample_graph_labels,
)
from .graphs import GraphInstance

PROB_FLOOR = 1e-12

Model = Union[Denoiser, ModelCheckpoint]


@dataclass
class GuidanceConfig:
    s: float = 2.0
    tau: int = 50
    num_samples: int = 100
    seed: int = 0

    def validate(self, T: int) -> None:
        if self.s < 0:
            raise ValueError(f"guidance scale must be >= 0, got {self.s}")
        if not 0 <= self.tau <= T:
            raise ValueError(f"tau={self.tau} outside [0, {T}]")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")


def cfg_combine(p_cond: np.ndarray, p_uncond: np.ndarray, s: float) -> np.ndarray:
    """Guided distribution ``softmax((1 + s) log p_cond - s log p_uncond)`` along the last axis."""
    lc = np.log(np.maximum(p_cond, PROB_FLOOR))
    lu = np.log(np.maximum(p_uncond, PROB_FLOOR))
    z = (1.0 + s) * lc - s * lu
    z = z - z.max(-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(-1, keepdims=True)


def as_denoiser(model: Model) -> Denoiser:
    if isinstance(model, ModelCheckpoint):
        return model.denoiser()
    return model


def sample_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one sample, derived from the run seed and its key."""
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def counterfactual_stream(seed: int, input_index: int, tau: int, sample_index: int) -> np.random.Generator:
    return sample_stream(seed, 0, input_index, tau, sample_index)


def baseline_stream(seed: int, input_index: int, sample_index: int) -> np.random.Generator:
    return sample_stream(seed, 1, input_index, sample_index)


def guided_prediction(den: Denoiser, x_t, e_t, t: int, cond_idx: int, s: float):
    """Guided clean-graph distributions for a batch; one network call covers both branches."""
    B = x_t.shape[0]
    if s == 0:
        return den.predict_labels(x_t, e_t, t, cond_idx)
    conds = np.concatenate([np.full(B, cond_idx), np.full(B, den.null_index)])
    px, pe = den.predict_labels(np.concatenate([x_t, x_t]), np.concatenate([e_t, e_t]), t, conds)
    return cfg_combine(px[:B], px[B:], s), cfg_combine(pe[:B], pe[B:], s)


def guided_reverse(den: Denoiser, x_t, e_t, t_start: int, cond_idx: int, s: float, rngs: Sequence):
    """Run the guided reverse chain from ``t_start`` down to 0 for a batch of label arrays."""
    n = x_t.shape[-1]
    for t in range(t_start, 0, -1):
        pred_x, pred_e = guided_prediction(den, x_t, e_t, t, cond_idx, s)
        px, pe = reverse_probs(den.tm, x_t, e_t, pred_x, pred_e, t)
        ux, ue = draw_uniforms_batch(rngs, n)
        x_t, e_t = sample_graph_labels(px, pe, ux, ue)
    return x_t, e_t


def _target_index(den: Denoiser, y1: Condition) -> int:
    if y1.is_null:
        raise DenoiserError("counterfactual target must be a concrete value, not the null token")
    return den.cond_index(y1)


def counterfactual_batch(model: Model, G: GraphInstance, y1: Condition, cfg: GuidanceConfig,
                         rngs: Sequence[np.random.Generator]) -> list[GraphInstance]:
    """One counterfactual per generator in ``rngs``.

    Each sample first draws its own noisy ``G_tau`` and then follows its own
    guided reverse chain, all driven by its generator, so the result for a
    sample does not depend on how samples are batched.
    """
    den = as_denoiser(model)
    cfg.validate(den.T)
    ci = _target_index(den, y1)
    if cfg.tau == 0:
        return [GraphInstance(G.X.copy(), G.E.copy(), y1.value) for _ in rngs]
    x0, e0 = G.node_labels(), G.edge_labels()
    xs, es = [], []
    for r in rngs:
        ux, ue = draw_uniforms(r, G.n)
        x, e = forward_sample_labels(den.tm, x0, e0, cfg.tau, ux, ue)
        xs.append(x)
        es.append(e)
    x, e = guided_reverse(den, np.stack(xs), np.stack(es), cfg.tau, ci, cfg.s, rngs)
    return [GraphInstance.from_labels(x[k], e[k], G.a, G.b, y1.value) for k in range(len(rngs))]


def generate_counterfactual(model: Model, G: GraphInstance, y1: Condition, cfg: GuidanceConfig,
                            rng: np.random.Generator) -> GraphInstance:
    """Noise ``G`` to depth ``cfg.tau`` and denoise back under guidance towards ``y1``."""
    return counterfactual_batch(model, G, y1, cfg, [rng])[0]


def generate_counterfactuals(model: Model, G: GraphInstance, y1: Condition, cfg: GuidanceConfig,
                             input_index: int = 0) -> list[GraphInstance]:
    """``cfg.num_samples`` counterfactuals with per-sample streams keyed by (seed, input, tau, sample)."""
    rngs = [counterfactual_stream(cfg.seed, input_index, cfg.tau, k) for k in range(cfg.num_samples)]
    return counterfactual_batch(model, G, y1, cfg, rngs)


def free_generate(model: Model, n: int, y1: Condition, s: float, num_samples: int,
                  rng: Union[np.random.Generator, Sequence[np.random.Generator]]) -> list[GraphInstance]:
    """Input-independent baseline: start from the marginal prior and denoise from ``T`` under guidance.

    ``rng`` is either one generator shared by all samples or one generator per sample.
    """
    den = as_denoiser(model)
    ci = _target_index(den, y1)
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    rngs = list(rng) if isinstance(rng, (list, tuple)) else [rng] * num_samples
    if len(rngs) != num_samples:
        raise ValueError("need one generator per sample")
    xs, es = [], []
    for r in rngs:
        ux, ue = draw_uniforms(r, n)
        x, e = prior_sample_labels(den.tm, (), n, ux, ue)
        xs.append(x)
        es.append(e)
    x, e = guided_reverse(den, np.stack(xs), np.stack(es), den.T, ci, s, rngs)
    a, b = len(den.tm.m_x), len(den.tm.m_e)
    return [GraphInstance.from_labels(x[k], e[k], a, b, y1.value) for k in range(num_samples)]
