"""Conditional, permutation-equivariant graph denoiser.

The network keeps a state per node, per node pair and one global state. The
timestep and the condition are embedded and added to the global state; every
layer updates pairs from their endpoints, nodes by edge-biased attention over
the other nodes, and the global state from pooled node and pair states. Edge
logits are averaged with their transpose so predictions are exactly symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .diffusion import TransitionModel
from .graphs import GraphInstance

LOG_FLOOR = -30.0


class DenoiserError(ValueError):
    pass


@dataclass(frozen=True)
class Condition:
    """A target value from the vocabulary, or the null (unconditional) token when ``value`` is None."""

    value: Optional[int] = None

    @property
    def is_null(self) -> bool:
        return self.value is None


NULL = Condition(None)


@dataclass
class DenoiserOutput:
    X: np.ndarray  # (n, a) predicted clean node distribution
    E: np.ndarray  # (n, n, b) predicted clean edge distribution


class TimeEmbedding(nn.Module):
    def __init__(self, T: int, width: int, n_freq: int = 8):
        super().__init__()
        self.T = T
        self.register_buffer("freqs", math.pi * 2.0 ** torch.arange(n_freq, dtype=torch.float32), persistent=False)
        self.mlp = nn.Sequential(nn.Linear(2 * n_freq, width), nn.SiLU(), nn.Linear(width, width))

    def forward(self, t):
        s = (t.to(self.freqs.dtype) / self.T)[:, None] * self.freqs
        return self.mlp(torch.cat([torch.sin(s), torch.cos(s)], -1))


class GraphLayer(nn.Module):
    def __init__(self, width: int, heads: int = 4):
        super().__init__()
        self.heads = heads
        self.norm_e = nn.LayerNorm(width)
        self.norm_h = nn.LayerNorm(width)
        self.e_self = nn.Linear(width, width)
        self.e_src = nn.Linear(width, width, bias=False)
        self.e_dst = nn.Linear(width, width, bias=False)
        self.e_glob = nn.Linear(width, width, bias=False)
        self.e_out = nn.Linear(width, width)
        self.qkv = nn.Linear(width, 3 * width)
        self.bias = nn.Linear(width, heads)
        self.h_glob = nn.Linear(width, width, bias=False)
        self.h_out = nn.Sequential(nn.Linear(3 * width, width), nn.SiLU(), nn.Linear(width, width))
        self.g_out = nn.Sequential(nn.Linear(3 * width, width), nn.SiLU(), nn.Linear(width, width))

    def forward(self, h, e, g, offdiag):
        B, n, d = h.shape
        en = self.norm_e(e)
        hn = self.norm_h(h)
        msg = self.e_self(en) + self.e_src(hn)[:, :, None] + self.e_dst(hn)[:, None, :] + self.e_glob(g)[:, None, None]
        e = e + self.e_out(F.silu(msg))

        en = self.norm_e(e)
        hn = hn + self.h_glob(g)[:, None]
        q, k, v = self.qkv(hn).view(B, n, 3, self.heads, d // self.heads).unbind(2)
        score = torch.einsum("bihc,bjhc->bijh", q, k) / math.sqrt(d // self.heads) + self.bias(en)
        score = score.masked_fill(~offdiag[None, :, :, None], float("-inf"))
        att = torch.softmax(score, dim=2)
        agg = torch.einsum("bijh,bjhc->bihc", att, v).reshape(B, n, d)
        e_mean = (en * offdiag[None, :, :, None]).sum(2) / max(n - 1, 1)
        h = h + self.h_out(torch.cat([hn, agg, e_mean], -1))

        pooled_e = (e * offdiag[None, :, :, None]).sum((1, 2)) / max(n * (n - 1), 1)
        g = g + self.g_out(torch.cat([g, h.mean(1), pooled_e], -1))
        return h, e, g


class GraphDenoiser(nn.Module):
    def __init__(self, a: int, b: int, n_conditions: int, T: int, layers: int = 3, width: int = 64,
                 heads: int = 4, extra_features: bool = False):
        super().__init__()
        if width % heads:
            raise DenoiserError("width must be divisible by heads")
        self.a, self.b, self.T = a, b, T
        self.extra_features = extra_features
        in_x = a + (2 if extra_features else 0)
        self.embed_x = nn.Linear(in_x, width)
        self.embed_e = nn.Linear(b, width)
        self.embed_t = TimeEmbedding(T, width)
        # last row is the null token, pinned at zero; value rows start at zero too,
        # so they only move away from the null embedding through conditional training.
        # Rows grow at roughly the optimiser step size, so the lookup is scaled up to
        # give the condition a share of the global state comparable to the timestep.
        self.embed_c = nn.Embedding(n_conditions + 1, width, padding_idx=n_conditions)
        nn.init.zeros_(self.embed_c.weight)
        self.cond_scale = math.sqrt(width)
        self.layers = nn.ModuleList(GraphLayer(width, heads) for _ in range(layers))
        self.out_x = nn.Sequential(nn.LayerNorm(width), nn.Linear(width, a))
        self.out_e = nn.Sequential(nn.LayerNorm(width), nn.Linear(width, b))

    def forward(self, X, E, t, cond):
        """Return clean-graph logits ``(B, n, a)`` and symmetric ``(B, n, n, b)``."""
        n = X.shape[1]
        offdiag = ~torch.eye(n, dtype=torch.bool, device=X.device)
        if self.extra_features:
            present = 1.0 - E[..., 0] * offdiag
            deg = present.sum(-1, keepdim=True) / max(n - 1, 1)
            total = deg.mean(1, keepdim=True).expand_as(deg)
            X = torch.cat([X, deg, total], -1)
        h = self.embed_x(X)
        e = self.embed_e(E)
        g = self.embed_t(t) + self.cond_scale * self.embed_c(cond)
        for layer in self.layers:
            h, e, g = layer(h, e, g, offdiag)
        lx = self.out_x(h)
        le = self.out_e(e)
        le = 0.5 * (le + le.transpose(1, 2))
        return lx, le


def log_probs(logits):
    return torch.log_softmax(logits, -1).clamp_min(LOG_FLOOR)


def cross_entropy(logp_x, logp_e, x0, e0, lambda_e: float):
    """Mean node CE plus ``lambda_e`` times mean upper-triangle edge CE."""
    n = logp_x.shape[-2]
    iu = torch.triu_indices(n, n, 1)
    node = -logp_x.gather(-1, x0[..., None]).squeeze(-1).mean()
    le = logp_e[:, iu[0], iu[1]]
    edge = -le.gather(-1, e0[:, iu[0], iu[1], None]).squeeze(-1).mean()
    return node + lambda_e * edge


def loss(pred: DenoiserOutput, G0: GraphInstance, lambda_e: float) -> float:
    """Cross-entropy of a predicted clean distribution against the clean graph."""
    if pred.X.shape != G0.X.shape or pred.E.shape != G0.E.shape:
        raise DenoiserError(f"shape mismatch: {pred.X.shape}/{pred.E.shape} vs {G0.X.shape}/{G0.E.shape}")
    with np.errstate(divide="ignore"):
        lx = np.maximum(np.log(pred.X), LOG_FLOOR)
        lE = np.maximum(np.log(pred.E), LOG_FLOOR)
    n = G0.n
    iu = np.triu_indices(n, 1)
    node = -(lx * G0.X).sum(-1).mean()
    edge = -(lE[iu] * G0.E[iu]).sum(-1).mean() if n > 1 else 0.0
    return float(node + lambda_e * edge)


class Denoiser:
    """A trained network bundled with its transition model and condition vocabulary."""

    def __init__(self, net: GraphDenoiser, tm: TransitionModel, vocab: Sequence[int]):
        self.net = net.eval()
        self.tm = tm
        self.vocab = list(vocab)
        self._index = {v: i for i, v in enumerate(self.vocab)}

    @property
    def null_index(self) -> int:
        return len(self.vocab)

    @property
    def T(self) -> int:
        return self.tm.T

    def cond_index(self, c: Condition) -> int:
        if c.is_null:
            return self.null_index
        if c.value not in self._index:
            raise DenoiserError(f"condition {c.value} outside vocabulary {self.vocab}")
        return self._index[c.value]

    def predict_labels(self, x_t: np.ndarray, e_t: np.ndarray, t, cond_idx) -> tuple[np.ndarray, np.ndarray]:
        """Batched prediction from label arrays ``(B, n)``, ``(B, n, n)``; returns float64 probabilities."""
        B = x_t.shape[0]
        t_arr = np.broadcast_to(np.asarray(t), (B,))
        if np.any(t_arr < 1) or np.any(t_arr > self.T):
            raise DenoiserError(f"t outside [1, {self.T}]")
        dtype = next(self.net.parameters()).dtype
        X = F.one_hot(torch.as_tensor(x_t, dtype=torch.long), self.net.a).to(dtype)
        E = F.one_hot(torch.as_tensor(e_t, dtype=torch.long), self.net.b).to(dtype)
        with torch.no_grad():
            c = torch.as_tensor(np.broadcast_to(cond_idx, (B,)).copy())
            lx, le = self.net(X, E, torch.as_tensor(t_arr.copy()), c)
            px = torch.softmax(lx.double(), -1).numpy()
            pe = torch.softmax(le.double(), -1).numpy()
        return px, pe

    def predict(self, G_t: GraphInstance, t: int, c: Condition) -> DenoiserOutput:
        if G_t.a != self.net.a or G_t.b != self.net.b:
            raise DenoiserError(f"graph has a={G_t.a}, b={G_t.b}; model expects a={self.net.a}, b={self.net.b}")
        px, pe = self.predict_labels(G_t.node_labels()[None], G_t.edge_labels()[None], t, self.cond_index(c))
        return DenoiserOutput(px[0], pe[0])
