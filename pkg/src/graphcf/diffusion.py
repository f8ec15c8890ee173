"""Discrete diffusion over categorical nodes and edges with marginal-noise transitions.

Per-step transitions are ``Q_t = alpha_t I + (1 - alpha_t) 1 m^T`` and the
cumulative ones ``Qbar_t = alphabar_t I + (1 - alphabar_t) 1 m^T`` where ``m``
is the dataset marginal for nodes or edges. Row index is the previous state,
column index the next state.

Sampling helpers work on integer label arrays with arbitrary leading batch
dimensions: nodes ``(..., n)`` and edges ``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import GraphInstance

COSINE_S = 0.008
MARGINAL_FLOOR = 1e-6
NORM_TOL = 1e-6


class DiffusionError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha: np.ndarray  # alpha[t] for t = 0..T, alpha[0] = 1
    alpha_bar: np.ndarray  # alpha_bar[t] for t = 0..T, alpha_bar[0] = 1


def build_schedule(T: int) -> NoiseSchedule:
    """Cosine schedule on the cumulative retention ``alpha_bar``."""
    if T < 1:
        raise DiffusionError(f"T must be >= 1, got {T}")
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos((steps / T + COSINE_S) / (1 + COSINE_S) * np.pi / 2) ** 2
    alpha_bar = f / f[0]
    alpha_bar[0] = 1.0
    alpha = np.ones(T + 1)
    alpha[1:] = alpha_bar[1:] / alpha_bar[:-1]
    return NoiseSchedule(T, alpha, alpha_bar)


def _floored(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 1 or m.size < 1 or np.any(m < 0) or m.sum() <= 0:
        raise DiffusionError(f"invalid marginal {m}")
    m = np.maximum(m / m.sum(), MARGINAL_FLOOR)
    return m / m.sum()


def marginal_matrix(alpha: float, m: np.ndarray) -> np.ndarray:
    return alpha * np.eye(len(m)) + (1.0 - alpha) * np.ones((len(m), 1)) * m[None, :]


class TransitionModel:
    """Node/edge marginals plus a shared noise schedule."""

    def __init__(self, m_x, m_e, schedule: NoiseSchedule):
        self.m_x = _floored(m_x)
        self.m_e = _floored(m_e)
        if len(self.m_e) < 2:
            raise DiffusionError("edge marginal needs at least two categories")
        self.schedule = schedule

    @property
    def T(self) -> int:
        return self.schedule.T

    def marginal(self, which: str) -> np.ndarray:
        if which == "node":
            return self.m_x
        if which == "edge":
            return self.m_e
        raise DiffusionError(f"which must be 'node' or 'edge', got {which!r}")

    def transition_matrix(self, t: int, which: str) -> np.ndarray:
        if not 1 <= t <= self.T:
            raise DiffusionError(f"t={t} outside [1, {self.T}]")
        return marginal_matrix(self.schedule.alpha[t], self.marginal(which))

    def cumulative_transition(self, t: int, which: str) -> np.ndarray:
        if not 0 <= t <= self.T:
            raise DiffusionError(f"t={t} outside [0, {self.T}]")
        return marginal_matrix(self.schedule.alpha_bar[t], self.marginal(which))

    def posterior(self, x_t: int, x_0: int, t: int, which: str) -> np.ndarray:
        """``q(x_{t-1} | x_t, x_0)`` as a distribution over categories."""
        Qt = self.transition_matrix(t, which)
        Qb = self.cumulative_transition(t - 1, which)
        p = Qt[:, x_t] * Qb[x_0, :]
        return p / p.sum()

    def posterior_table(self, t: int, which: str) -> np.ndarray:
        """``table[x_t, x_0, k] = q(x_{t-1}=k | x_t, x_0)``."""
        Qt = self.transition_matrix(t, which)
        Qb_prev = self.cumulative_transition(t - 1, which)
        Qb = self.cumulative_transition(t, which)
        table = Qt.T[:, None, :] * Qb_prev[None, :, :]
        return table / Qb.T[:, :, None]


def _check_simplex(p: np.ndarray, name: str) -> None:
    if np.any(p < -NORM_TOL) or np.any(np.abs(p.sum(-1) - 1.0) > NORM_TOL):
        raise DiffusionError(f"{name} rows are not normalised")


def sample_categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw: ``probs`` (..., k), uniforms ``u`` (...)."""
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = np.inf
    return (u[..., None] >= cdf).sum(-1)


def _triu(n: int):
    return np.triu_indices(n, 1)


def draw_uniforms(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniforms for one graph: ``n`` node draws then ``n(n-1)/2`` upper-triangle edge draws."""
    return rng.random(n), rng.random(n * (n - 1) // 2)


def draw_uniforms_batch(rngs, n: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = [draw_uniforms(r, n) for r in rngs]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def sample_graph_labels(px: np.ndarray, pe: np.ndarray, ux: np.ndarray, ue: np.ndarray):
    """Draw node labels ``(..., n)`` and symmetric edge labels ``(..., n, n)``.

    Only the upper triangle of ``pe`` is used; the diagonal is set to category 0.
    """
    n = px.shape[-2]
    iu = _triu(n)
    x = sample_categorical(px, ux)
    upper = sample_categorical(pe[..., iu[0], iu[1], :], ue)
    e = np.zeros(pe.shape[:-1], dtype=np.int64)
    e[..., iu[0], iu[1]] = upper
    e[..., iu[1], iu[0]] = upper
    return x, e


def forward_probs(tm: TransitionModel, x0: np.ndarray, e0: np.ndarray, t: int):
    """Rows of ``X Qbar_t`` and ``E Qbar_t`` for label arrays."""
    Qx = tm.cumulative_transition(t, "node")
    Qe = tm.cumulative_transition(t, "edge")
    return Qx[x0], Qe[e0]


def forward_sample_labels(tm: TransitionModel, x0, e0, t: int, ux, ue):
    if t == 0:
        return np.array(x0), np.array(e0)
    px, pe = forward_probs(tm, x0, e0, t)
    return sample_graph_labels(px, pe, ux, ue)


def forward_sample(tm: TransitionModel, G: GraphInstance, t: int, rng: np.random.Generator) -> GraphInstance:
    """Draw ``G_t ~ q(G_t | G)``; ``t = 0`` returns a copy of ``G``."""
    if not 0 <= t <= tm.T:
        raise DiffusionError(f"t={t} outside [0, {tm.T}]")
    if t == 0:
        return GraphInstance(G.X.copy(), G.E.copy(), G.y)
    ux, ue = draw_uniforms(rng, G.n)
    x, e = forward_sample_labels(tm, G.node_labels(), G.edge_labels(), t, ux, ue)
    return GraphInstance.from_labels(x, e, G.a, G.b, G.y)


def reverse_probs(tm: TransitionModel, x_t: np.ndarray, e_t: np.ndarray, pred_x: np.ndarray,
                  pred_e: np.ndarray, t: int):
    """``p(z_{t-1}) = sum_z0 q(z_{t-1} | z_t, z0) pred(z0)`` for every node and edge slot.

    ``x_t`` (..., n) and ``e_t`` (..., n, n) are labels; ``pred_x`` (..., n, a) and
    ``pred_e`` (..., n, n, b) are predicted clean distributions.
    """
    if not 1 <= t <= tm.T:
        raise DiffusionError(f"t={t} outside [1, {tm.T}]")
    _check_simplex(pred_x, "node prediction")
    _check_simplex(pred_e, "edge prediction")
    tx = tm.posterior_table(t, "node")[x_t]  # (..., n, a0, a)
    te = tm.posterior_table(t, "edge")[e_t]  # (..., n, n, b0, b)
    px = np.einsum("...i,...ik->...k", pred_x, tx)
    pe = np.einsum("...i,...ik->...k", pred_e, te)
    px = px / px.sum(-1, keepdims=True)
    pe = pe / pe.sum(-1, keepdims=True)
    n = px.shape[-2]
    diag = np.arange(n)
    pe[..., diag, diag, :] = 0.0
    pe[..., diag, diag, 0] = 1.0
    return px, pe


def reverse_step_distribution(tm: TransitionModel, G_t: GraphInstance, pred, t: int):
    """Per-node ``(n, a)`` and per-edge ``(n, n, b)`` distributions of ``G_{t-1}``."""
    return reverse_probs(tm, G_t.node_labels(), G_t.edge_labels(), np.asarray(pred.X), np.asarray(pred.E), t)


def sample_step(tm: TransitionModel, G_t: GraphInstance, pred, t: int, rng: np.random.Generator) -> GraphInstance:
    px, pe = reverse_step_distribution(tm, G_t, pred, t)
    ux, ue = draw_uniforms(rng, G_t.n)
    x, e = sample_graph_labels(px, pe, ux, ue)
    return GraphInstance.from_labels(x, e, G_t.a, G_t.b, G_t.y)


def prior_sample_labels(tm: TransitionModel, shape: tuple, n: int, ux, ue):
    """Draw graphs whose node and edge slots are i.i.d. from the marginals."""
    px = np.broadcast_to(tm.m_x, shape + (n, len(tm.m_x)))
    pe = np.broadcast_to(tm.m_e, shape + (n, n, len(tm.m_e)))
    return sample_graph_labels(px, pe, ux, ue)
