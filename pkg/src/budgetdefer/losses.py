"""Comp-sum surrogate losses, deferral losses and the system-accuracy metric.

Per-decision losses are divided by ``norm_factor = n_terms * ell_max`` where
``ell_max`` is the largest value the loss can reach on clipped scores and
``n_terms`` is the number of loss terms that appear in the surrogate
(``n_e`` for two-stage, ``n_e + 1`` for single-stage). The surrogates then
lie in ``[0, 1]`` and every per-decision term in ``[0, 1 / n_terms]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .linear_model import argmax_lowest

# Psi transforms, written as functions of log-softmax probabilities.
PSI = {
    "neg_log": lambda logp: -logp,
}


@dataclass(frozen=True)
class LossConfig:
    n_decisions: int
    n_terms: int
    score_bound: float = 1.0
    psi: str = "neg_log"

    def __post_init__(self):
        if self.psi not in PSI:
            raise ValueError(f"unknown psi transform {self.psi!r}")
        if self.n_decisions < 2 or self.n_terms < 1:
            raise ValueError("need at least two decisions and one loss term")

    @classmethod
    def two_stage(cls, n_experts, score_bound=1.0, psi="neg_log"):
        return cls(n_experts, n_experts, score_bound, psi)

    @classmethod
    def single_stage(cls, n_classes, n_experts, score_bound=1.0, psi="neg_log"):
        return cls(n_classes + n_experts, n_experts + 1, score_bound, psi)

    @property
    def ell_max(self) -> float:
        # smallest softmax probability reachable with scores in [-B, B]
        log_u_min = -np.log1p((self.n_decisions - 1) * np.exp(2.0 * self.score_bound))
        return float(PSI[self.psi](log_u_min))

    @property
    def norm_factor(self) -> float:
        return self.n_terms * self.ell_max


def raw_losses(cfg: LossConfig, scores) -> np.ndarray:
    """Unnormalized ``Psi(softmax_k(scores))`` for every decision ``k`` (last axis)."""
    return PSI[cfg.psi](log_softmax(np.asarray(scores, dtype=np.float64), axis=-1))


def loss_matrix(cfg: LossConfig, scores) -> np.ndarray:
    """Normalized per-decision losses; same shape as ``scores``."""
    return raw_losses(cfg, scores) / cfg.norm_factor


def comp_sum_loss(cfg: LossConfig, s, x, k: int, normalized: bool = True) -> float:
    if not 0 <= k < cfg.n_decisions:
        raise IndexError(f"decision index {k} out of range")
    value = raw_losses(cfg, s.scores(np.asarray(x, dtype=np.float64)))[k]
    return float(value / cfg.norm_factor if normalized else value)


def _binary_costs(c, n):
    c = np.asarray(c, dtype=np.float64)
    if c.shape[-1] != n:
        raise ValueError(f"expected {n} costs, got {c.shape[-1]}")
    if not np.all((c == 0) | (c == 1)):
        raise ValueError("costs must be 0 or 1")
    return c


def two_stage_surrogate(cfg: LossConfig, r, x, c) -> float:
    """``sum_k (1 - c_k) * loss(r, x, k)`` with normalized per-expert losses."""
    c = _binary_costs(c, cfg.n_decisions)
    ell = loss_matrix(cfg, r.scores(np.asarray(x, dtype=np.float64)))
    return float(((1.0 - c) * ell).sum())


def single_stage_surrogate(cfg: LossConfig, h, x, y: int, c) -> float:
    """``loss(h, x, y) + sum_k (1 - c_k) * loss(h, x, n + k)``."""
    n_experts = cfg.n_terms - 1
    n_classes = cfg.n_decisions - n_experts
    c = _binary_costs(c, n_experts)
    if not 0 <= y < n_classes:
        raise IndexError(f"label {y} out of range")
    ell = loss_matrix(cfg, h.scores(np.asarray(x, dtype=np.float64)))
    return float(ell[y] + ((1.0 - c) * ell[n_classes:]).sum())


def two_stage_deferral_loss(r, x, y, costs) -> float:
    """Cost of the expert the router selects."""
    k = int(argmax_lowest(r.scores(np.asarray(x, dtype=np.float64))))
    return float(np.asarray(costs)[k])


def single_stage_deferral_loss(h, x, y: int, costs) -> float:
    costs = np.asarray(costs)
    n_classes = h.n_decisions - costs.shape[0]
    d = int(argmax_lowest(h.scores(np.asarray(x, dtype=np.float64))))
    if d < n_classes:
        return float(d != y)
    return float(costs[d - n_classes])


def two_stage_deferral_losses(decisions, costs) -> np.ndarray:
    """Vectorized two-stage deferral loss.

    ``decisions`` has shape ``(N, ...)`` (trailing axes, e.g. pool members,
    broadcast) and ``costs`` is the ``(N, n_e)`` cost matrix.
    """
    decisions = np.asarray(decisions)
    costs = np.asarray(costs, dtype=np.float64)
    rows = np.arange(decisions.shape[0]).reshape((-1,) + (1,) * (decisions.ndim - 1))
    return costs[rows, decisions]


def single_stage_deferral_losses(decisions, y, costs, n_classes: int) -> np.ndarray:
    decisions = np.asarray(decisions)
    costs = np.asarray(costs, dtype=np.float64)
    y = np.asarray(y).reshape((-1,) + (1,) * (decisions.ndim - 1))
    rows = np.arange(decisions.shape[0]).reshape(y.shape)
    expert = np.clip(decisions - n_classes, 0, costs.shape[1] - 1)
    deferred = costs[rows, expert]
    return np.where(decisions < n_classes, (decisions != y).astype(np.float64), deferred)


def system_accuracy(model, X, y, costs, single_stage: bool = False) -> float:
    """Mean of ``1 - deferral loss`` over a test set.

    Passing a :class:`HypothesisPool` as ``model`` returns one accuracy per member.

    ``costs`` is the test cost matrix ``(N, n_e)``, produced once per trial
    with a fixed evaluation seed so all algorithms are scored on the same
    expert answers.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty test set")
    decisions = model.predict(X)
    if single_stage:
        n_classes = model.n_decisions - np.asarray(costs).shape[1]
        loss = single_stage_deferral_losses(decisions, y, costs, n_classes)
    else:
        loss = two_stage_deferral_losses(decisions, costs)
    acc = 1.0 - loss.mean(axis=0)
    return float(acc) if loss.ndim == 1 else acc
