"""Budgeted single-stage deferral: one scorer over ``n`` labels plus ``n_e`` experts.

Arm 0 means "predict directly": the sample is stored with weight ``1/q_0``
and no cost is bought. Arm ``k >= 1`` defers to expert ``k - 1`` (0-based)
and buys its cost only if a Bernoulli(``p_k``) draw succeeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .losses import LossConfig, loss_matrix, single_stage_deferral_losses
from .two_stage import (
    RoundLog,
    RunResult,
    RunTrace,
    SamplingPolicy,
    ThresholdConfig,
    VersionSpace,
    _categorical,
    _check_stream,
    _log_rounds,
    _masked_argmin,
    sampling_probs,
)


@dataclass(frozen=True)
class SingleStageRecord:
    """History entry: arm ``k`` in ``0..n_e``; ``Q`` and ``c`` only matter for ``k > 0``."""

    k: int
    Q: int
    q: np.ndarray  # length n_e + 1
    p: np.ndarray  # length n_e (deferral arms)
    c: int = 0


@dataclass(frozen=True)
class SingleStageSample:
    index: int
    x: np.ndarray
    y: int
    k: int  # arm, 0 = direct prediction
    c: int
    w: float


def iw_estimate_single(history: Sequence[SingleStageRecord], label_losses, defer_losses):
    """Importance-weighted single-stage surrogate.

    Parameters
    ----------
    label_losses : array ``(T, ...)``
        Normalized ``loss(h, x_t, y_t)``.
    defer_losses : array ``(T, ..., n_e)``
        Normalized ``loss(h, x_t, n + k)``.
    """
    label_losses = np.asarray(label_losses, dtype=np.float64)
    defer_losses = np.asarray(defer_losses, dtype=np.float64)
    T = len(history)
    if T == 0:
        raise ValueError("empty history")
    total = np.zeros(label_losses.shape[1:])
    for t, rec in enumerate(history):
        if rec.k == 0:
            total = total + label_losses[t] / rec.q[0]
        elif rec.Q:
            p = rec.p[rec.k - 1]
            if not p > 0:
                raise ValueError(f"round {t}: queried with p = 0")
            total = total + (1.0 - rec.c) / (rec.q[rec.k] * p) * defer_losses[t, ..., rec.k - 1]
    total = total / T
    return float(total) if np.ndim(total) == 0 else total


def sampling_prob_single(vs: VersionSpace, pool, cfg: LossConfig, x, k: int) -> float:
    """Query probability for deferring to expert ``k`` (0-based) at ``x``."""
    n_experts = cfg.n_terms - 1
    n_classes = cfg.n_decisions - n_experts
    if not 0 <= k < n_experts:
        raise IndexError(f"expert index {k} out of range")
    ell = loss_matrix(cfg, pool.scores(np.asarray(x, dtype=np.float64)[None])[0])
    return float(sampling_probs(vs.active, ell[:, n_classes:])[k])


def weighted_erm_single(samples: Sequence[SingleStageSample], pool, cfg: LossConfig,
                        active=None) -> int:
    n_experts = cfg.n_terms - 1
    n_classes = cfg.n_decisions - n_experts
    objective = np.zeros(len(pool))
    if samples:
        X = np.stack([s.x for s in samples])
        target = np.array([s.y if s.k == 0 else n_classes + s.k - 1 for s in samples])
        coef = np.array([s.w * (1.0 - s.c) for s in samples])
        ell = loss_matrix(cfg, pool.scores(X))
        objective = (coef[:, None] * ell[np.arange(len(samples)), :, target]).sum(axis=0)
    return _masked_argmin(objective, active)


def run_budgeted_single_stage(X, y, test, pool, panel, n_classes: int,
                              policy: SamplingPolicy | None = None,
                              threshold: ThresholdConfig | None = None, T: int | None = None,
                              seed: int = 0, log_every: int | None = None,
                              erm_over_full_pool: bool = False, record_masks: bool = False,
                              stream_index=None) -> RunResult:
    """Budgeted single-stage learner; mirrors :func:`run_budgeted_two_stage`.

    ``policy`` has ``n_e + 1`` entries (index 0 = predict directly). Thresholds
    use ``q_min`` over all arms and, in Freedman mode, ``n_e + 1`` arms.
    """
    n_e = panel.n_experts
    if pool.n_decisions != n_classes + n_e:
        raise ValueError(f"single-stage pools need {n_classes + n_e} decisions, "
                         f"got {pool.n_decisions}")
    T = X.shape[0] if T is None else T
    X, y = _check_stream(X, y, T, pool)
    y = y.astype(np.int64)
    policy = policy or SamplingPolicy.uniform(n_e + 1)
    if policy.n_arms != n_e + 1:
        raise ValueError("policy must have n_e + 1 entries")
    threshold = threshold or ThresholdConfig(pool_size=len(pool))
    if threshold.pool_size != len(pool):
        threshold = ThresholdConfig(threshold.mode, threshold.delta, len(pool))
    stream_index = np.arange(T) if stream_index is None else np.asarray(stream_index)
    cfg = LossConfig.single_stage(n_classes, n_e, pool.score_bound)

    L = loss_matrix(cfg, pool.scores(X))  # (T, R, n + n_e)
    L_label = L[np.arange(T), :, y]  # (T, R)
    L_defer = L[:, :, n_classes:]  # (T, R, n_e)
    X_test, y_test, test_costs = test
    test_loss = single_stage_deferral_losses(pool.predict(X_test), y_test, test_costs, n_classes)
    test_acc = 1.0 - test_loss.mean(axis=0)

    rng = np.random.default_rng(seed)
    R = len(pool)
    active = np.ones(R, dtype=bool)
    sums = np.zeros(R)
    sum_p = 0.0
    queries = 0
    arm0 = 0
    per_expert = np.zeros(n_e, np.int64)
    delta_prev = math.inf
    logged = _log_rounds(T, log_every)
    trace = RunTrace(k=np.zeros(T, np.int64), Q=np.zeros(T, np.int64), p_selected=np.zeros(T),
                     p=np.zeros((T, n_e)), delta=np.zeros(T), vs_size=np.zeros(T, np.int64),
                     chosen=np.zeros(T, np.int64),
                     masks=np.zeros((T, R), bool) if record_masks else None)
    samples, logs = [], []
    chosen = 0

    for t in range(1, T + 1):
        i = t - 1
        if t >= 2:
            errors = sums / (t - 1)
            best = errors[active].min()
            active = active & (errors <= best + delta_prev)
        p = sampling_probs(active, L_defer[i])
        sum_p += float(p.sum())

        arm = _categorical(policy, rng.random())
        u = rng.random()
        Q = 0
        p_sel = 1.0
        if arm == 0:
            arm0 += 1
            w = 1.0 / policy.q[0]
            sums += w * L_label[i]
            samples.append(SingleStageSample(i, X[i], int(y[i]), 0, 0, w))
        else:
            e = arm - 1
            p_sel = float(p[e])
            Q = int(u < p_sel)
            if Q:
                c = panel.query_cost(e, int(y[i]), int(stream_index[i]))
                queries += 1
                per_expert[e] += 1
                w = 1.0 / (policy.q[arm] * p_sel)
                sums += w * (1.0 - c) * L_defer[i, :, e]
                samples.append(SingleStageSample(i, X[i], int(y[i]), arm, c, w))

        chosen = _masked_argmin(sums, None if erm_over_full_pool else active)
        delta_prev = threshold.value(t, policy, n_e + 1, sum_p)

        trace.k[i], trace.Q[i], trace.p_selected[i] = arm, Q, p_sel
        trace.p[i] = p
        trace.delta[i] = delta_prev
        trace.vs_size[i] = active.sum()
        trace.chosen[i] = chosen
        if record_masks:
            trace.masks[i] = active
        if t in logged:
            logs.append(RoundLog(t, queries, n_e * t, int(active.sum()), delta_prev, p_sel,
                                 float(test_acc[chosen]), arm0, tuple(int(v) for v in per_expert)))

    return RunResult(chosen, pool[chosen], logs, trace, samples,
                     VersionSpace(active, T), queries)
