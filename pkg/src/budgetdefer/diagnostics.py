"""Empirical estimates of the theory constants, and the exhaustive oracle.

None of these certify population quantities; they are sample estimates and
test oracles.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .losses import LossConfig, loss_matrix
from .two_stage import RoundRecord, iw_estimate
from .single_stage import SingleStageRecord, iw_estimate_single

MAX_OUTCOMES = 100_000


@dataclass(frozen=True)
class TheoryEstimate:
    quantity: str  # "K_ell", "rho" or "theta"
    value: float
    sample_size: int
    epsilon_grid: tuple | None = None
    n_infinite: int = 0


def _pool_losses(pool, X, cfg=None):
    cfg = cfg or LossConfig.two_stage(pool.n_decisions, pool.score_bound)
    return loss_matrix(cfg, pool.scores(X))  # (N, R, n_e)


def slope_asymmetry_bound(costs) -> float:
    """``4 n_e / rho_hat`` with ``rho_hat`` the smallest zero-cost fraction over rows."""
    costs = np.asarray(costs)
    frac = (costs == 0).sum(axis=1).min() / costs.shape[1]
    if frac == 0:
        return np.inf
    return 4.0 * costs.shape[1] / frac


def slope_asymmetry_ratios(losses_r, losses_rp, costs) -> np.ndarray:
    """Per-tuple ratio ``sum_k |dl_k| / sum_{k: c_k = 0} |dl_k|``.

    With binary costs the max over cost vectors is the all-zero vector and the
    min is taken over the instance's own zero set. ``0/0`` counts as 1 and
    ``x/0`` (``x > 0``) as ``inf``.
    """
    diff = np.abs(np.asarray(losses_r) - np.asarray(losses_rp))
    num = diff.sum(axis=-1)
    den = np.where(np.asarray(costs) == 0, diff, 0.0).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    ratio = np.where(num == 0, 1.0, ratio)
    return np.where((den == 0) & (num > 0), np.inf, ratio)


def estimate_slope_asymmetry(pool, X, costs, pair_budget: int = 10_000, seed: int = 0,
                             cfg=None, return_ratios: bool = False):
    """Max finite ratio over ``pair_budget`` sampled ``(r, r', x)`` tuples.

    ``costs`` is the true ``(N, n_e)`` cost matrix of ``X``; each row must
    contain a zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    costs = np.asarray(costs)
    if len(pool) == 0 or X.shape[0] == 0:
        raise ValueError("need a nonempty pool and sample")
    if not np.all((costs == 0).any(axis=1)):
        raise ValueError("every example needs a zero-cost expert")
    rng = np.random.default_rng(seed)
    r = rng.integers(len(pool), size=pair_budget)
    rp = rng.integers(len(pool), size=pair_budget)
    ix = rng.integers(X.shape[0], size=pair_budget)
    ell = _pool_losses(pool, X, cfg)
    ratios = slope_asymmetry_ratios(ell[ix, r], ell[ix, rp], costs[ix])
    finite = ratios[np.isfinite(ratios)]
    est = TheoryEstimate("K_ell", float(finite.max()) if finite.size else 1.0, pair_budget,
                         n_infinite=int((~np.isfinite(ratios)).sum()))
    return (est, ratios) if return_ratios else est


def rho_distance(r, r_prime, X, cfg=None) -> float:
    """Mean over ``X`` of ``sum_k |loss(r, x, k) - loss(r', x, k)|``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty sample")
    cfg = cfg or LossConfig.two_stage(r.n_decisions, r.score_bound)
    diff = np.abs(loss_matrix(cfg, r.scores(X)) - loss_matrix(cfg, r_prime.scores(X)))
    return float(diff.sum(axis=1).mean())


def rho_matrix(pool, X, cfg=None) -> np.ndarray:
    """Pairwise ``rho`` over the pool, shape ``(R, R)``."""
    ell = _pool_losses(pool, np.atleast_2d(X), cfg)
    out = np.zeros((len(pool), len(pool)))
    for a in range(len(pool)):
        out[a] = np.abs(ell[:, a:a + 1, :] - ell).sum(axis=2).mean(axis=0)
    return out


def estimate_disagreement_coefficient(pool, r_star: int, X, epsilon_grid, cfg=None):
    """``max_eps (1/eps) * mean_x sup_{r in B(r*, eps)} sup_k |dl_k|`` by brute force."""
    grid = tuple(float(e) for e in epsilon_grid)
    if not grid:
        raise ValueError("empty epsilon grid")
    if any(e <= 0 for e in grid):
        raise ValueError("epsilon values must be positive")
    if not 0 <= r_star < len(pool):
        raise IndexError("r_star not in pool")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    ell = _pool_losses(pool, X, cfg)
    dev = np.abs(ell - ell[:, r_star:r_star + 1, :])  # (N, R, n_e)
    rho = dev.sum(axis=2).mean(axis=0)  # distance of each member to r*
    sup_k = dev.max(axis=2)  # (N, R)
    best = 0.0
    for eps in grid:
        ball = rho <= eps
        best = max(best, float(sup_k[:, ball].max(axis=1).mean()) / eps)
    return TheoryEstimate("theta", best, X.shape[0], grid)


# ---------------------------------------------------------------------------
# exhaustive expectation oracle
# ---------------------------------------------------------------------------

def _check_size(n_outcomes_per_round, T):
    total = n_outcomes_per_round ** T
    if total > MAX_OUTCOMES:
        raise ValueError(f"{total} joint outcomes exceed the enumeration cap {MAX_OUTCOMES}")


def exhaustive_iw_expectation(losses, costs, q, p) -> np.ndarray:
    """Exact expectation of :func:`iw_estimate` over every ``(k_t, Q_t)`` outcome.

    Parameters
    ----------
    losses : ``(T, M, n_e)`` normalized losses of ``M`` scorers.
    costs : ``(T, n_e)`` true binary costs.
    q : ``(n_e,)`` or ``(T, n_e)`` expert-selection probabilities.
    p : ``(T, n_e)`` query probabilities (fixed per round).
    """
    losses = np.asarray(losses, dtype=np.float64)
    costs = np.asarray(costs)
    T, _, n_e = losses.shape
    q = np.broadcast_to(np.asarray(q, dtype=np.float64), (T, n_e))
    p = np.asarray(p, dtype=np.float64)
    _check_size(2 * n_e, T)
    per_round = []
    for t in range(T):
        outcomes = []
        for k in range(n_e):
            outcomes.append((q[t, k] * p[t, k], RoundRecord(k, 1, q[t], p[t], int(costs[t, k]))))
            outcomes.append((q[t, k] * (1.0 - p[t, k]), RoundRecord(k, 0, q[t], p[t])))
        per_round.append([o for o in outcomes if o[0] > 0])
    expectation = np.zeros(losses.shape[1])
    for combo in itertools.product(*per_round):
        prob = np.prod([o[0] for o in combo])
        expectation += prob * iw_estimate([o[1] for o in combo], losses)
    return expectation


def exhaustive_iw_expectation_single(label_losses, defer_losses, costs, q, p) -> np.ndarray:
    """Single-stage analogue; ``q`` has ``n_e + 1`` entries, arm 0 = predict."""
    label_losses = np.asarray(label_losses, dtype=np.float64)
    defer_losses = np.asarray(defer_losses, dtype=np.float64)
    costs = np.asarray(costs)
    T, _, n_e = defer_losses.shape
    q = np.broadcast_to(np.asarray(q, dtype=np.float64), (T, n_e + 1))
    p = np.asarray(p, dtype=np.float64)
    _check_size(2 * n_e + 1, T)
    per_round = []
    for t in range(T):
        outcomes = [(q[t, 0], SingleStageRecord(0, 0, q[t], p[t]))]
        for k in range(1, n_e + 1):
            outcomes.append((q[t, k] * p[t, k - 1],
                             SingleStageRecord(k, 1, q[t], p[t], int(costs[t, k - 1]))))
            outcomes.append((q[t, k] * (1.0 - p[t, k - 1]), SingleStageRecord(k, 0, q[t], p[t])))
        per_round.append([o for o in outcomes if o[0] > 0])
    expectation = np.zeros(label_losses.shape[1])
    for combo in itertools.product(*per_round):
        prob = np.prod([o[0] for o in combo])
        expectation += prob * iw_estimate_single([o[1] for o in combo], label_losses, defer_losses)
    return expectation


def expected_surrogate(losses, costs) -> np.ndarray:
    """Closed form ``mean_t sum_k (1 - c_tk) loss_tk`` for each scorer."""
    losses = np.asarray(losses, dtype=np.float64)
    return ((1.0 - np.asarray(costs))[:, None, :] * losses).sum(axis=2).mean(axis=0)


def expected_surrogate_single(label_losses, defer_losses, costs) -> np.ndarray:
    defer = ((1.0 - np.asarray(costs))[:, None, :] * np.asarray(defer_losses)).sum(axis=2)
    return (np.asarray(label_losses) + defer).mean(axis=0)
