"""Two-stage deferral under a cost-query budget.

Each round the learner prunes its version space of routers, turns the
spread of per-expert losses across the surviving routers into query
probabilities, samples one expert, and pays for that expert's cost only
when a Bernoulli draw succeeds. Queried costs are stored with importance
weight ``1 / (q_k p_k)``, which keeps the empirical surrogate unbiased.

The engines precompute the normalized loss tensor ``(T, R, n_e)`` of every
pool member on the training stream; the importance-weighted error of each
member is kept as a running sum, which gives exactly the values a
recomputation from history would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .losses import LossConfig, loss_matrix, two_stage_deferral_losses

THRESHOLD_MODES = ("azuma", "freedman")


# ---------------------------------------------------------------------------
# policies, thresholds, version spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingPolicy:
    """Probabilities of picking each arm (expert, or expert/no-deferral)."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).reshape(-1)
        if q.size == 0 or np.any(q < 0) or not np.isclose(q.sum(), 1.0, atol=1e-12):
            raise ValueError(f"q must be a probability vector, got {q}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def uniform(cls, n_arms: int) -> "SamplingPolicy":
        return cls(np.full(n_arms, 1.0 / n_arms))

    @property
    def n_arms(self) -> int:
        return self.q.size

    @property
    def q_min(self) -> float:
        return float(self.q.min())

    @property
    def q_bar(self) -> float:
        # degenerate policies (some q_k = 0) make every threshold vacuous
        return 1.0 / self.q_min + 1.0 if self.q_min > 0 else math.inf


def sample_expert(policy: SamplingPolicy, rng) -> int:
    """Categorical draw from ``policy.q`` (one uniform per call)."""
    return _categorical(policy, rng.random())


def _categorical(policy, u):
    k = int(np.searchsorted(np.cumsum(policy.q), u, side="right"))
    k = min(k, policy.n_arms - 1)
    while policy.q[k] == 0.0:  # rounding at the top of the cumsum
        k -= 1
    return k


def azuma_threshold(t: int, pool_size: int, delta: float, q_bar: float) -> float:
    """``sqrt(q_bar^2 * 8/t * log(2 t (t+1) |R|^2 / delta))``."""
    if t < 1:
        raise ValueError("t must be at least 1")
    return math.sqrt(q_bar ** 2 * 8.0 / t * math.log(2.0 * t * (t + 1) * pool_size ** 2 / delta))


def freedman_threshold(t: int, pool_size: int, delta: float, q_min: float, n_experts: int,
                       sum_p: float) -> float:
    """Variance-adaptive threshold driven by the total query probability ``sum_p``.

    Only defined for ``t >= 3`` (it contains ``log log t``-type terms).
    """
    if t < 3:
        raise ValueError("the Freedman threshold is defined for t >= 3")
    if sum_p < 0:
        raise ValueError("sum_p must be non-negative")
    if q_min <= 0:
        return math.inf
    additive = 6.0 * math.sqrt(math.log((3.0 + n_experts * t) * t ** 2 / delta))
    union = math.sqrt(math.log(8.0 * t ** 2 * pool_size ** 2 * math.log(t) / delta))
    return 2.0 / (t * q_min) * (math.sqrt(sum_p) + additive) * union


@dataclass(frozen=True)
class ThresholdConfig:
    mode: str = "azuma"
    delta: float = 0.1
    pool_size: int = 1

    def __post_init__(self):
        if self.mode not in THRESHOLD_MODES:
            raise ValueError(f"unknown threshold mode {self.mode!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")

    def value(self, t: int, policy: SamplingPolicy, n_experts: int, sum_p: float = 0.0) -> float:
        if self.mode == "freedman" and t >= 3:
            return freedman_threshold(t, self.pool_size, self.delta, policy.q_min,
                                      n_experts, sum_p)
        return azuma_threshold(t, self.pool_size, self.delta, policy.q_bar)


@dataclass(frozen=True)
class VersionSpace:
    active: np.ndarray
    round: int = 0

    def __post_init__(self):
        active = np.asarray(self.active, dtype=bool).copy()
        if not active.any():
            raise ValueError("a version space cannot be empty")
        active.setflags(write=False)
        object.__setattr__(self, "active", active)

    @classmethod
    def full(cls, pool_size: int) -> "VersionSpace":
        return cls(np.ones(pool_size, dtype=bool))

    @property
    def size(self) -> int:
        return int(self.active.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.active)


def prune_version_space(vs: VersionSpace, errors, delta_t: float) -> VersionSpace:
    """Keep active members whose error is within ``delta_t`` of the active minimum.

    ``errors`` holds either one value per active member (in index order) or
    one value per pool member (entries of inactive members are ignored).
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.shape[0] == vs.size:
        full = np.full(vs.active.shape[0], np.inf)
        full[vs.active] = errors
        errors = full
    elif errors.shape[0] != vs.active.shape[0]:
        raise ValueError("errors must cover the active set or the whole pool")
    best = errors[vs.active].min()
    keep = vs.active & (errors <= best + delta_t)
    return VersionSpace(keep, vs.round + 1)


def sampling_probs(active, losses_at_x) -> np.ndarray:
    """Max-minus-min of each per-expert loss over the active members.

    ``losses_at_x`` has shape ``(R, n_e)``; the result has shape ``(n_e,)``.
    """
    sub = losses_at_x[active]
    return sub.max(axis=0) - sub.min(axis=0)


def sampling_prob(vs: VersionSpace, pool, cfg: LossConfig, x, k: int) -> float:
    """Query probability for expert ``k`` at ``x`` given version space ``vs``."""
    ell = loss_matrix(cfg, pool.scores(np.asarray(x, dtype=np.float64)[None])[0])
    return float(sampling_probs(vs.active, ell)[k])


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoundDecision:
    k: int
    p: float
    Q: int

    def __post_init__(self):
        if self.Q and not self.p > 0:
            raise ValueError("a query requires positive probability")


@dataclass(frozen=True)
class RoundRecord:
    """One round of history as seen by the importance-weighted estimator.

    ``c`` is the queried cost of arm ``k`` (ignored when ``Q == 0``); ``q``
    and ``p`` are the full per-arm vectors used that round.
    """

    k: int
    Q: int
    q: np.ndarray
    p: np.ndarray
    c: int = 0


@dataclass(frozen=True)
class WeightedSample:
    index: int  # position in the training stream
    x: np.ndarray
    y: int
    k: int
    c: int
    w: float


@dataclass
class RoundLog:
    t: int
    cumulative_queries: int
    available_queries: int
    versionspace_size: int
    delta_t: float
    p_selected: float
    test_system_accuracy: float
    arm0_count: int | None = None
    expert_queries: tuple | None = None


@dataclass
class RunTrace:
    """Per-round arrays (length ``T``) recorded by the engines."""

    k: np.ndarray
    Q: np.ndarray
    p_selected: np.ndarray
    p: np.ndarray  # (T, n_e)
    delta: np.ndarray
    vs_size: np.ndarray
    chosen: np.ndarray
    masks: np.ndarray | None = None  # (T, R) when requested


@dataclass
class RunResult:
    scorer_index: int
    scorer: object
    logs: list
    trace: RunTrace
    samples: list = field(default_factory=list)
    version_space: VersionSpace | None = None
    queries: int = 0


# ---------------------------------------------------------------------------
# estimator and ERM
# ---------------------------------------------------------------------------

def iw_estimate(history: Sequence[RoundRecord], losses) -> np.ndarray | float:
    """Importance-weighted empirical surrogate after ``T = len(history)`` rounds.

    ``losses[t, ..., k]`` is the normalized loss of the scorer(s) on round
    ``t``'s input for expert ``k``; leading scorer axes broadcast.
    """
    losses = np.asarray(losses, dtype=np.float64)
    T = len(history)
    if T == 0:
        raise ValueError("empty history")
    total = np.zeros(losses.shape[1:-1])
    for t, rec in enumerate(history):
        if rec.Q:
            p = rec.p[rec.k]
            if not p > 0:
                raise ValueError(f"round {t}: queried with p = 0")
            total = total + (1.0 - rec.c) / (rec.q[rec.k] * p) * losses[t, ..., rec.k]
    total = total / T
    return float(total) if np.ndim(total) == 0 else total


def weighted_erm(samples: Sequence[WeightedSample], pool, cfg: LossConfig, active=None) -> int:
    """Member minimizing ``sum_s w_s (1 - c_s) loss(r, x_s, k_s)`` (lowest index on ties)."""
    objective = np.zeros(len(pool))
    if samples:
        X = np.stack([s.x for s in samples])
        k = np.array([s.k for s in samples])
        coef = np.array([s.w * (1.0 - s.c) for s in samples])
        ell = loss_matrix(cfg, pool.scores(X))  # (S, R, n_e)
        objective = (coef[:, None] * ell[np.arange(len(samples)), :, k]).sum(axis=0)
    return _masked_argmin(objective, active)


def _masked_argmin(values, active=None) -> int:
    if active is None:
        return int(np.argmin(values))
    return int(np.argmin(np.where(active, values, np.inf)))


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------

def _log_rounds(T, log_every):
    every = log_every or max(1, T // 200)
    rounds = set(range(every, T + 1, every))
    rounds.add(T)
    return rounds


def _check_stream(X, y, T, pool):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if T < 1:
        raise ValueError("T must be at least 1")
    if T > X.shape[0]:
        raise ValueError(f"stream exhausted: T={T} but only {X.shape[0]} examples")
    if X.shape[1] != pool.n_features:
        raise ValueError("feature dimension does not match the pool")
    return X[:T], np.asarray(y)[:T]


def run_budgeted_two_stage(X, y, test, pool, panel, policy: SamplingPolicy | None = None,
                           threshold: ThresholdConfig | None = None, T: int | None = None,
                           seed: int = 0, log_every: int | None = None,
                           erm_over_full_pool: bool = False, record_masks: bool = False,
                           stream_index=None) -> RunResult:
    """Run the budgeted two-stage learner on the first ``T`` stream examples.

    Parameters
    ----------
    X, y : training stream, consumed in order.
    test : ``(X_test, y_test, test_costs)`` used for the logged accuracy curve.
    pool : HypothesisPool over ``n_e`` decisions.
    panel : ExpertPanel; costs are bought through ``panel.query_cost`` only.
    stream_index : example identities passed to the panel (default ``0..T-1``).
    """
    n_e = panel.n_experts
    if pool.n_decisions != n_e:
        raise ValueError("two-stage pools score one decision per expert")
    T = X.shape[0] if T is None else T
    X, y = _check_stream(X, y, T, pool)
    policy = policy or SamplingPolicy.uniform(n_e)
    if policy.n_arms != n_e:
        raise ValueError("policy must have one probability per expert")
    threshold = threshold or ThresholdConfig(pool_size=len(pool))
    if threshold.pool_size != len(pool):
        threshold = ThresholdConfig(threshold.mode, threshold.delta, len(pool))
    stream_index = np.arange(T) if stream_index is None else np.asarray(stream_index)
    cfg = LossConfig.two_stage(n_e, pool.score_bound)

    L = loss_matrix(cfg, pool.scores(X))  # (T, R, n_e)
    X_test, y_test, test_costs = test
    test_acc = 1.0 - two_stage_deferral_losses(pool.predict(X_test), test_costs).mean(axis=0)

    rng = np.random.default_rng(seed)
    R = len(pool)
    active = np.ones(R, dtype=bool)
    sums = np.zeros(R)
    sum_p = 0.0
    queries = 0
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
        p = sampling_probs(active, L[i])
        sum_p += float(p.sum())

        k = _categorical(policy, rng.random())
        u = rng.random()
        Q = int(u < p[k])
        if Q:
            c = panel.query_cost(k, int(y[i]), int(stream_index[i]))
            queries += 1
            w = 1.0 / (policy.q[k] * p[k])
            sums += w * (1.0 - c) * L[i, :, k]
            samples.append(WeightedSample(i, X[i], int(y[i]), k, c, w))

        chosen = _masked_argmin(sums, None if erm_over_full_pool else active)
        delta_prev = threshold.value(t, policy, n_e, sum_p)

        trace.k[i], trace.Q[i], trace.p_selected[i] = k, Q, p[k]
        trace.p[i] = p
        trace.delta[i] = delta_prev
        trace.vs_size[i] = active.sum()
        trace.chosen[i] = chosen
        if record_masks:
            trace.masks[i] = active
        if t in logged:
            logs.append(RoundLog(t, queries, n_e * t, int(active.sum()), delta_prev,
                                 float(p[k]), float(test_acc[chosen])))

    return RunResult(chosen, pool[chosen], logs, trace, samples,
                     VersionSpace(active, T), queries)


def run_baseline_two_stage(X, y, test, pool, panel, T: int | None = None, seed: int = 0,
                           log_every: int | None = None, stream_index=None) -> RunResult:
    """Full-information baseline: buy all ``n_e`` costs every round.

    The router at round ``t`` minimizes the unweighted empirical surrogate
    over the whole pool. ``seed`` is accepted for symmetry; the baseline
    has no internal randomness.
    """
    n_e = panel.n_experts
    if pool.n_decisions != n_e:
        raise ValueError("two-stage pools score one decision per expert")
    T = X.shape[0] if T is None else T
    X, y = _check_stream(X, y, T, pool)
    stream_index = np.arange(T) if stream_index is None else np.asarray(stream_index)
    cfg = LossConfig.two_stage(n_e, pool.score_bound)
    L = loss_matrix(cfg, pool.scores(X))
    X_test, y_test, test_costs = test
    test_acc = 1.0 - two_stage_deferral_losses(pool.predict(X_test), test_costs).mean(axis=0)

    R = len(pool)
    sums = np.zeros(R)
    queries = 0
    logged = _log_rounds(T, log_every)
    trace = RunTrace(k=np.full(T, -1), Q=np.ones(T, np.int64), p_selected=np.ones(T),
                     p=np.ones((T, n_e)), delta=np.zeros(T), vs_size=np.full(T, R),
                     chosen=np.zeros(T, np.int64))
    logs = []
    chosen = 0
    for t in range(1, T + 1):
        i = t - 1
        c = panel.cost_vector(int(y[i]), int(stream_index[i]))
        queries += n_e
        sums += ((1.0 - c)[None, :] * L[i]).sum(axis=1)
        chosen = int(np.argmin(sums))
        trace.chosen[i] = chosen
        if t in logged:
            logs.append(RoundLog(t, queries, n_e * t, R, 0.0, 1.0, float(test_acc[chosen])))
    return RunResult(chosen, pool[chosen], logs, trace, [], VersionSpace.full(R), queries)
