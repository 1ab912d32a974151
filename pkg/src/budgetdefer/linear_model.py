"""Linear scorers over decision indices, finite pools of them, and the trainer.

Scores are always clipped to ``[-B, B]`` so that surrogate losses and the
slope-asymmetry constant stay bounded regardless of how large trained
weights get.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from ._seeding import child_rng

POOL_FORMAT = "budgetdefer-pool"
POOL_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class LinearScorer:
    weights: np.ndarray  # (n_decisions, n_features)
    bias: np.ndarray  # (n_decisions,)
    score_bound: float = 1.0

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if b.shape[0] != W.shape[0]:
            raise ValueError("bias length must equal the number of decisions")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("scorer parameters must be finite")
        if not self.score_bound > 0:
            raise ValueError("score_bound must be positive")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)

    @property
    def n_decisions(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def scores(self, X) -> np.ndarray:
        """Clipped scores, shape ``X.shape[:-1] + (n_decisions,)``."""
        raw = np.asarray(X, dtype=np.float64) @ self.weights.T + self.bias
        return np.clip(raw, -self.score_bound, self.score_bound)

    def predict(self, X) -> np.ndarray:
        return argmax_lowest(self.scores(X))


def argmax_lowest(scores) -> np.ndarray:
    """Argmax along the last axis; ``np.argmax`` already returns the first maximum."""
    return np.argmax(scores, axis=-1)


def score(s: LinearScorer, x, k: int) -> float:
    if not 0 <= k < s.n_decisions:
        raise IndexError(f"decision index {k} out of range [0, {s.n_decisions})")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (s.n_features,):
        raise ValueError(f"expected {s.n_features} features, got shape {x.shape}")
    return float(s.scores(x)[k])


def predict(s: LinearScorer, x) -> int:
    return int(s.predict(np.asarray(x, dtype=np.float64)))


class HypothesisPool:
    """A finite, immutable collection of scorers sharing shape and bound.

    Parameters are also kept stacked (``W`` of shape ``(R, D, F)``) so whole
    pools can be scored at once.
    """

    def __init__(self, scorers: Sequence[LinearScorer]):
        scorers = tuple(scorers)
        if not scorers:
            raise ValueError("a hypothesis pool cannot be empty")
        first = scorers[0]
        for s in scorers[1:]:
            if (s.n_decisions, s.n_features, s.score_bound) != (
                    first.n_decisions, first.n_features, first.score_bound):
                raise ValueError("pool members must share shape and score bound")
        self.scorers = scorers
        self.W = np.stack([s.weights for s in scorers])
        self.b = np.stack([s.bias for s in scorers])
        self.W.setflags(write=False)
        self.b.setflags(write=False)

    def __len__(self):
        return len(self.scorers)

    def __getitem__(self, i) -> LinearScorer:
        return self.scorers[i]

    def __iter__(self):
        return iter(self.scorers)

    @property
    def n_decisions(self) -> int:
        return self.scorers[0].n_decisions

    @property
    def n_features(self) -> int:
        return self.scorers[0].n_features

    @property
    def score_bound(self) -> float:
        return self.scorers[0].score_bound

    def scores(self, X) -> np.ndarray:
        """Clipped scores of every member, shape ``(n_examples, R, D)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        raw = np.einsum("nf,rdf->nrd", X, self.W) + self.b[None]
        return np.clip(raw, -self.score_bound, self.score_bound)

    def predict(self, X) -> np.ndarray:
        """Decisions of every member, shape ``(n_examples, R)``."""
        return argmax_lowest(self.scores(X))


def _one_hot(targets, n):
    out = np.zeros((targets.shape[0], n))
    out[np.arange(targets.shape[0]), targets] = 1.0
    return out


def logistic_objective(W, b, X, Y, l2) -> float:
    logp = log_softmax(X @ W.T + b, axis=1)
    return float(-(Y * logp).sum(axis=1).mean() + l2 * (W ** 2).sum())


def train_multinomial_logistic(X, targets, n_decisions: int, l2: float = 2.0 ** -13,
                               epochs: int = 500, step: float = 0.1, seed: int = 0,
                               score_bound: float = 1.0, return_history: bool = False):
    """Fit a multinomial logistic model by full-batch proximal gradient descent.

    Minimizes ``mean cross-entropy + l2 * ||W||^2`` (bias unpenalized). The
    penalty is applied as an exact proximal shrink, so the iteration is stable
    for any ``l2``; with ``step <= 1`` and features of norm at most 1 the
    objective is non-increasing.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if targets.shape != (X.shape[0],):
        raise ValueError("one target per example required")
    if targets.min() < 0 or targets.max() >= n_decisions:
        raise ValueError("targets out of range")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")

    rng = np.random.default_rng(seed)
    W = 0.01 * rng.standard_normal((n_decisions, X.shape[1]))
    b = np.zeros(n_decisions)
    Y = _one_hot(targets, n_decisions)
    n = X.shape[0]
    shrink = 1.0 / (1.0 + 2.0 * step * l2)
    history = [logistic_objective(W, b, X, Y, l2)] if return_history else None
    for _ in range(epochs):
        G = (softmax(X @ W.T + b, axis=1) - Y) / n
        W = (W - step * (G.T @ X)) * shrink
        b = b - step * G.sum(axis=0)
        if return_history:
            history.append(logistic_objective(W, b, X, Y, l2))
    scorer = LinearScorer(W, b, score_bound)
    return (scorer, history) if return_history else scorer


def first_zero_cost(costs) -> np.ndarray:
    """Lowest-index expert with zero cost on each row (the ``best_expert`` target)."""
    costs = np.asarray(costs)
    zero = costs == 0
    if not np.all(zero.any(axis=1)):
        raise ValueError("every example needs a zero-cost expert for target_rule='best_expert'")
    return np.argmax(zero, axis=1)


def draw_subsample_size(rng, low=30, high=500, n_available=None) -> int:
    """Uniform integer in ``[low, high]``, capped at ``n_available``."""
    if not 1 <= low <= high:
        raise ValueError(f"invalid subsample range ({low}, {high})")
    m = int(rng.integers(low, high + 1))
    return m if n_available is None else min(m, n_available)


def build_hypothesis_pool(X, pool_size: int, n_decisions: int, *, costs=None,
                          target_rule: str = "best_expert", l2: float = 2.0 ** -13,
                          seed: int = 0, subsample_range=(30, 500), sigma: float = 1.0,
                          score_bound: float = 1.0, epochs: int = 500,
                          step: float = 0.1) -> HypothesisPool:
    """Build a finite pool of linear scorers.

    ``target_rule="best_expert"`` trains each member on its own uniform
    subsample (size drawn from ``subsample_range``, capped at the data size)
    with the lowest-index zero-cost expert as target; ``costs`` is the full
    ``(n_examples, n_decisions)`` cost matrix. ``"random_gaussian"`` draws
    weights and biases i.i.d. ``N(0, sigma^2)`` without training.

    Member ``i`` depends only on ``(seed, i)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if pool_size < 2:
        raise ValueError("pool_size must be at least 2")
    low, high = subsample_range
    if not 1 <= low <= high:
        raise ValueError(f"invalid subsample range {tuple(subsample_range)}")

    scorers = []
    if target_rule == "best_expert":
        if costs is None:
            raise ValueError("target_rule='best_expert' needs the cost matrix")
        costs = np.asarray(costs)
        if costs.shape != (X.shape[0], n_decisions):
            raise ValueError(f"costs must have shape {(X.shape[0], n_decisions)}")
        targets = first_zero_cost(costs)
        for i in range(pool_size):
            rng = child_rng(seed, i)
            m = draw_subsample_size(rng, low, high, X.shape[0])
            idx = rng.choice(X.shape[0], size=m, replace=False)
            scorers.append(train_multinomial_logistic(
                X[idx], targets[idx], n_decisions, l2=l2, epochs=epochs, step=step,
                seed=int(rng.integers(2 ** 32)), score_bound=score_bound))
    elif target_rule == "random_gaussian":
        for i in range(pool_size):
            rng = child_rng(seed, i)
            W = sigma * rng.standard_normal((n_decisions, X.shape[1]))
            b = sigma * rng.standard_normal(n_decisions)
            scorers.append(LinearScorer(W, b, score_bound))
    else:
        raise ValueError(f"unknown target_rule {target_rule!r}")
    return HypothesisPool(scorers)


def save_pool(pool: HypothesisPool, path) -> None:
    lines = [f"{POOL_FORMAT} {POOL_FORMAT_VERSION}",
             f"scorers {len(pool)} decisions {pool.n_decisions} "
             f"features {pool.n_features} bound {float(pool.score_bound)!r}"]
    for i, s in enumerate(pool):
        lines.append(f"scorer {i}")
        lines.append("w " + " ".join(repr(float(v)) for v in s.weights.ravel()))
        lines.append("b " + " ".join(repr(float(v)) for v in s.bias))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_pool(path) -> HypothesisPool:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split()
    if len(head) != 2 or head[0] != POOL_FORMAT:
        raise ValueError(f"{path}: not a pool file")
    if int(head[1]) != POOL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported pool format version {head[1]}")
    meta = lines[1].split()
    R, D, F = int(meta[1]), int(meta[3]), int(meta[5])
    B = float(meta[7])
    scorers = []
    for i in range(R):
        w_line = lines[3 + 3 * i].split()
        b_line = lines[4 + 3 * i].split()
        if w_line[0] != "w" or b_line[0] != "b":
            raise ValueError(f"{path}: malformed record for scorer {i}")
        W = np.array([float(v) for v in w_line[1:]]).reshape(D, F)
        b = np.array([float(v) for v in b_line[1:]])
        scorers.append(LinearScorer(W, b, B))
    return HypothesisPool(scorers)
