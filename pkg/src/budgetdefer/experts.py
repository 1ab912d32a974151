"""Per-class oracle experts and the 0-1 cost oracle.

Expert ``k`` is always right on class ``k`` and answers uniformly over all
``n`` labels elsewhere (so it can be right by chance). The random answer is
a pure function of ``(seed, expert, split, example index)``, memoized by
:class:`ExpertPanel`, which is also the only object that counts queries.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from ._seeding import hash_uniform, stream_key

TRAIN = 0
TEST = 1


@dataclass(frozen=True)
class Expert:
    id: int
    specialty: int
    n_classes: int
    seed: int
    _keys: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def _key(self, split):
        key = self._keys.get(split)
        if key is None:
            key = stream_key(self.seed, self.id, split)
            self._keys[split] = key
        return key

    def predict_many(self, y, index, split=TRAIN) -> np.ndarray:
        y = np.asarray(y, dtype=np.int64)
        guess = np.floor(hash_uniform(self._key(split), index) * self.n_classes).astype(np.int64)
        return np.where(y == self.specialty, y, guess)


def make_class_oracle_experts(n_classes: int, seed: int) -> list[Expert]:
    if n_classes < 2:
        raise ValueError("need at least two classes")
    return [Expert(k, k, n_classes, int(seed)) for k in range(n_classes)]


def expert_predict(e: Expert, x, y: int, index: int, split: int = TRAIN) -> int:
    """Prediction of ``e`` on the example at position ``index`` of ``split``.

    ``x`` is accepted for interface symmetry; the oracle only looks at the label.
    """
    if not 0 <= y < e.n_classes:
        raise IndexError(f"label {y} out of range")
    return int(e.predict_many(y, index, split))


def cost_01(e: Expert, x, y: int, index: int, split: int = TRAIN) -> int:
    return int(expert_predict(e, x, y, index, split) != y)


def cost_vector(experts, x, y: int, index: int, split: int = TRAIN) -> np.ndarray:
    if not experts:
        raise ValueError("no experts")
    return np.array([cost_01(e, x, y, index, split) for e in experts], dtype=np.int64)


class ExpertPanel:
    """Memoizing cost oracle with query accounting.

    ``query_cost`` is the budgeted path used by the online engines and bumps
    ``budgeted_queries``; ``cost_matrix``/``cost_vector`` serve the baseline,
    pool construction and test-time evaluation and are counted separately.
    """

    def __init__(self, experts):
        self.experts = list(experts)
        if not self.experts:
            raise ValueError("no experts")
        self.budgeted_queries = 0
        self.unbudgeted_queries = 0
        self._memo = {}
        self._lock = threading.Lock()

    @classmethod
    def class_oracles(cls, n_classes, seed):
        return cls(make_class_oracle_experts(n_classes, seed))

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    def _prediction(self, k, y, index, split):
        key = (k, split, int(index))
        with self._lock:
            pred = self._memo.get(key)
            if pred is None:
                pred = int(self.experts[k].predict_many(y, index, split))
                self._memo[key] = pred
        return pred

    def query_cost(self, k: int, y: int, index: int, split: int = TRAIN) -> int:
        with self._lock:
            self.budgeted_queries += 1
        return int(self._prediction(k, y, index, split) != y)

    def cost_vector(self, y: int, index: int, split: int = TRAIN) -> np.ndarray:
        with self._lock:
            self.unbudgeted_queries += self.n_experts
        return np.array([int(self._prediction(k, y, index, split) != y)
                         for k in range(self.n_experts)], dtype=np.int64)

    def cost_matrix(self, y, split: int = TRAIN, index=None) -> np.ndarray:
        """Full ``(N, n_e)`` costs for labels ``y`` at positions ``index`` (default ``0..N-1``).

        Vectorized; agrees with the memoized per-query answers because both
        are the same pure function of the example identity.
        """
        y = np.asarray(y, dtype=np.int64)
        index = np.arange(y.shape[0]) if index is None else np.asarray(index)
        preds = np.stack([e.predict_many(y, index, split) for e in self.experts], axis=1)
        with self._lock:
            self.unbudgeted_queries += preds.size
        return (preds != y[:, None]).astype(np.int64)
