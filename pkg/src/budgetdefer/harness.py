"""Experiment orchestration: configs, seeded trials, aggregation and CSV curves."""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import child_seed
from .data import Dataset, load_dataset, prepare_split
from .experts import TEST, TRAIN, ExpertPanel
from .linear_model import build_hypothesis_pool, load_pool
from .single_stage import run_budgeted_single_stage
from .two_stage import (
    SamplingPolicy,
    ThresholdConfig,
    run_baseline_two_stage,
    run_budgeted_two_stage,
)

ALGORITHMS = ("two_stage_budgeted", "two_stage_baseline", "single_stage_budgeted")
CSV_HEADER = ("t", "available", "queried", "acc_mean", "acc_stderr", "vs_size", "delta")
OUTPUT_DIR_ENV = "BUDGETDEFER_OUTPUT_DIR"


def make_synthetic(n_classes: int = 3, n_features: int = 5, n_examples: int = 6000,
                   margin: float = 10.0, seed: int = 0) -> Dataset:
    """Gaussian clusters with pairwise center distance ``margin``.

    Points are drawn around a uniformly chosen center with unit covariance
    and labeled by the center that generated them. For a large margin this
    coincides with the nearest center almost surely (realizable); a small
    margin makes the clusters overlap (agnostic).
    """
    if n_classes < 2 or n_features < 1 or n_examples < n_classes:
        raise ValueError("need n_classes >= 2, n_features >= 1, n_examples >= n_classes")
    if not margin > 0:
        raise ValueError("margin must be positive")
    rng = np.random.default_rng(seed)
    if n_classes <= n_features:
        basis, _ = np.linalg.qr(rng.standard_normal((n_features, n_classes)))
        centers = basis.T * (margin / math.sqrt(2.0))
    else:
        # more classes than dimensions: random directions, smallest gap rescaled to margin
        centers = rng.standard_normal((n_classes, n_features))
        gaps = np.linalg.norm(centers[:, None] - centers[None], axis=2)
        centers *= margin / gaps[np.triu_indices(n_classes, 1)].min()
    source = rng.integers(n_classes, size=n_examples)
    X = centers[source] + rng.standard_normal((n_examples, n_features))
    return Dataset(X, source.astype(np.int64), n_classes, name=f"synthetic-{n_classes}c-m{margin:g}")


@dataclass
class RunConfig:
    algorithm: str = "two_stage_budgeted"
    dataset: str | None = None
    max_rows: int | None = None
    n_classes: int = 3
    n_features: int = 5
    n_examples: int = 6000
    margin: float = 10.0
    test_fraction: float = 0.3
    T: int = 2000
    delta: float = 0.1
    threshold_mode: str = "azuma"
    q_policy: str = "uniform"
    pool_size: int = 64
    pool_file: str | None = None
    target_rule: str | None = None  # default depends on the algorithm
    l2: float = 2.0 ** -13
    score_bound: float = 1.0
    pool_sigma: float = 1.0
    epochs: int = 500
    step: float = 0.1
    erm_over_full_pool: bool = False
    trials: int = 5
    seed: int = 0
    log_every: int | None = None
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        ThresholdConfig(self.threshold_mode, self.delta)

    @property
    def single_stage(self) -> bool:
        return self.algorithm == "single_stage_budgeted"

    def resolved_target_rule(self) -> str:
        if self.target_rule:
            return self.target_rule
        return "random_gaussian" if self.single_stage else "best_expert"

    def policy(self, n_arms: int) -> SamplingPolicy:
        if self.q_policy == "uniform":
            return SamplingPolicy.uniform(n_arms)
        q = [float(v) for v in self.q_policy.split(",")]
        if len(q) != n_arms:
            raise ValueError(f"q_policy needs {n_arms} entries, got {len(q)}")
        return SamplingPolicy(np.array(q))

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(raw, kinds[key])
        return cls(**kwargs)


def _coerce(raw, kind: str):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if "None" in kind and text.lower() in ("", "none", "null"):
        return None
    if kind.startswith("bool"):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{n}: expected key = value")
        values[key.strip()] = value.strip()
    return values


@dataclass
class CurvePoint:
    t: int
    available: int
    queried: float
    acc_mean: float
    acc_stderr: float
    vs_size: float
    delta: float


@dataclass
class TrialResult:
    index: int
    seed: int
    result: object  # RunResult
    n_experts: int
    budgeted_queries: int
    pool_size: int


@dataclass
class ExperimentResult:
    config: RunConfig
    points: list
    trials: list = field(default_factory=list)


def load_experiment_dataset(cfg: RunConfig) -> Dataset:
    if cfg.dataset:
        return load_dataset(cfg.dataset, max_rows=cfg.max_rows, seed=cfg.seed)
    return make_synthetic(cfg.n_classes, cfg.n_features, cfg.n_examples, cfg.margin,
                          child_seed(cfg.seed, 1_000_003))


def run_trial(cfg: RunConfig, index: int, ds: Dataset | None = None) -> TrialResult:
    """One seeded trial: fresh split, experts, pool and engine run."""
    ds = ds if ds is not None else load_experiment_dataset(cfg)
    seed = child_seed(cfg.seed, index)
    try:
        train, test = prepare_split(ds, cfg.test_fraction, child_seed(seed, 1))
        panel = ExpertPanel.class_oracles(ds.n_classes, child_seed(seed, 2))
        n_e = panel.n_experts
        train_costs = panel.cost_matrix(train.y, TRAIN)
        test_costs = panel.cost_matrix(test.y, TEST)
        panel.unbudgeted_queries = 0  # pool construction and evaluation are not the run's spend
        n_decisions = ds.n_classes + n_e if cfg.single_stage else n_e
        if cfg.pool_file:
            pool = load_pool(cfg.pool_file)
            if pool.n_decisions != n_decisions or pool.n_features != train.n_features:
                raise ValueError(f"pool file {cfg.pool_file} does not match the task")
        else:
            pool = build_hypothesis_pool(
                train.X, cfg.pool_size, n_decisions, costs=train_costs,
                target_rule=cfg.resolved_target_rule(), l2=cfg.l2, seed=child_seed(seed, 3),
                sigma=cfg.pool_sigma, score_bound=cfg.score_bound, epochs=cfg.epochs,
                step=cfg.step)
        test_triple = (test.X, test.y, test_costs)
        threshold = ThresholdConfig(cfg.threshold_mode, cfg.delta, len(pool))
        run_seed = child_seed(seed, 4)
        if cfg.algorithm == "two_stage_budgeted":
            result = run_budgeted_two_stage(
                train.X, train.y, test_triple, pool, panel, cfg.policy(n_e), threshold, cfg.T,
                run_seed, cfg.log_every, cfg.erm_over_full_pool)
        elif cfg.algorithm == "two_stage_baseline":
            result = run_baseline_two_stage(train.X, train.y, test_triple, pool, panel, cfg.T,
                                            run_seed, cfg.log_every)
        else:
            result = run_budgeted_single_stage(
                train.X, train.y, test_triple, pool, panel, ds.n_classes, cfg.policy(n_e + 1),
                threshold, cfg.T, run_seed, cfg.log_every, cfg.erm_over_full_pool)
    except Exception as exc:
        raise RuntimeError(f"trial {index}: {exc}") from exc
    return TrialResult(index, seed, result, n_e, panel.budgeted_queries, len(pool))


def aggregate(trials) -> list:
    """Fold per-trial logs into curve points, in trial-index order."""
    trials = sorted(trials, key=lambda tr: tr.index)
    first = trials[0].result.logs
    points = []
    for j, log in enumerate(first):
        rows = [tr.result.logs[j] for tr in trials]
        if any(r.t != log.t for r in rows):
            raise ValueError("trials logged different rounds")
        acc = np.array([r.test_system_accuracy for r in rows])
        stderr = float(acc.std(ddof=1) / math.sqrt(len(acc))) if len(acc) > 1 else 0.0
        points.append(CurvePoint(
            t=log.t, available=log.available_queries,
            queried=float(np.mean([r.cumulative_queries for r in rows])),
            acc_mean=float(acc.mean()), acc_stderr=stderr,
            vs_size=float(np.mean([r.versionspace_size for r in rows])),
            delta=float(np.mean([r.delta_t for r in rows]))))
    return points


def _trial_job(args):
    cfg, index = args
    return run_trial(cfg, index)


def run_trials(cfg: RunConfig) -> ExperimentResult:
    cfg.validate()
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            trials = list(ex.map(_trial_job, [(cfg, i) for i in range(cfg.trials)]))
    else:
        ds = load_experiment_dataset(cfg)
        trials = [run_trial(cfg, i, ds) for i in range(cfg.trials)]
    return ExperimentResult(cfg, aggregate(trials), trials)


def run_experiment(cfg: RunConfig) -> list:
    """Run ``cfg.trials`` seeded trials and return the aggregated curve."""
    return run_trials(cfg).points


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def emit_csv(points, path) -> Path:
    if not points:
        raise ValueError("no curve points to write")
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for p in points:
            writer.writerow([_fmt(getattr(p, name)) for name in CSV_HEADER])
    return path


def read_csv(path) -> list:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [CurvePoint(int(row["t"]), int(row["available"]), float(row["queried"]),
                           float(row["acc_mean"]), float(row["acc_stderr"]),
                           float(row["vs_size"]), float(row["delta"])) for row in reader]


def default_output_path(cfg: RunConfig) -> Path:
    if cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / f"{cfg.algorithm}.csv"
