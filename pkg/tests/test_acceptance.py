"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the summary lines are
repeated at the end of the session).
"""

import math
import time

import numpy as np

from budgetdefer.data import (
    Dataset,
    fit_standardizer,
    format_sparse_line,
    load_dataset,
    parse_sparse_line,
    prepare_split,
    standardize_features,
)
from budgetdefer.diagnostics import (
    estimate_slope_asymmetry,
    exhaustive_iw_expectation,
    exhaustive_iw_expectation_single,
    expected_surrogate,
    expected_surrogate_single,
    slope_asymmetry_bound,
)
from budgetdefer.experts import TEST, TRAIN, ExpertPanel
from budgetdefer.harness import RunConfig, emit_csv, make_synthetic, run_experiment, run_trials
from budgetdefer.linear_model import HypothesisPool, build_hypothesis_pool, train_multinomial_logistic
from budgetdefer.losses import LossConfig, loss_matrix
from budgetdefer.two_stage import (
    SamplingPolicy,
    ThresholdConfig,
    azuma_threshold,
    freedman_threshold,
    run_baseline_two_stage,
    run_budgeted_two_stage,
)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def verdict(report, number, name, ok, detail, seconds, limit):
    ok = bool(ok) and seconds < limit
    report(f"[{number}] {'PASS' if ok else 'FAIL'} {name}: {detail} "
           f"({seconds:.1f}s, limit {limit:g}s)")
    return ok


# --- 1 ---------------------------------------------------------------------

def test_unbiasedness(report):
    rng = np.random.default_rng(20240601)
    worst = 0.0
    n_instances = 0
    with Timer() as tm:
        for T in (1, 2, 3):
            for n_e in (1, 2, 3):
                for M in (1, 2, 3):
                    for _ in range(4):
                        losses = rng.uniform(0, 1 / n_e, (T, M, n_e))
                        costs = rng.integers(0, 2, (T, n_e))
                        q = rng.dirichlet(np.ones(n_e))
                        p = rng.uniform(0.01, 1, (T, n_e))
                        gap = np.abs(exhaustive_iw_expectation(losses, costs, q, p)
                                     - expected_surrogate(losses, costs)).max()
                        label = rng.uniform(0, 1 / (n_e + 1), (T, M))
                        defer = rng.uniform(0, 1 / (n_e + 1), (T, M, n_e))
                        q1 = rng.dirichlet(np.ones(n_e + 1))
                        gap1 = np.abs(exhaustive_iw_expectation_single(label, defer, costs, q1, p)
                                      - expected_surrogate_single(label, defer, costs)).max()
                        worst = max(worst, gap, gap1)
                        n_instances += 2
    ok = verdict(report, 1, "unbiasedness", worst <= 1e-12,
                 f"max |oracle - closed form| = {worst:.2e} over {n_instances} instances",
                 tm.seconds, 10)
    assert ok


# --- 2 ---------------------------------------------------------------------

def azuma_second(t, R, delta, q_bar):
    return q_bar * math.sqrt(8.0 / t) * math.sqrt(
        math.log(2) + math.log(t) + math.log1p(t) + 2 * math.log(R) + math.log(1 / delta))


def freedman_second(t, R, delta, q_min, n_e, sum_p):
    inner = math.log(3 + n_e * t) + 2 * math.log(t) + math.log(1 / delta)
    outer = 3 * math.log(2) + 2 * math.log(t * R) + math.log(math.log(t)) + math.log(1 / delta)
    return 2.0 * (math.sqrt(sum_p) + 6.0 * math.sqrt(inner)) * math.sqrt(outer) / (t * q_min)


def test_threshold_formulas(report):
    rng = np.random.default_rng(7)
    worst = 0.0
    with Timer() as tm:
        for _ in range(1000):
            t = int(rng.integers(3, 100_000))
            R = int(rng.integers(1, 5000))
            delta = float(rng.uniform(1e-6, 0.999))
            n_e = int(rng.integers(1, 50))
            q_min = float(rng.uniform(1e-3, 1.0 / n_e))
            sum_p = float(rng.uniform(0, t * n_e))
            a = azuma_threshold(t, R, delta, 1 / q_min + 1)
            b = freedman_threshold(t, R, delta, q_min, n_e, sum_p)
            worst = max(worst, abs(a / azuma_second(t, R, delta, 1 / q_min + 1) - 1),
                        abs(b / freedman_second(t, R, delta, q_min, n_e, sum_p) - 1))
    ok = verdict(report, 2, "threshold formulas", worst <= 1e-12,
                 f"max relative disagreement = {worst:.2e} over 1000 tuples", tm.seconds, 5)
    assert ok


# --- 3 ---------------------------------------------------------------------

def test_retention(report):
    with Timer() as tm:
        ds = make_synthetic(3, 5, 14_000, 10.0, seed=31)
        train, held = prepare_split(ds, 10 / 14, seed=32)
        panel = ExpertPanel.class_oracles(3, seed=33)
        train_costs = panel.cost_matrix(train.y, TRAIN)
        held_costs = panel.cost_matrix(held.y, TEST)
        base = build_hypothesis_pool(train.X, 15, 3, costs=train_costs, seed=34)
        # one member fit to the always-free expert (expert y), the natural candidate for r*
        clean = train_multinomial_logistic(train.X, train.y, 3, epochs=500, seed=35)
        pool = HypothesisPool(list(base) + [clean])
        held_loss = loss_matrix(LossConfig.two_stage(3), pool.scores(held.X))
        r_star = int(np.argmin(expected_surrogate(held_loss, held_costs)))

        kept = 0
        min_vs = len(pool)
        for run in range(100):
            order = np.random.default_rng(1000 + run).permutation(len(train))[:1000]
            res = run_budgeted_two_stage(
                train.X[order], train.y[order], (held.X, held.y, held_costs), pool,
                ExpertPanel.class_oracles(3, seed=33), threshold=ThresholdConfig("azuma", 0.1),
                T=1000, seed=run, stream_index=order)
            kept += bool(res.version_space.active[r_star])
            min_vs = min(min_vs, res.version_space.size)
    ok = verdict(report, 3, "retention", kept >= 85,
                 f"r* = member {r_star} kept in {kept}/100 runs "
                 f"(smallest final version space {min_vs}/{len(pool)})", tm.seconds, 300)
    assert ok


# --- 4 ---------------------------------------------------------------------

def test_query_reduction(report):
    parts, ok_all, slowest = [], True, 0.0
    for n_classes, frac_limit in ((2, 0.45), (10, 0.30)):
        kw = dict(n_classes=n_classes, n_features=max(5, n_classes), T=2000, trials=5)
        with Timer() as tm:
            budgeted = run_experiment(RunConfig(**kw))[-1]
            baseline = run_experiment(RunConfig(algorithm="two_stage_baseline", **kw))[-1]
        frac = budgeted.queried / budgeted.available
        gap = baseline.acc_mean - budgeted.acc_mean
        ok = frac <= frac_limit and abs(gap) <= 0.03 and tm.seconds < 600
        ok_all &= ok
        slowest = max(slowest, tm.seconds)
        parts.append(f"{n_classes} classes {'ok' if ok else 'FAILS'}: queried "
                     f"{budgeted.queried:.1f}/{budgeted.available} = {frac:.4f} "
                     f"(limit {frac_limit}), accuracy {budgeted.acc_mean:.4f} vs baseline "
                     f"{baseline.acc_mean:.4f}, gap {gap:+.4f} (limit 0.03), {tm.seconds:.0f}s")
    ok = verdict(report, 4, "query reduction", ok_all, "; ".join(parts), slowest, 600)
    assert ok


# --- 5 and 8 ---------------------------------------------------------------

def _growth(cfg):
    res = run_trials(cfg)
    ratios, halves, traces = [], [], []
    for tr in res.trials:
        Q = tr.result.trace.Q
        ratios.append(Q[:4000].sum() / max(Q[:2000].sum(), 1))
        halves.append((int(Q[:2000].sum()), int(Q[2000:4000].sum())))
        traces.append(tr)
    return float(np.mean(ratios)), ratios, halves, traces


def test_sublinear_queries(report):
    with Timer() as tm:
        mean_ratio, ratios, halves, _ = _growth(RunConfig(T=4000, trials=5))
    ok = verdict(report, 5, "sublinear queries",
                 mean_ratio < 1.8,
                 f"mean Q(4000)/Q(2000) = {mean_ratio:.3f} (limit < 1.8); per seed "
                 f"{', '.join(f'{r:.3f}' for r in ratios)}; queries per half {halves}",
                 tm.seconds, 600)
    assert ok


def test_single_stage_budget_isolation(report):
    with Timer() as tm:
        mean_ratio, ratios, halves, trials = _growth(
            RunConfig(algorithm="single_stage_budgeted", T=4000, trials=5))
        isolated = True
        for tr in trials:
            t = tr.result.trace
            isolated &= bool(np.all(t.Q[t.k == 0] == 0))
            isolated &= tr.budgeted_queries == tr.result.queries == int(t.Q.sum())
            isolated &= tr.result.queries <= int((t.k != 0).sum())
    ok = verdict(report, 8, "single-stage budget isolation",
                 isolated and mean_ratio < 1.8,
                 f"arm-0 rounds query-free and queries <= deferral rounds: {isolated}; "
                 f"mean Q(4000)/Q(2000) = {mean_ratio:.3f} (limit < 1.8); "
                 f"per seed {', '.join(f'{r:.3f}' for r in ratios)}", tm.seconds, 600)
    assert ok


# --- 6 ---------------------------------------------------------------------

class _Fixed(ThresholdConfig):
    def __init__(self, value, pool_size):
        super().__init__("azuma", 0.1, pool_size)
        object.__setattr__(self, "_fixed", value)

    def value(self, t, policy, n_experts, sum_p=0.0):
        return self._fixed


def _check_run(res, panel, pool, n_e, q, train_costs):
    tr = res.trace
    problems = []
    if tr.masks is not None and not np.all(tr.masks[1:] <= tr.masks[:-1]):
        problems.append("nesting")
    if not np.all((tr.p >= 0) & (tr.p <= 1 / n_e + 1e-15)):
        problems.append("p range")
    if not np.all((tr.Q == 0) | (tr.Q == 1)):
        problems.append("one query per round")
    if not (res.queries == panel.budgeted_queries == int(tr.Q.sum()) == len(res.samples)):
        problems.append("budget identity")
    for s in res.samples:
        if s.w != 1.0 / (q[s.k] * tr.p_selected[s.index]) or s.c != train_costs[s.index, s.k]:
            problems.append("weight formula")
            break
    return problems


def test_structural_invariants(report, tmp_path):
    problems = []
    runs = 0
    with Timer() as tm:
        for seed in range(6):
            ds = make_synthetic(3, 5, 1500, 10.0 if seed % 2 else 2.0, seed)
            train, test = prepare_split(ds, 0.3, seed)
            panel0 = ExpertPanel.class_oracles(3, seed)
            train_costs = panel0.cost_matrix(train.y, TRAIN)
            test_costs = panel0.cost_matrix(test.y, TEST)
            pools = [build_hypothesis_pool(train.X, 8, 3, costs=train_costs, seed=seed, epochs=100),
                     build_hypothesis_pool(train.X, 12, 3, target_rule="random_gaussian", seed=seed)]
            for pool in pools:
                q = np.random.default_rng(seed).dirichlet(np.ones(3) * 5)
                for thr in (None, _Fixed(0.05, len(pool))):
                    panel = ExpertPanel.class_oracles(3, seed)
                    res = run_budgeted_two_stage(train.X, train.y, (test.X, test.y, test_costs),
                                                 pool, panel, SamplingPolicy(q), thr, T=600,
                                                 seed=seed, record_masks=True)
                    problems += _check_run(res, panel, pool, 3, q, train_costs)
                    runs += 1
                panel = ExpertPanel.class_oracles(3, seed)
                base = run_baseline_two_stage(train.X, train.y, (test.X, test.y, test_costs),
                                              pool, panel, T=300, log_every=1)
                if [log.cumulative_queries for log in base.logs] != [3 * t for t in range(1, 301)] \
                        or panel.unbudgeted_queries != 900:
                    problems.append("baseline counter")
        cfg = RunConfig(n_examples=900, T=300, pool_size=6, epochs=50, trials=2)
        a = emit_csv(run_experiment(cfg), tmp_path / "a.csv").read_bytes()
        b = emit_csv(run_experiment(cfg), tmp_path / "b.csv").read_bytes()
        if a != b:
            problems.append("csv determinism")
    ok = verdict(report, 6, "structural invariants", not problems,
                 f"{runs} budgeted runs + baselines + CSV rerun; violations: "
                 f"{sorted(set(problems)) or 'none'}", tm.seconds, 120)
    assert ok


# --- 7 ---------------------------------------------------------------------

def test_slope_asymmetry_bound(report):
    with Timer() as tm:
        ds = make_synthetic(3, 5, 6000, 10.0, seed=71)
        train, _ = prepare_split(ds, 0.3, seed=72)
        panel = ExpertPanel.class_oracles(3, seed=73)
        costs = panel.cost_matrix(train.y, TRAIN)
        pool = build_hypothesis_pool(train.X, 64, 3, costs=costs, seed=74, score_bound=1.0)
        est, ratios = estimate_slope_asymmetry(pool, train.X, costs, 10_000, seed=75,
                                               return_ratios=True)
        bound = slope_asymmetry_bound(costs)
        finite = ratios[np.isfinite(ratios)]
        violations = int((finite > bound).sum())
    ok = verdict(report, 7, "slope-asymmetry bound", violations == 0,
                 f"max finite ratio {est.value:.4g} vs bound {bound:.4g}; "
                 f"{violations} of {finite.size} finite tuples exceed it, "
                 f"{est.n_infinite} infinite", tm.seconds, 60)
    assert ok


# --- 9 ---------------------------------------------------------------------

def _fuzz_line(rng):
    label = int(rng.integers(-3, 40))
    n = int(rng.integers(0, 12))
    idx = np.sort(rng.choice(np.arange(1, 10_000), size=n, replace=False))
    kind = rng.integers(0, 3, size=n)
    vals = np.where(kind == 0, rng.normal(size=n),
                    np.where(kind == 1, rng.normal(size=n) * 10.0 ** rng.integers(-300, 300, n),
                             rng.integers(-9, 10, n).astype(float)))
    pairs = [(int(i), float(v)) for i, v in zip(idx, vals)]
    sep = [" ", "  ", "\t"][int(rng.integers(0, 3))]
    text = f"{'+' if label > 0 and rng.random() < 0.3 else ''}{label}"
    for i, v in pairs:
        text += sep + f"{i}:{v!r}"
    if rng.random() < 0.2:
        text += " # trailing comment"
    return text, label, pairs


def test_data_pipeline(report, tmp_path):
    rng = np.random.default_rng(90)
    failures = []
    with Timer() as tm:
        corpus = [_fuzz_line(rng) for _ in range(1000)]
        for n, (text, label, pairs) in enumerate(corpus):
            parsed = parse_sparse_line(text)
            if parsed != (label, pairs) or parse_sparse_line(format_sparse_line(*parsed)) != parsed:
                failures.append(f"line {n}")
        f = tmp_path / "fuzz.txt"
        f.write_text("\n".join(c[0] for c in corpus) + "\n")
        ds = load_dataset(f)
        if len(ds) != 1000:
            failures.append("loader row count")
        worst = [0.0, 0.0, 0.0]
        for seed in range(50):
            r = np.random.default_rng(seed)
            n, d = int(r.integers(2, 300)), int(r.integers(1, 8))
            X = r.normal(size=(n, d)) * r.uniform(1e-3, 1e3, d) + r.normal(0, 100, d)
            if d > 1:
                X[:, -1] = 4.2
            Z = standardize_features(Dataset(X, np.zeros(n, int), 1)).X
            st = fit_standardizer(Dataset(X, np.zeros(n, int), 1))
            live = st.std > 0
            worst[0] = max(worst[0], np.abs(Z.mean(axis=0)).max())
            worst[1] = max(worst[1], np.abs(Z[:, live].var(axis=0) * st.scale ** 2 - 1).max())
            worst[2] = max(worst[2], abs(np.linalg.norm(Z, axis=1).max() - 1))
        if worst[0] >= 1e-9 or worst[1] >= 1e-6 or worst[2] > 1e-12:
            failures.append("standardization")
    ok = verdict(report, 9, "data pipeline", not failures,
                 f"1000-line fuzz corpus round-trip, {len(failures)} failures "
                 f"{failures[:3]}; |mean| {worst[0]:.1e}, |var-1| {worst[1]:.1e}, "
                 f"|maxnorm-1| {worst[2]:.1e}", tm.seconds, 30)
    assert ok
