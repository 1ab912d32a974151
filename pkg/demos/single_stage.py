"""
Single-stage deferral: predict or defer with one scorer
=======================================================

The scorer ranges over n labels plus n_e experts. Arm 0 (predict
directly) never touches the cost oracle; only deferral arms can buy a
cost, and only when their Bernoulli draw succeeds.
"""

from budgetdefer import ExpertPanel, build_hypothesis_pool, make_synthetic, prepare_split
from budgetdefer import run_budgeted_single_stage
from budgetdefer.experts import TEST

ds = make_synthetic(n_classes=3, n_features=5, n_examples=3000, margin=10.0, seed=0)
train, test = prepare_split(ds, 0.3, seed=1)

panel = ExpertPanel.class_oracles(3, seed=2)
test_costs = panel.cost_matrix(test.y, TEST)
panel.unbudgeted_queries = 0  # evaluation costs are not part of the budget

# a random pool over 3 labels + 3 experts = 6 decisions
pool = build_hypothesis_pool(train.X, 32, 6, target_rule="random_gaussian", seed=3)

res = run_budgeted_single_stage(train.X, train.y, (test.X, test.y, test_costs), pool, panel,
                                n_classes=3, T=2000, seed=4)
tr = res.trace
print("rounds on arm 0:        ", int((tr.k == 0).sum()))
print("rounds on deferral arms:", int((tr.k != 0).sum()))
print("cost queries:           ", res.queries, "(oracle counter:", panel.budgeted_queries, ")")
print("queries on arm-0 rounds:", int(tr.Q[tr.k == 0].sum()))
print("per-expert queries:     ", res.logs[-1].expert_queries)
print("final test accuracy:    ", round(res.logs[-1].test_system_accuracy, 4))

# the direct-prediction samples carry weight 1/q_0 = 4 under the uniform policy
print("arm-0 weights:", sorted({s.w for s in res.samples if s.k == 0}))
