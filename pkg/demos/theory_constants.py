"""
Sample estimates of the constants in the label-complexity bound
================================================================

Slope asymmetry, the rho pseudometric and the disagreement coefficient,
estimated on a trained routing pool. These are sample diagnostics, not
certified population values.
"""

import numpy as np

from budgetdefer import ExpertPanel, build_hypothesis_pool, make_synthetic, prepare_split
from budgetdefer.diagnostics import (
    estimate_disagreement_coefficient,
    estimate_slope_asymmetry,
    expected_surrogate,
    rho_matrix,
    slope_asymmetry_bound,
)
from budgetdefer.experts import TRAIN
from budgetdefer.losses import LossConfig, loss_matrix

ds = make_synthetic(3, 5, 4000, 10.0, seed=0)
train, _ = prepare_split(ds, 0.3, seed=1)
panel = ExpertPanel.class_oracles(3, seed=2)
costs = panel.cost_matrix(train.y, TRAIN)
pool = build_hypothesis_pool(train.X, 32, 3, costs=costs, seed=3)

est, ratios = estimate_slope_asymmetry(pool, train.X, costs, 10_000, seed=4, return_ratios=True)
bound = slope_asymmetry_bound(costs)
print(f"slope asymmetry estimate {est.value:.4g}; closed-form bound {bound:.4g}")
print(f"  tuples above the bound: {(ratios[np.isfinite(ratios)] > bound).sum()} of {ratios.size}")
# large ratios come from tuples where the free expert's loss barely moves
# while the others move a lot
print("  ratio quantiles (50/90/99%):", np.round(np.quantile(ratios, [0.5, 0.9, 0.99]), 3))

rho = rho_matrix(pool, train.X)
off = rho[~np.eye(len(pool), dtype=bool)]
print(f"rho over pairs: min {off.min():.4f}  median {np.median(off):.4f}  max {off.max():.4f}")

r_star = int(np.argmin(expected_surrogate(loss_matrix(LossConfig.two_stage(3), pool.scores(train.X)), costs)))
grid = np.quantile(off, [0.05, 0.25, 0.5, 1.0])
theta = estimate_disagreement_coefficient(pool, r_star, train.X, grid)
print(f"disagreement coefficient estimate {theta.value:.4g} around member {r_star}")
