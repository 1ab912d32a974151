"""Command line entry point: ``budgetdefer {run,synth,diag}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from . import diagnostics
from .data import format_sparse_line, prepare_split
from .experts import TRAIN, ExpertPanel
from .harness import (
    RunConfig,
    default_output_path,
    emit_csv,
    load_experiment_dataset,
    make_synthetic,
    read_config_file,
    run_trials,
)
from .linear_model import build_hypothesis_pool, load_pool, save_pool

log = logging.getLogger("budgetdefer")


def _add_config_flags(parser):
    for f in dataclasses.fields(RunConfig):
        parser.add_argument(f"--{f.name}", dest=f.name, default=None, metavar="VALUE",
                            help=f"(default: {f.default})")


def _overrides(args) -> dict:
    return {f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig)
            if getattr(args, f.name, None) is not None}


def cmd_run(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    values.update(_overrides(args))
    cfg = RunConfig.from_mapping(values)
    result = run_trials(cfg)
    path = emit_csv(result.points, default_output_path(cfg))
    last = result.points[-1]
    log.info("wrote %s", path)
    print(f"{cfg.algorithm}: t={last.t} queried={last.queried:.1f}/{last.available} "
          f"({last.queried / last.available:.3f}) acc={last.acc_mean:.4f}"
          f"+-{last.acc_stderr:.4f} vs_size={last.vs_size:.1f} -> {path}")
    return 0


def cmd_synth(args) -> int:
    ds = make_synthetic(args.n_classes, args.n_features, args.n_examples, args.margin, args.seed)
    lines = []
    for x, y in zip(ds.X, ds.y):
        pairs = [(j + 1, v) for j, v in enumerate(x) if v != 0.0]
        lines.append(format_sparse_line(int(y) + 1, pairs))
    text = "\n".join(lines) + "\n"
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        log.info("wrote %d examples to %s", len(ds), args.output)
    return 0


def cmd_diag(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    values.update(_overrides(args))
    values.setdefault("algorithm", "two_stage_budgeted")
    cfg = RunConfig.from_mapping(values)
    ds = load_experiment_dataset(cfg)
    train, _ = prepare_split(ds, cfg.test_fraction, cfg.seed)
    panel = ExpertPanel.class_oracles(ds.n_classes, cfg.seed)
    costs = panel.cost_matrix(train.y, TRAIN)
    if args.pool:
        pool = load_pool(args.pool)
    else:
        pool = build_hypothesis_pool(train.X, cfg.pool_size, panel.n_experts, costs=costs,
                                     target_rule=cfg.resolved_target_rule(), l2=cfg.l2,
                                     seed=cfg.seed, sigma=cfg.pool_sigma,
                                     score_bound=cfg.score_bound, epochs=cfg.epochs,
                                     step=cfg.step)
    if args.save_pool:
        save_pool(pool, args.save_pool)

    k_est = diagnostics.estimate_slope_asymmetry(pool, train.X, costs, args.pairs, cfg.seed)
    bound = diagnostics.slope_asymmetry_bound(costs)
    rho = diagnostics.rho_matrix(pool, train.X)
    surrogate = ((1.0 - costs)[:, None, :] * diagnostics._pool_losses(pool, train.X)).sum(2).mean(0)
    r_star = int(np.argmin(surrogate))
    grid = [float(e) for e in args.epsilons.split(",")]
    theta = diagnostics.estimate_disagreement_coefficient(pool, r_star, train.X, grid)
    off = rho[~np.eye(len(pool), dtype=bool)]
    print(f"pool size           {len(pool)}")
    print(f"K_ell estimate      {k_est.value:.6g}  (bound 4 n_e / rho = {bound:.6g}, "
          f"{k_est.n_infinite} zero-denominator tuples of {k_est.sample_size})")
    print(f"rho(r, r')          min {off.min():.6g}  mean {off.mean():.6g}  max {off.max():.6g}")
    print(f"theta estimate      {theta.value:.6g}  (r* = {r_star}, grid {grid})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="budgetdefer",
                                     description="Routing to experts when cost queries are rationed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run seeded trials and write a CSV curve")
    run.add_argument("config", nargs="?", help="key = value config file")
    _add_config_flags(run)
    run.set_defaults(func=cmd_run)

    synth = sub.add_parser("synth", help="write a synthetic dataset in sparse text format")
    synth.add_argument("--n_classes", type=int, default=3)
    synth.add_argument("--n_features", type=int, default=5)
    synth.add_argument("--n_examples", type=int, default=6000)
    synth.add_argument("--margin", type=float, default=10.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--output", "-o", default=None)
    synth.set_defaults(func=cmd_synth)

    diag = sub.add_parser("diag", help="estimate slope asymmetry, rho and theta on a pool")
    diag.add_argument("config", nargs="?")
    diag.add_argument("--pool", help="pool file to analyse instead of building one")
    diag.add_argument("--save_pool", help="write the analysed pool to this file")
    diag.add_argument("--pairs", type=int, default=10_000)
    diag.add_argument("--epsilons", default="0.01,0.02,0.05,0.1,0.2,0.5")
    _add_config_flags(diag)
    diag.set_defaults(func=cmd_diag)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
