"""Routing to experts when cost queries are rationed."""

from .data import Dataset, Example, ParseError, load_dataset, prepare_split, split_train_test, standardize_features
from .diagnostics import TheoryEstimate, estimate_disagreement_coefficient, estimate_slope_asymmetry, rho_distance
from .experts import Expert, ExpertPanel, make_class_oracle_experts
from .harness import CurvePoint, RunConfig, emit_csv, make_synthetic, run_experiment, run_trials
from .linear_model import HypothesisPool, LinearScorer, build_hypothesis_pool, train_multinomial_logistic
from .losses import LossConfig, system_accuracy
from .single_stage import run_budgeted_single_stage
from .two_stage import SamplingPolicy, ThresholdConfig, VersionSpace, run_baseline_two_stage, run_budgeted_two_stage

__version__ = "0.1.0"
