"""Threshold rules, calibrated risk distributions and classification-parity analysis."""

from .distributions import (DiscriminantDist, EmpiricalDist, cdf, class_conditional, disc_new, discretize,
                            dist_auc, dist_mean, pdf, quantile, sample, variance)
from .errors import DomainError, InfeasibleConstraintError, SchemaError, UndefinedAUCError
from .metrics import (ConfusionMatrix, RatePanel, Records, ScoredPopulation, analytic_rates, auc_empirical,
                      balance_metrics, calibration_curve, confusion, inframarginality_grid, parity_gaps, rates)
from .parity import ConstraintKind, ParityConstraint, SolverResult, solve, utility_cost_of_parity
from .perturbations import (CoarseScheme, PoolingSchedule, coarsen, degradation_curve,
                            find_fpr_parity_degradation, pool_tails, redline_contract)
from .policy import (CostBenefit, GroupThresholdRule, anti_classification_check, apply_rule, expected_utility,
                     optimal_threshold, pretrial_costs)
from .risk_model import Dataset, ElasticNetConfig, LogisticModel, fit, fit_group_specific, ingest_csv, predict

__version__ = "0.1.0"
