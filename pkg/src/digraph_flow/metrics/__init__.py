"""Evaluation suite: structural MMD, validity tests, V.U.N. and joint label metrics."""

from .descriptors import KINDS, descriptor, describe
from .joint import JointMetrics, RandomGNN, joint_metrics, triplet_precision_recall
from .mmd import RatioSummary, mmd, ratio_summary, structural_mmd
from .report import METRIC_GROUPS, EvalReport, evaluate
from .validity import (
    TypedConstraintRules,
    ValidityResult,
    recover_blocks,
    validity_er,
    validity_fn_for,
    validity_price,
    validity_sbm,
    validity_typed,
)
from .vun import VUNResult, vun

__all__ = [
    "KINDS", "descriptor", "describe", "JointMetrics", "RandomGNN", "joint_metrics", "triplet_precision_recall",
    "RatioSummary", "mmd", "ratio_summary", "structural_mmd", "METRIC_GROUPS", "EvalReport", "evaluate",
    "TypedConstraintRules", "ValidityResult", "recover_blocks", "validity_er", "validity_fn_for",
    "validity_price", "validity_sbm", "validity_typed", "VUNResult", "vun",
]
