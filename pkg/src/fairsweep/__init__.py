"""fairsweep: fairness-aware exhaustive model search for binary classification.

Sweep base estimators, hyperparameters, classification thresholds and bias
mitigation methods under stratified k-fold CV, score every pipeline with a
combined accuracy+fairness cost, and analyze the results.
"""

__version__ = "0.1.0"

from .data import (
    Dataset,
    DatasetSchema,
    Encoder,
    FeatureMatrix,
    FoldPlan,
    encode,
    load_csv,
    stratified_kfold,
    synth_biased,
)
from .estimators import EstimatorSpec, apply_threshold, fit, predict_proba
from .metrics import (
    ACC_METRICS,
    ALL_METRICS,
    FAIR_METRICS,
    accuracy_metrics,
    confusion,
    consistency,
    fairness_cost,
    full_report,
    generalized_entropy,
    group_fairness,
)
from .mitigation import (
    EgrParams,
    MitigationContext,
    apply_mitigation,
    ceo_adjust,
    egr_train,
    reweigh,
    roc_adjust,
    roc_select_band,
)
from .search import (
    CostCriterion,
    EvaluationRecord,
    GridCell,
    GridConfig,
    enumerate_grid,
    evaluate_cell,
    make_cell,
    run,
    select_best,
    total_cost,
)
from .stats import (
    bm_effect_analysis,
    cohens_d,
    correlation_report,
    mann_whitney_u,
    spearman,
)

__all__ = [
    "__version__",
    "Dataset",
    "DatasetSchema",
    "Encoder",
    "FeatureMatrix",
    "FoldPlan",
    "encode",
    "load_csv",
    "stratified_kfold",
    "synth_biased",
    "EstimatorSpec",
    "apply_threshold",
    "fit",
    "predict_proba",
    "ACC_METRICS",
    "ALL_METRICS",
    "FAIR_METRICS",
    "accuracy_metrics",
    "confusion",
    "consistency",
    "fairness_cost",
    "full_report",
    "generalized_entropy",
    "group_fairness",
    "EgrParams",
    "MitigationContext",
    "apply_mitigation",
    "ceo_adjust",
    "egr_train",
    "reweigh",
    "roc_adjust",
    "roc_select_band",
    "CostCriterion",
    "EvaluationRecord",
    "GridCell",
    "GridConfig",
    "enumerate_grid",
    "evaluate_cell",
    "make_cell",
    "run",
    "select_best",
    "total_cost",
    "bm_effect_analysis",
    "cohens_d",
    "correlation_report",
    "mann_whitney_u",
    "spearman",
]
