from ..mriio import FeatureBank
from .features import extract_features, extract_volume_features, fuse_modalities
from .heads import TaskHeadConfig, assert_head_budget, head_forward, head_init
from .losses import (
    atlas_inverse,
    atlas_loss,
    atlas_transform,
    ce_loss,
    cox_loss,
    mse_loss,
)
from .metrics import dice, mae, r2, rmse, roc_auc
from .probe import (
    RATIO_GRID,
    TASKS,
    ProbeConfig,
    bootstrap_ci,
    cox_km_report,
    evaluate_head,
    nested_subsample,
    ratio_sweep,
    train_head,
)
from .survival import (
    KMCurve,
    SurvivalRecord,
    binary_survival_labels,
    chi2_sf,
    concordance_index,
    km_estimate,
    km_stratify,
    logrank_test,
    records_from_arrays,
)

__all__ = [
    "FeatureBank", "KMCurve", "ProbeConfig", "RATIO_GRID", "SurvivalRecord",
    "TASKS", "TaskHeadConfig", "assert_head_budget", "atlas_inverse",
    "atlas_loss", "atlas_transform", "binary_survival_labels", "bootstrap_ci",
    "ce_loss", "chi2_sf", "concordance_index", "cox_km_report", "cox_loss",
    "dice", "evaluate_head", "extract_features", "extract_volume_features",
    "fuse_modalities", "head_forward", "head_init", "km_estimate",
    "km_stratify", "logrank_test", "mae", "mse_loss", "nested_subsample",
    "r2", "ratio_sweep", "records_from_arrays", "rmse", "roc_auc",
    "train_head",
]
