"""Time-series classifier with per-channel attribution.

Thin wrapper over the compiled extension: an n-body simulator and benchmark
dataset builder, the model/training entry points, and the evaluation metrics
(ROC, confusion counts, gate heatmaps, AP@k over attributed channels).
"""

from ietnet._core import (
    Checkpoint,
    Dataset,
    ModelConfig,
    TrainConfig,
    ap_at_k,
    aggregate_gate,
    build_nbody_dataset,
    confusion_at,
    confusion_matrix,
    drop_channels,
    export_csv,
    fit,
    import_csv,
    load_checkpoint,
    load_dataset,
    map_at_k_report,
    normalize_by_train,
    predict_labels,
    roc_auc,
    roc_curve,
    run_eval,
    save_dataset,
    simulate_nbody,
    youden_threshold,
)

__all__ = [
    "Checkpoint",
    "Dataset",
    "ModelConfig",
    "TrainConfig",
    "ap_at_k",
    "aggregate_gate",
    "build_nbody_dataset",
    "confusion_at",
    "confusion_matrix",
    "drop_channels",
    "export_csv",
    "fit",
    "import_csv",
    "load_checkpoint",
    "load_dataset",
    "map_at_k_report",
    "normalize_by_train",
    "predict_labels",
    "roc_auc",
    "roc_curve",
    "run_eval",
    "save_dataset",
    "simulate_nbody",
    "youden_threshold",
]
