from .metrics import (
    DetectionReport,
    ThresholdModel,
    balanced_accuracy,
    calibrate_threshold,
    classify,
    detection_metrics,
    write_histogram_csv,
    write_report_csv,
    write_report_json,
)
from .scoring import (
    HIGHER_IS_CORRUPT,
    METHODS,
    AveragedSemantics,
    ResidualTrace,
    averaged_semantics,
    iou_score,
    miou_validation,
    residual_avg,
    residual_baseline,
    score_masks,
    solve_puzzle,
)
