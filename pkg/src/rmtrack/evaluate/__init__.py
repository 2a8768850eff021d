from .report import EvalReport, aggregate, evaluate_run, write_report
from .tracking import (FrameRangeError, Sequence, clear_mota, hota, idf1, instance_rows,
                       match_frames, mota, to_sequence, tracking_metrics)
from .violations import (StageLabel, cer, eticket_label, eticket_prf, f1, plate_accuracy,
                         rm_association_metric, violation_prf)

__all__ = ["EvalReport", "aggregate", "evaluate_run", "write_report", "FrameRangeError", "Sequence",
           "clear_mota", "hota", "idf1", "instance_rows", "match_frames", "mota", "to_sequence",
           "tracking_metrics", "StageLabel", "cer", "eticket_label", "eticket_prf", "f1",
           "plate_accuracy", "rm_association_metric", "violation_prf"]
