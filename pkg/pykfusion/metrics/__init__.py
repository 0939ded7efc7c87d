from .evaluation import ConfusionMatrix, EvaluationError, evaluate, aggregate
from .diagnostics import (DiagReport, DiagnosticsError, estimate_peq, estimate_peq_counts, weight_mean_report,
                          dominance_report)
