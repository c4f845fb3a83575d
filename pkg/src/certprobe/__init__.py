"""certprobe: black-box hallucination detection for closed-book QA.

Perturbs prompts with expressions of (un)certainty, measures answer
consistency through NLI logits, and evaluates detection metrics with
AUROC/AUPRC against factuality labels.
"""

from .core import (
    Consistency,
    DecodingParams,
    DetectionScore,
    Expression,
    ExpressionKind,
    Factuality,
    Generation,
    MetricName,
    NliVerdict,
    Orientation,
    QaItem,
    Source,
    builtin_expressions,
)

__all__ = [
    "Consistency",
    "DecodingParams",
    "DetectionScore",
    "Expression",
    "ExpressionKind",
    "Factuality",
    "Generation",
    "MetricName",
    "NliVerdict",
    "Orientation",
    "QaItem",
    "Source",
    "builtin_expressions",
]

__version__ = "0.1.0"
