"""Generative quality metrics in classifier feature space"""

from app.metrics.conditional import conditional_f1, feature_diversity
from app.metrics.distribution import FeatureStatistics, fid, inception_score, kid
from app.metrics.report import MetricReport, MetricSettings, MetricValue, compute_metric_report, noise_like

__all__ = [
    "FeatureStatistics",
    "MetricReport",
    "MetricSettings",
    "MetricValue",
    "compute_metric_report",
    "conditional_f1",
    "feature_diversity",
    "fid",
    "inception_score",
    "kid",
    "noise_like",
]
