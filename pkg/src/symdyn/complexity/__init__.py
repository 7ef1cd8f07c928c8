"""Complexity features: regularity, scaling, fractal and recurrence measures."""

from .features import (CROSS_METRICS, UNIVARIATE_METRICS, ComplexityFeatures, FeatureGrid,
                       FeatureMatrix, extract_features, feature_columns)
from .recurrence import RecurrencePlot, RQAResult, embed, recurrence_plot, rqa
from .univariate import (fractal_dimension, permutation_entropy, regularity_entropy,
                         scaling_exponent, zero_crossings)

__all__ = [
    "CROSS_METRICS", "UNIVARIATE_METRICS", "ComplexityFeatures", "FeatureGrid", "FeatureMatrix",
    "extract_features", "feature_columns", "RecurrencePlot", "RQAResult", "embed",
    "recurrence_plot", "rqa", "fractal_dimension", "permutation_entropy", "regularity_entropy",
    "scaling_exponent", "zero_crossings",
]
