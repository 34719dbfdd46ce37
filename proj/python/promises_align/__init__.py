"""Functional alignment toolkit: regularized Procrustes engines with location
priors, synthetic cohorts, and classification-based evaluation."""

from ._core import (
    Alignment,
    Classification,
    KScore,
    NumericError,
    Selection,
    Synth,
    TracePoint,
    ValidationError,
    default_k_grid,
    euclidean_prior,
    gpa,
    hyperalign,
    loso_linear_classify,
    opp,
    promises,
    promises_efficient,
    segment_correlation_classify,
    select_k,
    simulate,
)

__all__ = [
    "Alignment",
    "Classification",
    "KScore",
    "NumericError",
    "Selection",
    "Synth",
    "TracePoint",
    "ValidationError",
    "default_k_grid",
    "euclidean_prior",
    "gpa",
    "hyperalign",
    "loso_linear_classify",
    "opp",
    "promises",
    "promises_efficient",
    "segment_correlation_classify",
    "select_k",
    "simulate",
]
