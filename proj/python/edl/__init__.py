"""Ensemble diversity lab: Jensen-gap risk decomposition, diversity
regularizers, and desk-scale ensemble training."""

from edl._core import (
    auxiliary_diversity,
    ce_gap_closed_form,
    decompose,
    diversity_value,
    ensemble_average,
    fit_forest,
    Forest,
    gaussian_mixture,
    metrics,
    mse_gap_closed_form,
    objective_gradient,
    objective_value,
    pad_and_renormalize,
    run_sweep,
    softmax,
    train_ensemble,
    two_spirals,
)

__all__ = [
    "auxiliary_diversity",
    "ce_gap_closed_form",
    "decompose",
    "diversity_value",
    "ensemble_average",
    "fit_forest",
    "Forest",
    "gaussian_mixture",
    "metrics",
    "mse_gap_closed_form",
    "objective_gradient",
    "objective_value",
    "pad_and_renormalize",
    "run_sweep",
    "softmax",
    "train_ensemble",
    "two_spirals",
]
