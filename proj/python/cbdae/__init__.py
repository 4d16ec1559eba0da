"""Blind denoising of multivariate IIoT time series.

A GRU sequence autoencoder trained with noise-contrastive regularization and
temporal hard-negative batching, plus classical baseline filters and a
quadruple-tank benchmark process.
"""

from ._cbdae import (
    CbdaeError,
    Model,
    ema_filter,
    mean_filter,
    median_filter,
    pca_project,
    rmse,
    savgol_filter,
    simulate_quadtank,
    smoothness_score,
    train,
)

__all__ = [
    "CbdaeError",
    "Model",
    "ema_filter",
    "mean_filter",
    "median_filter",
    "pca_project",
    "rmse",
    "savgol_filter",
    "simulate_quadtank",
    "smoothness_score",
    "train",
]

__version__ = "0.1.0"
