"""Evaluation metrics on plain numpy predictions.

Training optimizes squared pixel distances; the comparison tables report
the mean Euclidean distance in pixels as well, so both are computed here
and labeled explicitly. Per-timestep curves carry the mean with 25th/75th
percentile bands. Log-perplexity of the probabilistic models is the mean
negative log likelihood in nats, which equals ln of the base-2 perplexity
2^(-E[log2 p]) by change of base.
"""

from dataclasses import dataclass

import numpy as np

from .losses import LN_2PI


def l2_sequence_loss(pred, gt):
    """Mean over time of squared Euclidean distance between two tracks.

    Accepts (T, 2) or (N, T, 2); batched input averages over sequences too.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.shape[-2] < 1:
        raise ValueError("empty sequence")
    return float(np.mean(np.sum((pred - gt) ** 2, axis=-1)))


def angular_velocity_loss(pred, gt):
    """Mean over time of squared angular-velocity error, vectors in R^3."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return float(np.mean(np.sum((pred - gt) ** 2, axis=-1)))


def pixel_errors(pred, gt):
    """Euclidean pixel distance per sequence and timestep: (N, T)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return np.sqrt(np.sum((pred - gt) ** 2, axis=-1))


def log_perplexity(nll_values):
    """ln of 2^(-E[log2 p]) for densities given as NLL values in nats.

    By base change this is simply the mean of the inputs; the base-2 form
    is kept in the tests as the cross-check.
    """
    nll_values = np.asarray(nll_values, dtype=np.float64)
    if not np.all(np.isfinite(nll_values)):
        raise ValueError("non-finite negative log likelihood values")
    return float(np.mean(nll_values))


def gaussian_nll_values(gt, mu, lam1, lam2, theta):
    """Per-element NLL in nats of gt under the decoded Gaussian beliefs.

    All arrays share leading shape (..., ); gt and mu end in a length-2 axis.
    """
    d = np.asarray(gt, dtype=np.float64) - np.asarray(mu, dtype=np.float64)
    lam1, lam2, theta = (np.asarray(a, dtype=np.float64) for a in (lam1, lam2, theta))
    c, s = np.cos(theta), np.sin(theta)
    u = c * d[..., 0] - s * d[..., 1]
    w = s * d[..., 0] + c * d[..., 1]
    return LN_2PI + 0.5 * (np.log(lam1) + np.log(lam2)) \
        + 0.5 * (u ** 2 / lam1 + w ** 2 / lam2)


@dataclass
class TimestepErrorCurve:
    mean: np.ndarray
    p25: np.ndarray
    p75: np.ndarray

    def __len__(self):
        return len(self.mean)


def timestep_error_stats(errors):
    """Mean and interquartile band per timestep over an (N, T) error matrix.

    Percentiles interpolate linearly between order statistics.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.ndim != 2 or errors.size == 0:
        raise ValueError(f"expected a non-empty (N, T) error matrix, got {errors.shape}")
    return TimestepErrorCurve(
        mean=errors.mean(axis=0),
        p25=np.percentile(errors, 25, axis=0),
        p75=np.percentile(errors, 75, axis=0),
    )
