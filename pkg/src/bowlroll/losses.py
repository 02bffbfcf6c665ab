"""Differentiable training objectives assembled from rollout predictions.

Targets are plain numpy arrays; predictions carry autodiff tensors, so the
returned total backpropagates through the whole rollout. The position loss
is the time-averaged squared pixel distance; the Gaussian variants replace
it with the negative log likelihood of a bivariate normal plus a small
determinant penalty that keeps early training from hiding behind huge
variances; angular-velocity and final-anchor terms are added with unit
weight where the variant has them.
"""

from dataclasses import dataclass, field

import numpy as np

LN_2PI = float(np.log(2.0 * np.pi))


@dataclass
class LossReport:
    total: object                     # scalar Tensor
    position: float = 0.0
    nll: float = 0.0
    regularizer: float = 0.0
    angular: float = 0.0
    final_position: float = 0.0
    per_timestep: dict = field(default_factory=dict)

    def component_sum(self):
        return (self.position + self.nll + self.regularizer + self.angular
                + self.final_position)


def _check_lengths(preds, gt, what):
    if len(preds) != gt.shape[1]:
        raise ValueError(f"{what}: {len(preds)} predictions vs {gt.shape[1]} targets")
    if len(preds) < 1:
        raise ValueError(f"{what}: empty sequence")


def squared_position_term(mus, gt_px):
    """(1/T) sum_t mean_batch |mu_t - y_t|^2; returns (Tensor, per-t floats)."""
    _check_lengths(mus, gt_px, "position loss")
    horizon = len(mus)
    total = None
    per_t = []
    for t, mu in enumerate(mus):
        d = mu - gt_px[:, t, :]
        step = (d * d).sum(axis=1).mean()
        per_t.append(float(step.data))
        total = step if total is None else total + step
    return total * (1.0 / horizon), per_t


def angular_velocity_term(omegas, gt_omega):
    """(1/T) sum_t mean_batch |omega_hat_t - omega_t|^2."""
    _check_lengths(omegas, gt_omega, "angular loss")
    horizon = len(omegas)
    total = None
    per_t = []
    for t, om in enumerate(omegas):
        d = om - gt_omega[:, t, :]
        step = (d * d).sum(axis=1).mean()
        per_t.append(float(step.data))
        total = step if total is None else total + step
    return total * (1.0 / horizon), per_t


def gaussian_nll_loss(gt_px, beliefs, lam_reg):
    """Mean negative log likelihood of the targets under the beliefs.

    nll_t = ln 2pi + 0.5 ln det Sigma_t + 0.5 (y - mu)^T Sigma_t^-1 (y - mu),
    averaged over time and batch; the penalty lam_reg * sum_t det Sigma_t
    (batch-averaged) is added on top. The quadratic form is evaluated in the
    eigenbasis, so Sigma itself is never materialized in the graph.
    """
    _check_lengths(beliefs, gt_px, "gaussian nll")
    horizon = len(beliefs)
    nll_total = None
    reg_total = None
    per_t = []
    for t, b in enumerate(beliefs):
        d0 = b.mu[:, 0] - gt_px[:, t, 0]
        d1 = b.mu[:, 1] - gt_px[:, t, 1]
        c, s = b.theta.cos(), b.theta.sin()
        u = c * d0 - s * d1
        w = s * d0 + c * d1
        step = (b.lam1.log() + b.lam2.log()) * 0.5 \
            + (u * u / b.lam1 + w * w / b.lam2) * 0.5 + LN_2PI
        step = step.mean()
        det = (b.lam1 * b.lam2).mean()
        per_t.append(float(step.data))
        nll_total = step if nll_total is None else nll_total + step
        reg_total = det if reg_total is None else reg_total + det
    nll = nll_total * (1.0 / horizon)
    total = nll + lam_reg * reg_total if lam_reg else nll
    return LossReport(total=total, nll=float(nll.data),
                      regularizer=float(total.data) - float(nll.data),
                      per_timestep={"nll": per_t})


def sequence_loss(preds, targets, cfg, lam_reg=0.01, final_mu=None):
    """Full training loss for one batch of rollouts under a variant config.

    targets.positions is (N, T, 2) in pixels; targets.omegas (N, T, 3) is
    required by the _av variants; the anchored variant supervises final_mu
    against the last target position.
    """
    gt_px = targets.positions
    if cfg.is_gaussian:
        report = gaussian_nll_loss(gt_px, [p.belief for p in preds], lam_reg)
    else:
        pos, per_t = squared_position_term([p.mu for p in preds], gt_px)
        report = LossReport(total=pos, position=float(pos.data),
                            per_timestep={"position": per_t})
    if cfg.has_angular:
        if targets.omegas is None:
            raise ValueError(f"variant {cfg.variant!r} needs angular-velocity targets")
        ang, ang_t = angular_velocity_term([p.omega for p in preds], targets.omegas)
        report.total = report.total + ang
        report.angular = float(ang.data)
        report.per_timestep["angular"] = ang_t
    if cfg.variant == "anchored":
        if final_mu is None:
            raise ValueError("anchored variant needs the final-position head output")
        d = final_mu - gt_px[:, -1, :]
        fin = (d * d).sum(axis=1).mean()
        report.total = report.total + fin
        report.final_position = float(fin.data)
    total = float(report.total.data)
    if not np.isfinite(total):
        raise FloatingPointError("non-finite training loss")
    if abs(total) > 1e12:
        # a 20-step recurrence that crossed its stability edge produces
        # astronomically large yet technically finite losses; treat as blown
        raise FloatingPointError(f"training loss overflow ({total:.3e})")
    return report


@dataclass
class RolloutTargets:
    positions: np.ndarray          # (N, T, 2) pixel coordinates
    omegas: np.ndarray = None      # (N, T, 3) angular velocities
