"""Reference predictors: least-squares extrapolation and a state-input MLP.

The polynomial baselines fit each screen axis over the first observed
frames and extrapolate; they see ground-truth positions rather than images,
which is a deliberate handicap in their favor. The state MLP is a one-step
velocity-delta predictor over a short window of ground-truth states,
iterated forward autoregressively with plain Euler integration and no
knowledge of the surface constraint.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import ParameterSet, Tensor, affine
from .simulate import pixel_to_world, world_to_pixel

FIT_WINDOW = 10
FRAME_DT = 1.0 / 40.0


@dataclass
class PolyFit:
    degree: int
    coeffs: np.ndarray   # (degree + 1, 2), ascending powers, per axis

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        powers = np.stack([t ** k for k in range(self.degree + 1)], axis=-1)
        return powers @ self.coeffs


def fit_polynomial(observed, degree):
    """Least-squares fit of each axis against integer time indices."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.ndim != 2 or observed.shape[1] != 2:
        raise ValueError(f"expected (n, 2) observations, got {observed.shape}")
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    if observed.shape[0] < degree + 1:
        raise ValueError(f"need at least {degree + 1} points for degree {degree}")
    t = np.arange(observed.shape[0], dtype=np.float64)
    vand = np.stack([t ** k for k in range(degree + 1)], axis=-1)
    coeffs, *_ = np.linalg.lstsq(vand, observed, rcond=None)
    return PolyFit(degree=degree, coeffs=coeffs)


def polyfit_extrapolate(observed, degree, horizon, window=FIT_WINDOW):
    """Fit the first `window` positions and evaluate at t = 0 .. horizon-1."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape[0] != window:
        raise ValueError(f"expected exactly {window} observed positions, "
                         f"got {observed.shape[0]}")
    fit = fit_polynomial(observed, degree)
    return fit(np.arange(horizon, dtype=np.float64))


@dataclass
class StateVector:
    """Ground-truth features fed to the state MLP at one frame."""
    screen_px: np.ndarray        # (2,) pixel position
    velocity: np.ndarray         # (3,) world units/s
    bowl_a: float
    bowl_gamma: float
    omega: np.ndarray = None     # (3,), angular-velocity flavor only
    euler: np.ndarray = None     # (3,), angular-velocity flavor only

    def features(self, with_angular):
        parts = [self.screen_px, self.velocity, [self.bowl_a, self.bowl_gamma]]
        if with_angular:
            if self.omega is None or self.euler is None:
                raise ValueError("angular-velocity state input needs omega and euler")
            parts = [self.screen_px, self.velocity, self.omega, self.euler,
                     [self.bowl_a, self.bowl_gamma]]
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


CONTEXT_STATES = 4
HIDDEN = 128


def state_feature_dim(with_angular):
    return 13 if with_angular else 7


def state_output_dim(with_angular):
    return 6 if with_angular else 3


def init_state_mlp(rng, with_angular=False, init_std=0.01):
    params = ParameterSet()
    dims = [CONTEXT_STATES * state_feature_dim(with_angular), HIDDEN, HIDDEN,
            state_output_dim(with_angular)]
    for i in range(3):
        params.add(f"mlp.l{i}.w",
                   rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i], dims[i + 1])))
        params.add(f"mlp.l{i}.b", rng.normal(0.0, init_std, size=(dims[i + 1],)))
    return params


def state_mlp_forward(features, params):
    """Two hidden relu layers on the flattened context; returns the deltas."""
    t = features if isinstance(features, Tensor) else Tensor(features)
    t = affine(t, params["mlp.l0.w"], params["mlp.l0.b"]).relu()
    t = affine(t, params["mlp.l1.w"], params["mlp.l1.b"]).relu()
    return affine(t, params["mlp.l2.w"], params["mlp.l2.b"])


def state_mlp_step(context, params, with_angular=False):
    """Predict the next velocity (and angular velocity) from 4 states.

    The network regresses deltas; the last context velocity is carried
    forward and corrected.
    """
    if len(context) != CONTEXT_STATES:
        raise ValueError(f"state MLP needs {CONTEXT_STATES} context states")
    feats = np.concatenate([s.features(with_angular) for s in context])
    delta = state_mlp_forward(feats, params).data
    last = context[-1]
    v_next = last.velocity + delta[0:3]
    if with_angular:
        return v_next, last.omega + delta[3:6]
    return v_next, None


def state_mlp_rollout(context, params, horizon, resolution, half_extent,
                      with_angular=False):
    """Iterate the one-step model; Euler-integrate positions in world space.

    Output rows t = 0 .. horizon-1; the first four echo the given context
    positions (they are ground truth), predictions begin at t = 4. No
    surface constraint is applied, the model has to have learned it.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    context = list(context)
    if len(context) != CONTEXT_STATES:
        raise ValueError(f"state MLP needs {CONTEXT_STATES} context states")
    positions = [s.screen_px.copy() for s in context]
    omegas = [None if s.omega is None else s.omega.copy() for s in context]
    world_xy = pixel_to_world(context[-1].screen_px, resolution, half_extent)
    while len(positions) < horizon:
        v_next, omega_next = state_mlp_step(context[-CONTEXT_STATES:], params,
                                            with_angular)
        world_xy = world_xy + v_next[:2] * FRAME_DT
        px = world_to_pixel(world_xy, resolution, half_extent)
        positions.append(px)
        omegas.append(omega_next)
        context.append(StateVector(
            screen_px=px, velocity=v_next,
            bowl_a=context[-1].bowl_a, bowl_gamma=context[-1].bowl_gamma,
            omega=omega_next, euler=context[-1].euler))
    positions = np.array(positions[:horizon])
    if with_angular:
        return positions, np.array(omegas[:horizon])
    return positions, None
