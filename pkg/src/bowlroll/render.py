"""Orthographic raycaster for the bowl scene.

A downward-looking camera images world (x, y) directly; each pixel casts a
vertical ray and keeps the highest hit among the ball sphere and the lower
half of the bowl ellipsoid. Shading is ambient-only: pixel = energy * albedo,
background black. The bowl carries a two-tone checkerboard over its surface
angles; the ball is either flat white or painted with one color per
body-frame octant so spin is visible.
"""

from dataclasses import dataclass, field

import numpy as np

# the ball must stay the brightest object in view so it is localizable at
# desk resolutions; octant tints differ enough to make spin visible without
# turning rotation into frame-to-frame flicker
BOWL_TONES = (0.25, 0.55)
BALL_PALETTE = np.array([
    [1.00, 0.80, 0.80],
    [0.80, 1.00, 0.80],
    [0.80, 0.80, 1.00],
    [1.00, 1.00, 0.80],
    [1.00, 0.80, 1.00],
    [0.80, 1.00, 1.00],
    [1.00, 1.00, 1.00],
    [1.00, 0.90, 0.80],
])


@dataclass
class RenderConfig:
    resolution: int = 64
    half_extent: float = 1.1
    ambient: float = 0.7
    ball_textured: bool = True
    bowl_bands_phi: int = 8
    bowl_bands_psi: int = 4
    camera_height: float = 3.0   # recorded only; orthography ignores it

    def pixel_centers(self):
        """World coordinates of pixel centers along one axis (row 0 at -E)."""
        w = self.resolution
        return (np.arange(w) + 0.5) / w * 2.0 * self.half_extent - self.half_extent


@dataclass
class HitRecord:
    kind: str                      # "ball" | "bowl" | "background"
    point: np.ndarray = None
    surface: dict = field(default_factory=dict)


def _bowl_hit_z(x, y, geometry):
    """z of the lower ellipsoid shell under (x, y); nan where the ray misses."""
    cg, sg = np.cos(geometry.gamma), np.sin(geometry.gamma)
    xb = cg * x + sg * y
    yb = -sg * x + cg * y
    rr = 1.0 - xb ** 2 / geometry.a ** 2 - yb ** 2
    z = np.where(rr >= 0.0, 1.0 - np.sqrt(np.maximum(rr, 0.0)), np.nan)
    return z, xb, yb


def _ball_hit_z(x, y, ball, rho):
    """z of the upper ball surface under (x, y); nan where the ray misses."""
    dx = x - ball.c[0]
    dy = y - ball.c[1]
    h2 = rho ** 2 - dx ** 2 - dy ** 2
    return np.where(h2 >= 0.0, ball.c[2] + np.sqrt(np.maximum(h2, 0.0)), np.nan)


def ray_intersections(x, y, geometry, ball, rho):
    """Trace the vertical ray through world (x, y) and report the front hit.

    The ball wins whenever its hit sits above the bowl's along the ray.
    """
    zball = float(_ball_hit_z(np.float64(x), np.float64(y), ball, rho))
    zbowl, xb, yb = _bowl_hit_z(np.float64(x), np.float64(y), geometry)
    zbowl = float(zbowl)
    if np.isfinite(zball) and (not np.isfinite(zbowl) or zball > zbowl):
        p = np.array([x, y, zball])
        body = ball.rot.T @ (p - ball.c)
        return HitRecord("ball", p, {"body": body})
    if np.isfinite(zbowl):
        p = np.array([x, y, zbowl])
        cos_psi = np.clip(1.0 - zbowl, -1.0, 1.0)
        psi = float(np.arccos(cos_psi))
        phi = float(np.arctan2(yb, xb / geometry.a))
        return HitRecord("bowl", p, {"psi": psi, "phi": phi})
    return HitRecord("background")


def _bowl_tone(psi, phi, config):
    band_psi = np.minimum((psi / (np.pi / 2) * config.bowl_bands_psi).astype(int),
                          config.bowl_bands_psi - 1)
    band_phi = np.minimum(((phi + np.pi) / (2 * np.pi) * config.bowl_bands_phi).astype(int),
                          config.bowl_bands_phi - 1)
    return np.where((band_psi + band_phi) % 2 == 0, BOWL_TONES[1], BOWL_TONES[0])


def _ball_octant(body):
    """Palette index from the signs of the body-frame coordinates."""
    bx, by, bz = body[..., 0], body[..., 1], body[..., 2]
    return ((bx < 0).astype(int) << 2) | ((by < 0).astype(int) << 1) | (bz < 0).astype(int)


def surface_albedo(hit, config):
    """RGB reflectance of a ball or bowl hit; background has no albedo."""
    if hit.kind == "ball":
        if not config.ball_textured:
            return np.array([1.0, 1.0, 1.0])
        return BALL_PALETTE[int(_ball_octant(hit.surface["body"]))].copy()
    if hit.kind == "bowl":
        tone = float(_bowl_tone(np.asarray(hit.surface["psi"]),
                                np.asarray(hit.surface["phi"]), config))
        return np.array([tone, tone, tone])
    raise ValueError("background hits have no albedo")


def render_frame(geometry, ball, config, rho):
    """Render one H x W x 3 frame; pure function of its inputs.

    Row index follows increasing world y, column index increasing world x,
    matching the pixel map used for the error metrics.
    """
    if config.half_extent < 1.0 + rho:
        raise ValueError("viewport half-extent must cover the bowl footprint")
    coords = config.pixel_centers()
    x = coords[None, :]
    y = coords[:, None]
    xg, yg = np.broadcast_arrays(x, y)

    zball = _ball_hit_z(xg, yg, ball, rho)
    zbowl, xb, yb = _bowl_hit_z(xg, yg, geometry)
    ball_hit = np.isfinite(zball) & (~np.isfinite(zbowl) | (zball > zbowl))
    bowl_hit = np.isfinite(zbowl) & ~ball_hit

    img = np.zeros((config.resolution, config.resolution, 3))

    if bowl_hit.any():
        cos_psi = np.clip(1.0 - zbowl[bowl_hit], -1.0, 1.0)
        psi = np.arccos(cos_psi)
        phi = np.arctan2(yb[bowl_hit], xb[bowl_hit] / geometry.a)
        img[bowl_hit] = _bowl_tone(psi, phi, config)[:, None]

    if ball_hit.any():
        if config.ball_textured:
            pts = np.stack([xg, yg, np.where(ball_hit, zball, 0.0)], axis=-1)
            body = (pts - ball.c) @ ball.rot   # row vectors times R == R^T p
            img[ball_hit] = BALL_PALETTE[_ball_octant(body)[ball_hit]]
        else:
            img[ball_hit] = 1.0

    return config.ambient * img


def render_sequence(trajectory, config, indices, rho):
    """Render the requested emitted frames of a trajectory."""
    frames = []
    for idx in indices:
        if not 0 <= idx < len(trajectory):
            raise IndexError(f"frame index {idx} outside trajectory of length {len(trajectory)}")
        ball = _frame_ball(trajectory, idx)
        frames.append(render_frame(trajectory.geometry, ball, config, rho))
    return np.array(frames)


def _frame_ball(trajectory, idx):
    from .simulate import BallState
    return BallState(c=trajectory.centers[idx], v=trajectory.velocities[idx],
                     rot=trajectory.orientations[idx], omega=trajectory.omegas[idx])
