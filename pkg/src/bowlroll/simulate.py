"""Ball-in-bowl dynamics: a point mass constrained to the offset surface
of an ellipsoidal bowl, stepped at 120 Hz and emitted at 40 fps.

The bowl is the lower half of x'^2/a^2 + y'^2 + (z'-1)^2 = 1, where the
primed frame is the world rotated by -gamma about z. The ball center lives
on the surface at inward distance rho from the wall. Translational motion
is a frictionless slide with per-second velocity damping; spin is attached
kinematically through the rolling identity omega = (n x v) / rho, so the
angular velocity is a deterministic function of the motion.
"""

from dataclasses import dataclass, field

import numpy as np

Z_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass
class BowlGeometry:
    a: float          # x semi-axis, in [0.5, 1]
    gamma: float      # rotation about z, in [-pi/2, pi/2]

    def __post_init__(self):
        if not 0.5 <= self.a <= 1.0:
            raise ValueError(f"bowl semi-axis a={self.a} outside [0.5, 1]")
        if not -np.pi / 2 <= self.gamma <= np.pi / 2:
            raise ValueError(f"bowl rotation gamma={self.gamma} outside [-pi/2, pi/2]")

    @property
    def center(self):
        return np.array([0.0, 0.0, 1.0])

    def to_bowl_frame(self, p):
        return rot_z(-self.gamma) @ np.asarray(p, dtype=np.float64)

    def to_world(self, p):
        return rot_z(self.gamma) @ np.asarray(p, dtype=np.float64)

    def implicit(self, p):
        """F(p); zero on the surface, negative inside."""
        q = self.to_bowl_frame(p)
        return q[0] ** 2 / self.a ** 2 + q[1] ** 2 + (q[2] - 1.0) ** 2 - 1.0


@dataclass
class BallState:
    c: np.ndarray          # center position
    v: np.ndarray          # linear velocity, units/s
    rot: np.ndarray        # orientation, 3x3 rotation matrix
    omega: np.ndarray      # angular velocity, rad/s

    def copy(self):
        return BallState(self.c.copy(), self.v.copy(), self.rot.copy(), self.omega.copy())


@dataclass
class SimulationConfig:
    rho: float = 0.04
    gravity: float = 9.81
    damping: float = 0.1          # per-second velocity retention base: v *= (1-d)^dt
    dt_internal: float = 1.0 / 120.0
    emit_every: int = 3           # 120 Hz internal -> 40 fps emitted

    def __post_init__(self):
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must be in [0, 1)")
        if abs(self.dt_internal * self.emit_every - 1.0 / 40.0) > 1e-12:
            raise ValueError("dt_internal * emit_every must equal 1/40 s")


@dataclass
class Trajectory:
    """Ground truth for one emitted 40 fps run.

    Screen positions are world screen coordinates (orthographic projection
    of the centers); the dataset layer converts them to pixels once a
    resolution is chosen.
    """
    times: np.ndarray        # (T,)
    centers: np.ndarray      # (T, 3)
    screen: np.ndarray       # (T, 2)
    velocities: np.ndarray   # (T, 3)
    omegas: np.ndarray       # (T, 3)
    orientations: np.ndarray # (T, 3, 3), needed to render the painted ball
    geometry: BowlGeometry = None
    init_record: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def euler_xyz_rotation(angles):
    """Intrinsic x-y-z Euler angles to a rotation matrix."""
    ax, ay, az = angles
    return rot_x(ax) @ rot_y(ay) @ rot_z(az)


def rotation_exp(omega, dt):
    """Rodrigues: the rotation advancing an orientation by omega*dt."""
    theta = np.linalg.norm(omega) * dt
    if theta < 1e-14:
        return np.eye(3)
    axis = omega / np.linalg.norm(omega)
    kx = np.array([[0.0, -axis[2], axis[1]],
                   [axis[2], 0.0, -axis[0]],
                   [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)


def bowl_inward_normal(p, geometry, tol=1e-9):
    """Unit normal at a surface point, pointing into the bowl's interior."""
    if abs(geometry.implicit(p)) > tol:
        raise ValueError(f"point is off the bowl surface by F={geometry.implicit(p):.3e}")
    q = geometry.to_bowl_frame(p)
    grad = np.array([2.0 * q[0] / geometry.a ** 2, 2.0 * q[1], 2.0 * (q[2] - 1.0)])
    n = -grad / np.linalg.norm(grad)
    return geometry.to_world(n)


def nearest_surface_point(c, geometry, max_iter=50):
    """Closest point on the full ellipsoid to c, via the Lagrange root.

    Solves sum_i w_i^2 e_i^2 / (e_i^2 + t)^2 = 1 for the largest root t,
    which gives the nearest point for interior and exterior c alike. The
    hemispherical bowl case (a = 1) short-circuits to the radial formula.
    """
    c = np.asarray(c, dtype=np.float64)
    if geometry.a == 1.0:
        w = c - geometry.center
        r = np.linalg.norm(w)
        if r < 1e-12:
            raise ValueError("center of the bowl sphere has no unique nearest point")
        return geometry.center + w / r
    q = geometry.to_bowl_frame(c)
    w = q - np.array([0.0, 0.0, 1.0])
    e2 = np.array([geometry.a ** 2, 1.0, 1.0])
    wn = np.linalg.norm(w)
    if wn < 1e-12:
        raise ValueError("ellipsoid center has no unique nearest point")

    def g(t):
        return np.sum(w ** 2 * e2 / (e2 + t) ** 2) - 1.0

    def dg(t):
        return -2.0 * np.sum(w ** 2 * e2 / (e2 + t) ** 3)

    # g is strictly decreasing on (-min e^2, inf) with a single root there.
    lo = -np.min(e2[np.abs(w) > 1e-300]) if np.any(np.abs(w) > 1e-300) else -np.min(e2)
    lo += 1e-12
    hi = max(0.0, wn * np.max(np.sqrt(e2))) + 1.0
    while g(hi) > 0.0:
        hi = 2.0 * hi + 1.0
    t = 0.0  # inside (lo, hi): lo < 0 since every semi-axis is positive
    converged = False
    for _ in range(max_iter):
        val = g(t)
        if abs(val) < 1e-13:
            converged = True
            break
        if val > 0.0:
            lo = t
        else:
            hi = t
        step = val / dg(t)
        t_new = t - step
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        t = t_new
    if not converged and abs(g(t)) > 1e-10:
        raise ValueError("nearest-point iteration did not converge in "
                         f"{max_iter} steps (degenerate input {c})")
    x = w * e2 / (e2 + t) + np.array([0.0, 0.0, 1.0])
    return geometry.to_world(x)


def constraint_normal(c, geometry):
    """Inward surface normal below a ball center on or near the offset surface."""
    foot = nearest_surface_point(c, geometry)
    return bowl_inward_normal(foot, geometry, tol=1e-6)


def project_center_to_offset(c, geometry, rho, max_iter=50):
    """Pull a center onto the surface at inward distance exactly rho.

    Idempotent: points already on the offset surface map to themselves.
    """
    foot = nearest_surface_point(c, geometry, max_iter=max_iter)
    n = bowl_inward_normal(foot, geometry, tol=1e-6)
    return foot + rho * n


def tangential_project(v, n):
    """Remove the normal component: v - (v.n) n."""
    v = np.asarray(v, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return v - np.dot(v, n) * n


def mechanical_energy(state, config):
    """Unit-mass translational energy: 0.5 |v|^2 + g * c_z."""
    return 0.5 * float(np.dot(state.v, state.v)) + config.gravity * float(state.c[2])


def orthographic_project(q):
    """Downward-looking orthographic camera: (x, y, z) images at (x, y)."""
    q = np.asarray(q, dtype=np.float64)
    return q[..., :2].copy()


def world_to_pixel(p, resolution, half_extent):
    """Affine map from world screen coords to continuous pixel coords."""
    if resolution < 2 or half_extent <= 0:
        raise ValueError("resolution must be >= 2 and half_extent > 0")
    p = np.asarray(p, dtype=np.float64)
    return (p + half_extent) / (2.0 * half_extent) * resolution


def pixel_to_world(px, resolution, half_extent):
    px = np.asarray(px, dtype=np.float64)
    return px / resolution * 2.0 * half_extent - half_extent


def sample_initial_conditions(rng, case, config):
    """Draw a bowl and a ball release per the scenario's distributions.

    Bowl case: hemisphere (a = 1). Ellipse cases: a ~ U[0.5, 1]. Both get
    a z-rotation gamma ~ U[-pi/2, pi/2]. The ball starts on the offset
    surface at elevation theta ~ U[-9pi/10, -pi/2] (psi = -theta - pi/2
    away from the bottom axis), azimuth phi ~ U[-pi, pi], with a random
    orientation and a tangentially projected velocity whose components
    v_x, v_y are drawn from U[5, 10] with random signs.
    """
    if case == "bowl":
        a = 1.0
    elif case in ("ellipse", "ellipse_plain"):
        a = float(rng.uniform(0.5, 1.0))
    else:
        raise ValueError(f"unknown scenario case {case!r}")
    gamma = float(rng.uniform(-np.pi / 2, np.pi / 2))
    theta = float(rng.uniform(-9.0 * np.pi / 10.0, -np.pi / 2))
    phi = float(rng.uniform(-np.pi, np.pi))
    euler = rng.uniform(-np.pi, np.pi, size=3)
    vx = float(rng.uniform(5.0, 10.0)) * (1.0 if rng.integers(0, 2) else -1.0)
    vy = float(rng.uniform(5.0, 10.0)) * (1.0 if rng.integers(0, 2) else -1.0)

    geometry = BowlGeometry(a=a, gamma=gamma)
    psi = -theta - np.pi / 2
    surface_local = np.array([a * np.sin(psi) * np.cos(phi),
                              np.sin(psi) * np.sin(phi),
                              1.0 - np.cos(psi)])
    surface = geometry.to_world(surface_local)
    n = bowl_inward_normal(surface, geometry)
    c = surface + config.rho * n
    v = tangential_project(np.array([vx, vy, 0.0]), n)
    omega = np.cross(n, v) / config.rho
    state = BallState(c=c, v=v, rot=euler_xyz_rotation(euler), omega=omega)
    record = {"a": a, "gamma": gamma, "theta": theta, "phi": phi,
              "euler": [float(x) for x in euler], "v_init": [vx, vy]}
    return geometry, state, record


def simulate_step(state, geometry, config):
    """One 120 Hz substep of the constrained slide.

    The gravity kick is split symmetrically around the position update
    (half before, half after, each projected tangentially at its own
    contact normal); a plain one-sided kick leaks energy quadratically in
    dt and misses the drift budget over long runs. Between the kicks:
    damping, position advance, constraint projection, and a
    speed-preserving re-tangentialization. Spin follows from the rolling
    identity at the new state.
    """
    dt = config.dt_internal
    gravity_half = config.gravity * (0.5 * dt) * np.array([0.0, 0.0, -1.0])
    n_old = constraint_normal(state.c, geometry)
    v = tangential_project(state.v + gravity_half, n_old)
    v = v * (1.0 - config.damping) ** dt
    speed = np.linalg.norm(v)
    c = state.c + v * dt
    c = project_center_to_offset(c, geometry, config.rho)
    n_new = constraint_normal(c, geometry)
    v = tangential_project(v, n_new)
    vt_norm = np.linalg.norm(v)
    if vt_norm > 1e-300:
        v = v * (speed / vt_norm)
    v = tangential_project(v + gravity_half, n_new)
    omega = np.cross(n_new, v) / config.rho
    rot = rotation_exp(omega, dt) @ state.rot
    return BallState(c=c, v=v, rot=rot, omega=omega)


def simulate_trajectory(init_state, geometry, config, n_frames, init_record=None):
    """Run the 120 Hz integrator and record every emit_every-th state."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    state = init_state.copy()
    times, centers, screens = [], [], []
    vels, omegas, rots = [], [], []
    for frame in range(n_frames):
        if frame > 0:
            for _ in range(config.emit_every):
                state = simulate_step(state, geometry, config)
        t = frame * config.emit_every * config.dt_internal
        times.append(t)
        centers.append(state.c.copy())
        screens.append(orthographic_project(state.c))
        vels.append(state.v.copy())
        omegas.append(state.omega.copy())
        rots.append(state.rot.copy())
    return Trajectory(times=np.array(times), centers=np.array(centers),
                      screen=np.array(screens), velocities=np.array(vels),
                      omegas=np.array(omegas), orientations=np.array(rots),
                      geometry=geometry,
                      init_record=dict(init_record or {}))


def constraint_residual(state, geometry, config):
    """How far the state sits from the constraint manifold (test helper)."""
    foot = nearest_surface_point(state.c, geometry)
    dist = np.linalg.norm(state.c - foot)
    n = bowl_inward_normal(foot, geometry, tol=1e-6)
    return {
        "offset": abs(dist - config.rho),
        "normal_velocity": abs(float(np.dot(state.v, n))),
        "rolling": abs(np.linalg.norm(state.omega) * config.rho - np.linalg.norm(state.v)),
    }
