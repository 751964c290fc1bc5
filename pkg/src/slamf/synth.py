"""Deterministic synthetic scenes, trajectories, IMU streams and image fields.

Randomness comes from ``CounterRng``: splitmix64 over a 64-bit counter,
53-bit uniforms, and the cosine branch of Box-Muller for normals.  Every
generator is a pure function of its arguments and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import Intrinsics, project
from .graph import Problem, VariableKind
from .imu import GRAVITY, ImuSample, ImuState, NoiseParams, forward_simulate
from .lie import Pose, exp_se3, exp_so3, rot_to_quat
from .lines import PluckerLine, LineObservation
from .photometric import ImageRaster, OutOfImage
from .pose_graph import BetweenFactor

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class CounterRng:
    """Draw n is splitmix64(seed + (n + 1) * GOLDEN)."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return splitmix64(self.seed + self.counter * GOLDEN)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0**-53)

    def normal(self) -> float:
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int, sigma: float = 1.0) -> np.ndarray:
        return np.array([sigma * self.normal() for _ in range(n)])

    def uniforms(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return np.array([self.uniform(lo, hi) for _ in range(n)])


DEFAULT_K = Intrinsics(400.0, 400.0, 320.0, 240.0)


@dataclass
class Scene:
    poses: list[Pose]
    points: np.ndarray
    K: Intrinsics
    seed: int
    lines: list[PluckerLine] = field(default_factory=list)
    observations: list[tuple[int, int, np.ndarray]] = field(default_factory=list)
    line_observations: list[tuple[int, int, LineObservation]] = field(default_factory=list)


class GenerationError(RuntimeError):
    pass


def look_at(center, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> Pose:
    """World-to-camera pose of a camera at ``center`` looking at ``target``."""
    c = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - c
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    Rwc = np.column_stack([x, y, z])
    return Pose(Rwc.T, -Rwc.T @ c)


def arc_cameras(n_cams: int, radius: float = 6.0, span: float = math.radians(60)) -> list[Pose]:
    poses = []
    for i in range(n_cams):
        a = -span / 2 + span * i / max(n_cams - 1, 1)
        center = (radius * math.sin(a), -radius * math.cos(a), 0.5 + 0.3 * math.sin(3 * a))
        poses.append(look_at(center))
    return poses


def _visible(K: Intrinsics, T: Pose, X, width=640, height=480, zmin=0.3, zmax=30.0) -> bool:
    Xc = T.act(X)
    if not (zmin <= Xc[2] <= zmax):
        return False
    u, v = project(K, Xc)
    return 0.0 <= u <= width - 1 and 0.0 <= v <= height - 1


def make_ba_scene(
    n_cams: int, n_points: int, pixel_noise_sigma: float, seed: int, K: Intrinsics = DEFAULT_K
) -> Scene:
    if n_cams < 2:
        raise GenerationError("need at least two cameras")
    rng = CounterRng(seed)
    poses = arc_cameras(n_cams)
    pts = []
    attempts = 0
    while len(pts) < n_points:
        attempts += 1
        if attempts > 100 * n_points:
            raise GenerationError("could not place points visible in two cameras")
        X = rng.uniforms(3, -1.0, 1.0)
        if sum(_visible(K, T, X) for T in poses) >= 2:
            pts.append(X)
    points = np.array(pts)
    obs = []
    for ci, T in enumerate(poses):
        for pi, X in enumerate(points):
            if _visible(K, T, X):
                obs.append((ci, pi, project(K, T.act(X)) + rng.normals(2, pixel_noise_sigma)))
    return Scene(poses, points, K, seed, observations=obs)


def make_line_scene(
    n_lines: int, n_cams: int, pixel_noise_sigma: float, seed: int, K: Intrinsics = DEFAULT_K
) -> Scene:
    rng = CounterRng(seed)
    poses = arc_cameras(n_cams)
    lines, segs = [], []
    while len(lines) < n_lines:
        P1 = rng.uniforms(3, -1.0, 1.0)
        P2 = rng.uniforms(3, -1.0, 1.0)
        if np.linalg.norm(P2 - P1) < 0.5:
            continue
        if not all(_visible(K, T, P1) and _visible(K, T, P2) for T in poses):
            continue
        lines.append(PluckerLine.from_points(P1, P2))
        segs.append((P1, P2))
    lobs = []
    for ci, T in enumerate(poses):
        for li, (P1, P2) in enumerate(segs):
            s = project(K, T.act(P1)) + rng.normals(2, pixel_noise_sigma)
            e = project(K, T.act(P2)) + rng.normals(2, pixel_noise_sigma)
            lobs.append((ci, li, LineObservation.from_pixels(s[0], s[1], e[0], e[1])))
    return Scene(poses, np.zeros((0, 3)), K, seed, lines=lines, line_observations=lobs)


def ring_poses(n_nodes: int, radius: float = 5.0) -> list[Pose]:
    """Body-to-world poses on a circle, heading along the tangent."""
    out = []
    for k in range(n_nodes):
        a = 2 * math.pi * k / n_nodes
        R = exp_so3([0.0, 0.0, a + math.pi / 2])
        out.append(Pose(R, np.array([radius * math.cos(a), radius * math.sin(a), 0.2 * math.sin(2 * a)])))
    return out


def make_pose_graph(
    n_nodes: int,
    odom_noise: float,
    loop_edges: int,
    seed: int,
    loop_noise: float = 0.0,
    init_perturbation: float = 0.05,
    jr_mode: str = "first_order",
    variant: str = "primary",
) -> tuple[Problem, list[Pose]]:
    """Ring graph; node 0 is fixed.  ``variant='g2o'`` stores z = x_j x_i^-1."""
    if n_nodes < 3:
        raise GenerationError("need at least three nodes")
    rng = CounterRng(seed)
    gt = ring_poses(n_nodes)
    edges = [(k, k + 1, odom_noise) for k in range(n_nodes - 1)]
    for m in range(loop_edges):
        i = (m * n_nodes) // max(loop_edges, 1) % n_nodes
        j = (i + n_nodes - 1) % n_nodes if m == 0 else (i + n_nodes // 2) % n_nodes
        edges.append((j, i, loop_noise) if m == 0 else (i, j, loop_noise))
    prob = Problem()
    for k, x in enumerate(gt):
        init = x if k == 0 else exp_se3(rng.normals(6, init_perturbation)) @ x
        prob.add_variable(f"x{k}", VariableKind.POSE_GLOBAL, init, fixed=(k == 0))
    for i, j, sigma in edges:
        z = gt[i].inverse() @ gt[j] if variant == "primary" else gt[j] @ gt[i].inverse()
        if sigma > 0:
            z = z @ exp_se3(rng.normals(6, sigma))
        prob.add_factor(BetweenFactor(f"x{i}", f"x{j}", z, np.eye(6), jr_mode, variant))
    return prob, gt


# --- IMU --------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectorySpec:
    """Circle in the xy-plane with a vertical bob and a sinusoidal yaw wobble."""

    radius: float = 3.0
    rate: float = 0.5  # rad/s around the circle
    z_amp: float = 0.2
    z_freq: float = 1.0
    yaw_amp: float = 0.3
    yaw_freq: float = 1.5
    duration: float = 1.0
    imu_hz: float = 200.0

    def position(self, t):
        r, w = self.radius, self.rate
        return np.array([r * math.cos(w * t), r * math.sin(w * t), self.z_amp * math.sin(self.z_freq * t)])

    def velocity(self, t):
        r, w = self.radius, self.rate
        return np.array(
            [-r * w * math.sin(w * t), r * w * math.cos(w * t), self.z_amp * self.z_freq * math.cos(self.z_freq * t)]
        )

    def acceleration(self, t):
        r, w = self.radius, self.rate
        return np.array(
            [-r * w * w * math.cos(w * t), -r * w * w * math.sin(w * t), -self.z_amp * self.z_freq**2 * math.sin(self.z_freq * t)]
        )

    def yaw(self, t):
        return self.rate * t + math.pi / 2 + self.yaw_amp * math.sin(self.yaw_freq * t)

    def yaw_rate(self, t):
        return self.rate + self.yaw_amp * self.yaw_freq * math.cos(self.yaw_freq * t)

    def rotation(self, t):
        return exp_so3([0.0, 0.0, self.yaw(t)])

    def specific_force(self, t, g=GRAVITY):
        return self.rotation(t).T @ (self.acceleration(t) + g)

    def body_rate(self, t):
        return np.array([0.0, 0.0, self.yaw_rate(t)])


def make_imu_sequence(
    traj: TrajectorySpec,
    ba=None,
    bg=None,
    noise: NoiseParams | None = None,
    g=GRAVITY,
    seed: int = 0,
    keyframe_every: int | None = None,
) -> tuple[list[ImuSample], list[ImuState], list[int]]:
    """Samples, ground-truth states at keyframes, and the keyframe sample indices."""
    if traj.imu_hz < 50:
        raise GenerationError("IMU rate must be at least 50 Hz")
    rng = CounterRng(seed)
    ba = np.zeros(3) if ba is None else np.asarray(ba, dtype=float)
    bg = np.zeros(3) if bg is None else np.asarray(bg, dtype=float)
    noise = noise or NoiseParams()
    n = int(round(traj.duration * traj.imu_hz))
    samples = []
    for i in range(n + 1):
        t = i / traj.imu_hz
        a = traj.specific_force(t, g) + ba + rng.normals(3, noise.sigma_a)
        w = traj.body_rate(t) + bg + rng.normals(3, noise.sigma_g)
        samples.append(ImuSample(t, a, w))
    every = keyframe_every or n
    idx = list(range(0, n + 1, every))
    states = [
        ImuState(traj.position(samples[i].t), rot_to_quat(traj.rotation(samples[i].t)), traj.velocity(samples[i].t), ba, bg)
        for i in idx
    ]
    return samples, states, idx


def discrete_ground_truth(samples, x0: ImuState, idx: list[int], g=GRAVITY) -> list[ImuState]:
    """States consistent with the mid-point discretization, sampled at ``idx``."""
    traj = forward_simulate(x0, samples, g)
    return [traj[i] for i in idx]


# --- image fields -----------------------------------------------------------


@dataclass(frozen=True)
class GaussianField:
    """Sum of isotropic Gaussians on the pixel plane, with exact gradients."""

    centers: np.ndarray
    sigmas: np.ndarray
    amps: np.ndarray
    offset: float = 0.0
    width: int = 128
    height: int = 128

    def _check(self, p):
        u, v = float(p[0]), float(p[1])
        if not (0.0 <= u <= self.width - 1 and 0.0 <= v <= self.height - 1):
            raise OutOfImage(f"sample ({u:.3f}, {v:.3f}) outside {self.width}x{self.height}")
        return u, v

    def value(self, u, v):
        out = self.offset
        for (cu, cv), s, a in zip(self.centers, self.sigmas, self.amps):
            out = out + a * np.exp(-((u - cu) ** 2 + (v - cv) ** 2) / (2 * s * s))
        return out

    def grad_value(self, u, v):
        gu = gv = 0.0
        for (cu, cv), s, a in zip(self.centers, self.sigmas, self.amps):
            e = a * np.exp(-((u - cu) ** 2 + (v - cv) ** 2) / (2 * s * s))
            gu = gu - e * (u - cu) / (s * s)
            gv = gv - e * (v - cv) / (s * s)
        return np.array([gu, gv])

    def sample(self, p) -> float:
        return float(self.value(*self._check(p)))

    def gradient(self, p) -> np.ndarray:
        return self.grad_value(*self._check(p))

    def rasterize(self) -> ImageRaster:
        vv, uu = np.mgrid[0 : self.height, 0 : self.width].astype(float)
        return ImageRaster(self.value(uu, vv))


@dataclass(frozen=True)
class HomographyWarp:
    """Image whose intensity at p is ``base`` at dehomogenize(H [p, 1])."""

    base: GaussianField
    H: np.ndarray

    def _map(self, p):
        x = self.H @ np.array([p[0], p[1], 1.0])
        return x, x[:2] / x[2]

    def sample(self, p) -> float:
        return self.base.sample(self._map(p)[1])

    def gradient(self, p) -> np.ndarray:
        x, q = self._map(p)
        g = self.base.gradient(q)
        dq = (self.H[:2, :2] * x[2] - np.outer(x[:2], self.H[2, :2])) / x[2] ** 2
        return g @ dq


def make_image_field(seed: int, size: int = 128) -> tuple[GaussianField, ImageRaster]:
    rng = CounterRng(seed)
    centers = np.array([rng.uniforms(2, 0.3 * size, 0.7 * size) for _ in range(3)])
    sigmas = rng.uniforms(3, 0.12 * size, 0.22 * size)
    amps = rng.uniforms(3, 40.0, 100.0)
    f = GaussianField(centers, sigmas, amps, 20.0, size, size)
    return f, f.rasterize()


def plane_homography(K: Intrinsics, T21: Pose, depth: float) -> np.ndarray:
    """Pixel map host <- target for the fronto-parallel host plane Z = depth.

    Host points X (Z = depth) land at T21 X in the target camera.
    """
    n = np.array([0.0, 0.0, 1.0])
    H12 = K.matrix() @ (T21.R + np.outer(T21.t, n) / depth) @ K.inverse_matrix()
    return np.linalg.inv(H12)


def make_planar_photometric(
    seed: int, n_points: int = 60, depth: float = 4.0, K: Intrinsics | None = None
) -> tuple[GaussianField, HomographyWarp, Pose, np.ndarray, Intrinsics]:
    """Host field, warped target image, true relative pose and host-frame points."""
    K = K or Intrinsics(100.0, 100.0, 63.5, 63.5)
    field_, _ = make_image_field(seed)
    rng = CounterRng(seed + 1)
    T = exp_se3(np.concatenate([rng.normals(3, 0.02), rng.normals(3, 0.05)]))
    target = HomographyWarp(field_, plane_homography(K, T, depth))
    pts = []
    while len(pts) < n_points:
        u, v = rng.uniforms(2, 20.0, 107.0)
        X = np.array([(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth])
        p2 = project(K, T.act(X))
        if 20.0 <= p2[0] <= 107.0 and 20.0 <= p2[1] <= 107.0:
            pts.append(X)
    return field_, target, T, np.array(pts), K

