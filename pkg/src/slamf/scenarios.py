"""Problem builders for the end-to-end scenarios (BA, PGO, line BA, VIO, photometric)."""

from __future__ import annotations

import numpy as np

from .graph import Problem, VariableKind, evaluate_all
from .imu import ImuFactor, NoiseParams, preintegrate
from .lie import exp_se3
from .lines import LineFactor, orthonormal_from_plucker, update_orthonormal
from .photometric import PhotometricFactor
from .reprojection import ReprojectionFactor
from .synth import (
    CounterRng,
    TrajectorySpec,
    discrete_ground_truth,
    make_ba_scene,
    make_imu_sequence,
    make_line_scene,
    make_planar_photometric,
)


def ba_problem(
    n_cams: int = 10,
    n_points: int = 100,
    perturbation: float = 0.05,
    pixel_noise: float = 0.0,
    seed: int = 0,
    n_fixed: int = 2,
) -> tuple[Problem, object]:
    """Cameras and points perturbed from truth; the first ``n_fixed`` cameras pin the gauge."""
    scene = make_ba_scene(n_cams, n_points, pixel_noise, seed)
    rng = CounterRng(seed ^ 0x5EED)
    prob = Problem()
    for i, T in enumerate(scene.poses):
        fixed = i < n_fixed
        init = T if fixed else exp_se3(rng.normals(6, perturbation)) @ T
        prob.add_variable(f"c{i}", VariableKind.POSE_GLOBAL, init, fixed=fixed)
    for j, X in enumerate(scene.points):
        prob.add_variable(f"p{j}", VariableKind.POINT3, X + rng.normals(3, perturbation))
    for ci, pj, uv in scene.observations:
        prob.add_factor(ReprojectionFactor(f"c{ci}", f"p{pj}", scene.K, uv))
    return prob, scene


def line_ba_problem(
    n_lines: int = 6, n_cams: int = 4, perturbation: float = 0.02, pixel_noise: float = 0.0, seed: int = 0
) -> tuple[Problem, object]:
    scene = make_line_scene(n_lines, n_cams, pixel_noise, seed)
    rng = CounterRng(seed ^ 0x11E5)
    prob = Problem()
    for i, T in enumerate(scene.poses):
        prob.add_variable(f"c{i}", VariableKind.POSE_GLOBAL, T, fixed=True)
    for j, L in enumerate(scene.lines):
        o = update_orthonormal(orthonormal_from_plucker(L), rng.normals(4, perturbation))
        prob.add_variable(f"l{j}", VariableKind.ORTHONORMAL_LINE, o)
    for ci, lj, obs in scene.line_observations:
        prob.add_factor(LineFactor(f"c{ci}", f"l{lj}", scene.K, obs))
    return prob, scene


def vio_problem(
    duration: float = 1.0,
    imu_hz: float = 200.0,
    keyframes: int = 5,
    perturbation: float = 0.02,
    noise: NoiseParams | None = None,
    seed: int = 0,
) -> tuple[Problem, list]:
    """IMU-only chain over noiseless samples; ground truth follows the mid-point discretization."""
    traj = TrajectorySpec(duration=duration, imu_hz=imu_hz)
    n = int(round(duration * imu_hz))
    every = max(1, n // keyframes)
    samples, states, idx = make_imu_sequence(traj, seed=seed, keyframe_every=every)
    gt = discrete_ground_truth(samples, states[0], idx)
    noise = noise or NoiseParams(0.02, 0.002, 1e-3, 1e-4)
    rng = CounterRng(seed ^ 0x1A1A)
    prob = Problem()
    for k, x in enumerate(gt):
        init = x if k == 0 else x.boxplus(np.concatenate([rng.normals(9, perturbation), rng.normals(6, perturbation * 0.01)]))
        prob.add_variable(f"s{k}", VariableKind.IMU_STATE, init, fixed=(k == 0))
    for k in range(len(idx) - 1):
        pre = preintegrate(samples[idx[k] : idx[k + 1] + 1], gt[k].ba, gt[k].bg, noise)
        prob.add_factor(ImuFactor(f"s{k}", f"s{k + 1}", pre))
    return prob, gt


def photometric_problem(seed: int = 0, n_points: int = 60, perturbation: float = 0.05):
    host, target, T, pts, K = make_planar_photometric(seed, n_points)
    rng = CounterRng(seed ^ 0xF0F0)
    dw, dv = rng.normals(3), rng.normals(3)
    d = np.concatenate([dw / np.linalg.norm(dw), dv / np.linalg.norm(dv)]) * perturbation
    prob = Problem()
    prob.add_variable("T", VariableKind.POSE_GLOBAL, exp_se3(d) @ T)
    for X in pts:
        prob.add_factor(PhotometricFactor("T", host, target, X, K))
    return prob, T


def pixel_rmse(problem: Problem) -> float:
    """sqrt(mean squared residual norm) over valid factors."""
    evals = [e for e in evaluate_all(problem, jacobians=False) if e.valid]
    if not evals:
        return float("nan")
    return float(np.sqrt(np.mean([e.residual @ e.residual for e in evals])))
