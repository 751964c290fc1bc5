"""Analytic-vs-numeric Jacobian sweeps over seeded random instances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .camera import Intrinsics, project
from .graph import VariableKind as VK
from .imu import ImuFactor, ImuSample, ImuState, NoiseParams, bias_blocks, forward_simulate, preintegrate
from .lie import Pose, exp_se3, quat_conjugate, quat_exp, quat_multiply, quat_normalize, quat_rotate
from .lines import LineFactor, LineObservation, PluckerLine, orthonormal_from_plucker
from .numdiff import H_DEFAULT, H_PHOTOMETRIC, factor_numeric_jacobians, max_relative_error, mismatch_rows
from .photometric import PhotometricFactor
from .pose_graph import BetweenFactor
from .reprojection import (
    InverseDepthFactor,
    ReprojectionFactor,
    inverse_depth_pixel,
    jacobian_intrinsics,
    jacobian_inverse_depth,
    jacobian_quaternion,
    two_view_pixel,
)
from .synth import CounterRng, GaussianField, make_image_field

Pair = tuple[str, np.ndarray, np.ndarray]


def _pose(rng: CounterRng, rot: float = 0.5, trans: float = 1.0) -> Pose:
    return exp_se3(np.concatenate([rng.normals(3, rot), rng.normals(3, trans)]))


def _intrinsics(rng: CounterRng) -> Intrinsics:
    return Intrinsics(rng.uniform(200, 600), rng.uniform(200, 600), rng.uniform(280, 360), rng.uniform(200, 280))


def _camera_point(rng: CounterRng, T: Pose) -> np.ndarray:
    Z = rng.uniform(0.5, 10.0)
    Xc = np.array([rng.uniform(-0.8, 0.8) * Z, rng.uniform(-0.6, 0.6) * Z, Z])
    return T.inverse().act(Xc)


def _reprojection(rng: CounterRng, h: float) -> Iterator[Pair]:
    T = _pose(rng)
    X = _camera_point(rng, T)
    K = _intrinsics(rng)
    f = ReprojectionFactor("c", "p", K, project(K, T.act(X)) + rng.normals(2, 2.0))
    _, (Jp, Jx) = f.linearize([T, X])
    Np, Nx = factor_numeric_jacobians(f, [VK.POSE_GLOBAL, VK.POINT3], [T, X], h)
    yield "reprojection_pose", Jp, Np
    yield "reprojection_point", Jx, Nx


def _intrinsics_check(rng: CounterRng, h: float) -> Iterator[Pair]:
    K = _intrinsics(rng)
    while True:
        T = _pose(rng, 0.2, 0.5)
        p1 = np.array([rng.uniform(50, 590), rng.uniform(50, 430)])
        Z = rng.uniform(1.0, 10.0)
        Zp = T.act(np.array([(p1[0] - K.cx) / K.fx * Z, (p1[1] - K.cy) / K.fy * Z, Z]))[2]
        if Zp > 0.5:
            break
    k = K.vector()
    cols = []
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        cols.append(
            (two_view_pixel(T, Intrinsics.from_vector(k + e), p1, Z) - two_view_pixel(T, Intrinsics.from_vector(k - e), p1, Z))
            / (2 * h)
        )
    yield "intrinsics", jacobian_intrinsics(T, K, p1, Z), np.column_stack(cols)


def _inverse_depth(rng: CounterRng, h: float) -> Iterator[Pair]:
    K = _intrinsics(rng)
    while True:
        T = _pose(rng, 0.2, 0.5)
        p1 = np.array([rng.uniform(50, 590), rng.uniform(50, 430)])
        rho = rng.uniform(0.1, 2.0)
        Xh = K.inverse_matrix() @ np.array([p1[0], p1[1], 1.0])
        if T.act(Xh / rho)[2] > 0.5:
            break
    f = InverseDepthFactor("r", T, K, p1, inverse_depth_pixel(T, K, p1, rho))
    (N,) = factor_numeric_jacobians(f, [VK.INVERSE_DEPTH], [np.array([rho])], h)
    yield "inverse_depth", jacobian_inverse_depth(T, K, p1, rho), -N


def _quaternion(rng: CounterRng, h: float) -> Iterator[Pair]:
    X = rng.normals(3, 2.0)
    cols = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        qp = quat_normalize(np.concatenate([[1.0], e]))
        qm = quat_normalize(np.concatenate([[1.0], -e]))
        cols.append((quat_rotate(qp, X) - quat_rotate(qm, X)) / (2 * h))
    yield "quaternion", jacobian_quaternion(X), np.column_stack(cols)


_FIELD: GaussianField | None = None


def _photometric(rng: CounterRng, h: float) -> Iterator[Pair]:
    global _FIELD
    if _FIELD is None:
        _FIELD, _ = make_image_field(7)
    K = Intrinsics(100.0, 100.0, 63.5, 63.5)
    while True:
        T = _pose(rng, 0.05, 0.1)
        Z = rng.uniform(2.0, 8.0)
        X = np.array([rng.uniform(-0.4, 0.4) * Z, rng.uniform(-0.4, 0.4) * Z, Z])
        Xp = T.act(X)
        if Xp[2] > 0.5:
            p2 = project(K, Xp)
            if 15 <= p2[0] <= 112 and 15 <= p2[1] <= 112:
                break
    f = PhotometricFactor("T", _FIELD, _FIELD, X, K)
    _, (J,) = f.linearize([T])
    (N,) = factor_numeric_jacobians(f, [VK.POSE_GLOBAL], [T], h)
    yield "photometric", J, N


def _pgo(rng: CounterRng, h: float) -> Iterator[Pair]:
    xi, xj = _pose(rng, 0.8, 2.0), _pose(rng, 0.8, 2.0)
    f = BetweenFactor("i", "j", xi.inverse() @ xj)
    _, (Ji, Jj) = f.linearize([xi, xj])
    Ni, Nj = factor_numeric_jacobians(f, [VK.POSE_GLOBAL] * 2, [xi, xj], h)
    yield "pgo_i", Ji, Ni
    yield "pgo_j", Jj, Nj
    g = BetweenFactor("i", "j", xj @ xi.inverse(), variant="g2o")
    _, (Gi, Gj) = g.linearize([xi, xj])
    Mi, Mj = factor_numeric_jacobians(g, [VK.POSE_GLOBAL] * 2, [xi, xj], h)
    yield "pgo_g2o_i", Gi, Mi
    yield "pgo_g2o_j", Gj, Mj


def _line(rng: CounterRng, h: float) -> Iterator[Pair]:
    K = _intrinsics(rng)
    T = _pose(rng, 0.3, 0.5)
    P1 = _camera_point(rng, T)
    P2 = _camera_point(rng, T)
    o = orthonormal_from_plucker(PluckerLine.from_points(P1, P2))
    s = project(K, T.act(P1)) + rng.normals(2, 3.0)
    e = project(K, T.act(P2)) + rng.normals(2, 3.0)
    f = LineFactor("c", "l", K, LineObservation.from_pixels(s[0], s[1], e[0], e[1]))
    _, (Jxi, Jth) = f.linearize([T, o])
    Nxi, Nth = factor_numeric_jacobians(f, [VK.POSE_GLOBAL, VK.ORTHONORMAL_LINE], [T, o], h)
    yield "line_theta", Jth, Nth
    yield "line_xi", Jxi, Nxi


def _imu_samples(rng: CounterRng, n: int = 40, hz: float = 200.0) -> list[ImuSample]:
    amp_a, amp_w = rng.normals(3, 1.0), rng.normals(3, 0.5)
    fr = rng.uniforms(6, 0.5, 3.0)
    base_a = np.array([0.0, 0.0, 9.81]) + rng.normals(3, 0.3)
    base_w = rng.normals(3, 0.2)
    out = []
    for i in range(n + 1):
        t = i / hz
        a = base_a + amp_a * np.sin(fr[:3] * t)
        w = base_w + amp_w * np.cos(fr[3:] * t)
        out.append(ImuSample(t, a, w))
    return out


def _imu_instance(rng: CounterRng):
    samples = _imu_samples(rng)
    ba, bg = rng.normals(3, 0.05), rng.normals(3, 0.01)
    pre = preintegrate(samples, ba, bg, NoiseParams(0.02, 0.002, 1e-3, 1e-4))
    x0 = ImuState(rng.normals(3), quat_normalize(rng.normals(4)), rng.normals(3), ba, bg)
    x1 = forward_simulate(x0, samples)[-1]
    x1 = ImuState(
        x1.p + rng.normals(3, 0.05),
        quat_normalize(quat_multiply(x1.q, quat_exp(rng.normals(3, 0.05)))),
        x1.v + rng.normals(3, 0.05),
        x1.ba + rng.normals(3, 0.01),
        x1.bg + rng.normals(3, 0.001),
    )
    return samples, pre, x0, x1


def _imu(rng: CounterRng, h: float) -> Iterator[Pair]:
    _, pre, x0, x1 = _imu_instance(rng)
    f = ImuFactor("k", "k1", pre)
    _, (Ja, Jb) = f.linearize([x0, x1])
    Na, Nb = factor_numeric_jacobians(f, [VK.IMU_STATE] * 2, [x0, x1], h)
    yield "imu_j0", Ja[:, :6], Na[:, :6]
    yield "imu_j1", Ja[:, 6:], Na[:, 6:]
    yield "imu_j2", Jb[:, :6], Nb[:, :6]
    yield "imu_j3", Jb[:, 6:], Nb[:, 6:]


def _imu_bias(rng: CounterRng, h: float) -> Iterator[Pair]:
    samples, pre, _, _ = _imu_instance(rng)
    jb = bias_blocks(pre)
    num = {}
    for which in ("ba", "bg"):
        ca, cb, cg = [], [], []
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            sp = (pre.ba_lin + e, pre.bg_lin) if which == "ba" else (pre.ba_lin, pre.bg_lin + e)
            sm = (pre.ba_lin - e, pre.bg_lin) if which == "ba" else (pre.ba_lin, pre.bg_lin - e)
            p, m = preintegrate(samples, *sp), preintegrate(samples, *sm)
            ca.append((p.alpha - m.alpha) / (2 * h))
            cb.append((p.beta - m.beta) / (2 * h))
            cg.append(quat_multiply(quat_conjugate(m.gamma), p.gamma)[1:] / h)
        num[f"alpha_{which}"] = np.column_stack(ca)
        num[f"beta_{which}"] = np.column_stack(cb)
        num[f"gamma_{which}"] = np.column_stack(cg)
    for k, block in jb.items():
        yield f"imu_bias_{k}", block, num[k]


@dataclass(frozen=True)
class CheckSpec:
    fn: Callable[[CounterRng, float], Iterator[Pair]]
    rtol: float
    h: float


CHECKS: dict[str, CheckSpec] = {
    "reprojection": CheckSpec(_reprojection, 1e-5, H_DEFAULT),
    "intrinsics": CheckSpec(_intrinsics_check, 1e-5, H_DEFAULT),
    "inverse_depth": CheckSpec(_inverse_depth, 1e-5, H_DEFAULT),
    "quaternion": CheckSpec(_quaternion, 1e-5, H_DEFAULT),
    "photometric": CheckSpec(_photometric, 1e-4, H_PHOTOMETRIC),
    "pgo": CheckSpec(_pgo, 1e-5, H_DEFAULT),
    "line": CheckSpec(_line, 1e-5, H_DEFAULT),
    "imu": CheckSpec(_imu, 1e-4, H_DEFAULT),
    "imu_bias": CheckSpec(_imu_bias, 1e-4, H_DEFAULT),
}


@dataclass
class CheckResult:
    name: str
    instances: int
    max_rel_err: float
    threshold: float
    worst: list = None

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.threshold


def run_check(factor: str, instances: int = 100, seed: int = 0, h: float | None = None) -> list[CheckResult]:
    """One result per Jacobian produced by ``factor``."""
    chk = CHECKS[factor]
    step = chk.h if h is None else h
    rng = CounterRng(seed * 1000003 + sum(map(ord, factor)))
    best: dict[str, CheckResult] = {}
    for _ in range(instances):
        for label, A, N in chk.fn(rng, step):
            err = max_relative_error(A, N)
            r = best.setdefault(label, CheckResult(label, 0, -1.0, chk.rtol))
            r.instances += 1
            if err > r.max_rel_err:
                r.max_rel_err, r.worst = err, mismatch_rows(A, N)
    return list(best.values())
