"""Point reprojection residual and its analytic Jacobians.

Poses map world points into the camera frame (X' = R X + t) and are
perturbed on the left, T <- exp(d) T.  Residuals are observed minus
predicted, so every Jacobian carries the leading minus sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import EPS_DEPTH, DegenerateDepth, Intrinsics, back_project, project, projection_jacobian
from .errors import InvalidEvaluation
from .graph import Factor
from .lie import Pose, hat3


def reprojection_error(T: Pose, X, K: Intrinsics, p_obs) -> np.ndarray:
    return np.asarray(p_obs, dtype=float) - project(K, T.act(X))


def jacobian_pose_so3(T: Pose, X, K: Intrinsics) -> np.ndarray:
    """2x6 d e / d [dw | dt], written out entry by entry."""
    Xp, Yp, Zp = T.act(X)
    if abs(Zp) <= EPS_DEPTH:
        raise DegenerateDepth(f"depth {Zp!r} at or behind the camera")
    fx, fy = K.fx, K.fy
    x, y = Xp / Zp, Yp / Zp
    J = np.array(
        [
            [-fx * x * y, fx * (1.0 + x * x), -fx * y, fx / Zp, 0.0, -fx * x / Zp],
            [-fy * (1.0 + y * y), fy * x * y, fy * x, 0.0, fy / Zp, -fy * y / Zp],
        ]
    )
    return -J


def pose_chain_blocks(T: Pose, X, K: Intrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Homogeneous chain factors (2x3, 3x4, 4x6) whose product is d p_hat / d xi."""
    Xp, Yp, Zp = T.act(X)
    if abs(Zp) <= EPS_DEPTH:
        raise DegenerateDepth(f"depth {Zp!r} at or behind the camera")
    Kt = np.array([[K.fx, 0.0, K.cx], [0.0, K.fy, K.cy]])
    D = np.array(
        [
            [1.0 / Zp, 0.0, -Xp / Zp**2, 0.0],
            [0.0, 1.0 / Zp, -Yp / Zp**2, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    P = np.zeros((4, 6))
    P[:3, :3] = -hat3([Xp, Yp, Zp])
    P[:3, 3:] = np.eye(3)
    return Kt, D, P


def jacobian_point(T: Pose, X, K: Intrinsics) -> np.ndarray:
    return -projection_jacobian(K, T.act(X)) @ T.R


def two_view_pixel(T: Pose, K: Intrinsics, p1, Z: float) -> np.ndarray:
    """Pixel in the second view of the host pixel p1 back-projected at depth Z."""
    return project(K, T.act(back_project(K, p1, Z)))


def jacobian_intrinsics(T: Pose, K: Intrinsics, p1, Z: float) -> np.ndarray:
    """d p2 / d [fx, fy, cx, cy] where p2 = project(K, T back_project(K, p1, Z))."""
    if Z <= EPS_DEPTH:
        raise DegenerateDepth("host depth must be positive")
    Xp = T.act(back_project(K, p1, Z))
    Zp = Xp[2]
    if abs(Zp) <= EPS_DEPTH:
        raise DegenerateDepth(f"depth {Zp!r} at or behind the camera")
    u2, v2 = Xp[0] / Zp, Xp[1] / Zp
    r = T.R
    s = Z / Zp
    du, dv = p1[0] - K.cx, p1[1] - K.cy
    fx, fy = K.fx, K.fy
    au = r[2, 0] * u2 - r[0, 0]
    bu = r[2, 1] * u2 - r[0, 1]
    av = r[2, 0] * v2 - r[1, 0]
    bv = r[2, 1] * v2 - r[1, 1]
    return np.array(
        [
            [u2 + s * au * du / fx, fx * s * bu * dv / fy**2, s * au + 1.0, fx / fy * s * bu],
            [fy * s * av * du / fx**2, v2 + s * bv * dv / fy, fy / fx * s * av, s * bv + 1.0],
        ]
    )


def inverse_depth_pixel(T: Pose, K: Intrinsics, p1, rho: float) -> np.ndarray:
    if rho <= 0:
        raise InvalidEvaluation("inverse depth must be positive")
    Xh = K.inverse_matrix() @ np.array([p1[0], p1[1], 1.0])
    return project(K, T.act(Xh / rho))


def jacobian_inverse_depth(T: Pose, K: Intrinsics, p1, rho: float) -> np.ndarray:
    """2x1 d p2 / d rho."""
    if rho <= 0:
        raise InvalidEvaluation("inverse depth must be positive")
    Xh = K.inverse_matrix() @ np.array([p1[0], p1[1], 1.0])
    Xp = T.act(Xh / rho)
    if abs(Xp[2]) <= EPS_DEPTH:
        raise DegenerateDepth(f"depth {Xp[2]!r} at or behind the camera")
    rho_p = 1.0 / Xp[2]
    u2, v2 = Xp[0] * rho_p, Xp[1] * rho_p
    tx, ty, tz = T.t
    return (-rho_p / rho * np.array([K.fx * (u2 * tz - tx), K.fy * (v2 * tz - ty)])).reshape(2, 1)


def jacobian_quaternion(X) -> np.ndarray:
    """d (q X q*) / d q_xyz at the identity quaternion."""
    return -2.0 * hat3(X)


@dataclass
class ReprojectionFactor(Factor):
    """Camera pose (left-updated) and 3D point observed at ``p_obs``."""

    cam: str
    point: str
    K: Intrinsics
    p_obs: np.ndarray
    information: np.ndarray = None

    def __post_init__(self):
        self.keys = (self.cam, self.point)
        self.p_obs = np.asarray(self.p_obs, dtype=float)
        if self.information is None:
            self.information = np.eye(2)

    def error(self, values):
        T, X = values
        return reprojection_error(T, X, self.K, self.p_obs)

    def linearize(self, values):
        T, X = values
        e = reprojection_error(T, X, self.K, self.p_obs)
        return e, [jacobian_pose_so3(T, X, self.K), jacobian_point(T, X, self.K)]


@dataclass
class InverseDepthFactor(Factor):
    """Host pixel ``p1`` with unknown inverse depth, observed at ``p_obs`` through fixed ``T``."""

    rho: str
    T: Pose
    K: Intrinsics
    p1: np.ndarray
    p_obs: np.ndarray
    information: np.ndarray = None

    def __post_init__(self):
        self.keys = (self.rho,)
        self.p_obs = np.asarray(self.p_obs, dtype=float)
        if self.information is None:
            self.information = np.eye(2)

    def error(self, values):
        (rho,) = values
        return self.p_obs - inverse_depth_pixel(self.T, self.K, self.p1, float(rho[0]))

    def linearize(self, values):
        (rho,) = values
        r = float(rho[0])
        return self.error(values), [-jacobian_inverse_depth(self.T, self.K, self.p1, r)]
