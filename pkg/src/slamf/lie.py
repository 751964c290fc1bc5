"""SO(3)/SE(3) group operations and Hamilton quaternions.

Twists are ordered ``[w, v]`` (rotation first) everywhere in the package.
Quaternions are numpy arrays ``[w, x, y, z]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidEvaluation

EXP_SMALL = 1e-6
JAC_SMALL = 1e-4
LOG_PI_MARGIN = 1e-6
_NEAR_PI = 1e-2


class LieDomainError(InvalidEvaluation):
    """Raised when a log map is requested on the cut locus."""


def hat3(w) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee3(W: np.ndarray) -> np.ndarray:
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation in the Frobenius sense (polar factor)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def exp_so3(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    W = hat3(w)
    if th < EXP_SMALL:
        return np.eye(3) + W + 0.5 * W @ W
    return np.eye(3) + np.sin(th) / th * W + (1.0 - np.cos(th)) / th**2 * W @ W


def _canonical_axis(a: np.ndarray) -> np.ndarray:
    for c in a:
        if abs(c) > 1e-12:
            return a if c > 0 else -a
    return a


def log_so3(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    s_vec = 0.5 * vee3(R - R.T)
    s = np.linalg.norm(s_vec)
    c = 0.5 * (np.trace(R) - 1.0)
    th = np.arctan2(s, c)
    if th < EXP_SMALL:
        return s_vec
    if np.pi - th > _NEAR_PI:
        return th / s * s_vec
    # near pi: the antisymmetric part is tiny, read the axis off the symmetric part
    S = 0.5 * (R + R.T)
    A = (S - c * np.eye(3)) / (1.0 - c)
    k = int(np.argmax(np.diag(A)))
    a = A[:, k] / np.sqrt(A[k, k])
    a /= np.linalg.norm(a)
    d = a @ s_vec
    if abs(d) > 1e-15:
        a = a if d > 0 else -a
    else:
        a = _canonical_axis(a)
    return th * a


def left_jacobian_so3(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    W = hat3(w)
    if th < JAC_SMALL:
        return np.eye(3) + 0.5 * W + W @ W / 6.0
    return (
        np.eye(3)
        + (1.0 - np.cos(th)) / th**2 * W
        + (th - np.sin(th)) / th**3 * W @ W
    )


def left_jacobian_so3_inv(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    W = hat3(w)
    if th < JAC_SMALL:
        return np.eye(3) - 0.5 * W + W @ W / 12.0
    k = 1.0 / th**2 - (1.0 + np.cos(th)) / (2.0 * th * np.sin(th))
    return np.eye(3) - 0.5 * W + k * W @ W


def right_jacobian_so3(w) -> np.ndarray:
    return left_jacobian_so3(-np.asarray(w, dtype=float))


@dataclass(frozen=True)
class Pose:
    """Rigid transform x -> R x + t."""

    R: np.ndarray
    t: np.ndarray

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(M: np.ndarray) -> "Pose":
        return Pose(np.array(M[:3, :3], dtype=float), np.array(M[:3, 3], dtype=float))

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.t
        return M

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.t)

    def act(self, X) -> np.ndarray:
        return self.R @ np.asarray(X, dtype=float) + self.t

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.R @ other.R, self.R @ other.t + self.t)

    def normalized(self) -> "Pose":
        return Pose(orthonormalize(self.R), self.t)


def exp_se3(xi) -> Pose:
    xi = np.asarray(xi, dtype=float)
    w, v = xi[:3], xi[3:]
    return Pose(exp_so3(w), left_jacobian_so3(w) @ v)


def log_se3(T: Pose) -> np.ndarray:
    w = log_so3(T.R)
    if np.linalg.norm(w) >= np.pi - LOG_PI_MARGIN:
        raise LieDomainError("rotation angle too close to pi for log_se3")
    return np.concatenate([w, left_jacobian_so3_inv(w) @ T.t])


def hat6(xi) -> np.ndarray:
    """4x4 matrix form of a [w, v] twist."""
    M = np.zeros((4, 4))
    M[:3, :3] = hat3(xi[:3])
    M[:3, 3] = xi[3:]
    return M


def adjoint_se3(T: Pose) -> np.ndarray:
    A = np.zeros((6, 6))
    A[:3, :3] = T.R
    A[3:, :3] = hat3(T.t) @ T.R
    A[3:, 3:] = T.R
    return A


def ad_se3(xi) -> np.ndarray:
    """Lie bracket matrix: ad(a) b = [a, b] for [w, v] twists."""
    w, v = hat3(xi[:3]), hat3(xi[3:])
    A = np.zeros((6, 6))
    A[:3, :3] = w
    A[3:, :3] = v
    A[3:, 3:] = w
    return A


def inv_right_jacobian_se3_approx(xi) -> np.ndarray:
    """First-order inverse right Jacobian I + ad(xi)/2."""
    return np.eye(6) + 0.5 * ad_se3(np.asarray(xi, dtype=float))


# --- quaternions -----------------------------------------------------------


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_multiply(q1, q2) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q) -> np.ndarray:
    """Unit norm with the w >= 0 representative of the double cover."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    return -q if q[0] < 0 else q


def quat_rotate(q, p) -> np.ndarray:
    return quat_multiply(quat_multiply(q, np.concatenate([[0.0], p])), quat_conjugate(q))[1:]


def quat_from_small_angle(theta) -> np.ndarray:
    return quat_normalize(np.concatenate([[1.0], 0.5 * np.asarray(theta, dtype=float)]))


def quat_exp(theta) -> np.ndarray:
    """Exact unit quaternion for the rotation vector theta."""
    theta = np.asarray(theta, dtype=float)
    th = np.linalg.norm(theta)
    if th < EXP_SMALL:
        return quat_normalize(np.concatenate([[1.0 - th**2 / 8.0], 0.5 * theta]))
    return np.concatenate([[np.cos(th / 2)], np.sin(th / 2) / th * theta])


def quat_left_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [[w, -x, -y, -z], [x, w, -z, y], [y, z, w, -x], [z, -y, x, w]]
    )


def quat_right_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [[w, -x, -y, -z], [x, w, z, -y], [y, -z, w, x], [z, y, -x, w]]
    )


def quat_to_rot(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    # Shepperd: pivot on the largest of (trace, diagonal)
    tr = np.trace(R)
    k = int(np.argmax([tr, R[0, 0], R[1, 1], R[2, 2]]))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return quat_normalize(q)
