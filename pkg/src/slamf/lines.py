"""Plücker lines, the orthonormal (U, W) parameterization and line residuals.

A line through P1 and P2 is stored as [m : d] with m = P1 x P2 and
d = P2 - P1, so it transforms consistently with points X_c = R X + t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, line_intrinsic
from .errors import InvalidEvaluation
from .graph import Factor
from .lie import Pose, exp_so3, hat3, orthonormalize

NORMAL_EPS = 1e-18


class DegenerateLine(InvalidEvaluation):
    pass


@dataclass(frozen=True)
class PluckerLine:
    m: np.ndarray
    d: np.ndarray

    @staticmethod
    def from_points(P1, P2) -> "PluckerLine":
        P1 = np.asarray(P1, dtype=float)
        P2 = np.asarray(P2, dtype=float)
        return PluckerLine(np.cross(P1, P2), P2 - P1)

    @staticmethod
    def from_vector(L) -> "PluckerLine":
        L = np.asarray(L, dtype=float)
        return PluckerLine(L[:3].copy(), L[3:].copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.m, self.d])

    def klein(self) -> float:
        return float(self.m @ self.d)


@dataclass(frozen=True)
class OrthonormalLine:
    U: np.ndarray
    W: np.ndarray

    @property
    def w1(self) -> float:
        return float(self.W[0, 0])

    @property
    def w2(self) -> float:
        return float(self.W[0, 1])


@dataclass(frozen=True)
class LineObservation:
    xs: np.ndarray
    xe: np.ndarray

    @staticmethod
    def from_pixels(us, vs, ue, ve) -> "LineObservation":
        return LineObservation(np.array([us, vs, 1.0]), np.array([ue, ve, 1.0]))


def line_transform_matrix(T: Pose) -> np.ndarray:
    A = np.zeros((6, 6))
    A[:3, :3] = T.R
    A[:3, 3:] = hat3(T.t) @ T.R
    A[3:, 3:] = T.R
    return A


def transform_line(T: Pose, L: PluckerLine) -> PluckerLine:
    return PluckerLine(T.R @ L.m + np.cross(T.t, T.R @ L.d), T.R @ L.d)


def project_line(KL: np.ndarray, Lc: PluckerLine) -> np.ndarray:
    if not np.any(Lc.m):
        raise DegenerateLine("line passes through the optical center")
    return KL @ Lc.m


def line_reprojection_error(l, obs: LineObservation) -> np.ndarray:
    l = np.asarray(l, dtype=float)
    n2 = l[0] ** 2 + l[1] ** 2
    if n2 <= NORMAL_EPS:
        raise DegenerateLine("image line has a vanishing normal")
    return np.array([obs.xs @ l, obs.xe @ l]) / np.sqrt(n2)


def orthonormal_from_plucker(L: PluckerLine) -> OrthonormalLine:
    nm, nd = np.linalg.norm(L.m), np.linalg.norm(L.d)
    if nm == 0.0 or nd == 0.0:
        raise DegenerateLine("orthonormal form needs nonzero moment and direction")
    u1 = L.m / nm
    c = np.cross(L.m, L.d)
    u3 = c / np.linalg.norm(c)
    u2 = np.cross(u3, u1)
    n = np.hypot(nm, nd)
    w1, w2 = nm / n, nd / n
    return OrthonormalLine(np.column_stack([u1, u2, u3]), np.array([[w1, w2], [-w2, w1]]))


def plucker_from_orthonormal(o: OrthonormalLine) -> PluckerLine:
    return PluckerLine(o.w1 * o.U[:, 0], o.w2 * o.U[:, 1])


def rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def update_orthonormal(o: OrthonormalLine, delta) -> OrthonormalLine:
    delta = np.asarray(delta, dtype=float)
    return OrthonormalLine(orthonormalize(o.U @ exp_so3(delta[:3])), o.W @ rot2(delta[3]))


def de_dl(l, obs: LineObservation) -> np.ndarray:
    l = np.asarray(l, dtype=float)
    n2 = l[0] ** 2 + l[1] ** 2
    if n2 <= NORMAL_EPS:
        raise DegenerateLine("image line has a vanishing normal")
    n = np.sqrt(n2)
    rows = []
    for x in (obs.xs, obs.xe):
        xl = x @ l
        rows.append([x[0] - l[0] * xl / n2, x[1] - l[1] * xl / n2, x[2]])
    return np.array(rows) / n


def dl_dLc(KL: np.ndarray) -> np.ndarray:
    return np.hstack([KL, np.zeros((3, 3))])


def dLw_dtheta(o: OrthonormalLine) -> np.ndarray:
    u1, u2, u3 = o.U.T
    w1, w2 = o.w1, o.w2
    z = np.zeros(3)
    cols = [
        (z, w2 * u3),
        (-w1 * u3, z),
        (w1 * u2, -w2 * u1),
        (w2 * u1, -w1 * u2),
    ]
    return np.column_stack([np.concatenate(c) for c in cols])


def dLc_dxi(Lc: PluckerLine) -> np.ndarray:
    """Left pose perturbation of the camera-frame line, columns [dw | dv]."""
    A = np.zeros((6, 6))
    A[:3, :3] = -hat3(Lc.m)
    A[:3, 3:] = -hat3(Lc.d)
    A[3:, :3] = -hat3(Lc.d)
    return A


def line_error(T: Pose, K: Intrinsics, o: OrthonormalLine, obs: LineObservation) -> np.ndarray:
    Lc = transform_line(T, plucker_from_orthonormal(o))
    return line_reprojection_error(project_line(line_intrinsic(K), Lc), obs)


def line_jacobians(
    T: Pose, K: Intrinsics, o: OrthonormalLine, obs: LineObservation
) -> tuple[np.ndarray, np.ndarray]:
    """(J_theta 2x4, J_xi 2x6)."""
    KL = line_intrinsic(K)
    Lc = transform_line(T, plucker_from_orthonormal(o))
    l = project_line(KL, Lc)
    head = de_dl(l, obs) @ dl_dLc(KL)
    return head @ line_transform_matrix(T) @ dLw_dtheta(o), head @ dLc_dxi(Lc)


@dataclass
class LineFactor(Factor):
    """Camera pose (left-updated) observing an orthonormal line."""

    cam: str
    line: str
    K: Intrinsics
    obs: LineObservation
    information: np.ndarray = None

    def __post_init__(self):
        self.keys = (self.cam, self.line)
        if self.information is None:
            self.information = np.eye(2)

    def error(self, values):
        T, o = values
        return line_error(T, self.K, o, self.obs)

    def linearize(self, values):
        T, o = values
        J_theta, J_xi = line_jacobians(T, self.K, o, self.obs)
        return line_error(T, self.K, o, self.obs), [J_xi, J_theta]
