"""Pinhole intrinsics, projection and the line intrinsic matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidEvaluation

EPS_DEPTH = 1e-9


class DegenerateDepth(InvalidEvaluation):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @staticmethod
    def from_vector(k) -> "Intrinsics":
        return Intrinsics(*(float(x) for x in k))

    def vector(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy])

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


def dehomogenize(Xc) -> np.ndarray:
    X, Y, Z = Xc
    if abs(Z) <= EPS_DEPTH:
        raise DegenerateDepth(f"depth {Z!r} at or behind the camera")
    return np.array([X / Z, Y / Z])


def project(K: Intrinsics, Xc) -> np.ndarray:
    u, v = dehomogenize(Xc)
    return np.array([K.fx * u + K.cx, K.fy * v + K.cy])


def back_project(K: Intrinsics, p, Z: float) -> np.ndarray:
    if Z <= 0:
        raise ValueError("back-projection depth must be positive")
    return np.array([Z * (p[0] - K.cx) / K.fx, Z * (p[1] - K.cy) / K.fy, Z])


def projection_jacobian(K: Intrinsics, Xc) -> np.ndarray:
    """d project / d Xc, the 2x3 product of the K and dehomogenize blocks."""
    X, Y, Z = Xc
    if abs(Z) <= EPS_DEPTH:
        raise DegenerateDepth(f"depth {Z!r} at or behind the camera")
    iz = 1.0 / Z
    return np.array(
        [
            [K.fx * iz, 0.0, -K.fx * X * iz * iz],
            [0.0, K.fy * iz, -K.fy * Y * iz * iz],
        ]
    )


def line_intrinsic(K: Intrinsics) -> np.ndarray:
    return np.array(
        [
            [K.fy, 0.0, 0.0],
            [0.0, K.fx, 0.0],
            [-K.fy * K.cx, -K.fx * K.cy, K.fx * K.fy],
        ]
    )
