"""Direct intensity residual with bilinear sampling.

Any object with ``sample(p)`` and ``gradient(p)`` works as an image; the
raster below is the concrete one, analytic fields in ``synth`` are the other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .camera import Intrinsics, project, projection_jacobian
from .errors import InvalidEvaluation
from .graph import Factor
from .lie import Pose, hat3

GRADIENT_STEP = 0.5


class OutOfImage(InvalidEvaluation):
    pass


class Image(Protocol):
    def sample(self, p) -> float: ...

    def gradient(self, p) -> np.ndarray: ...


@dataclass(frozen=True)
class ImageRaster:
    """Row-major intensities; ``data[v, u]``."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 2 or d.shape[0] < 2 or d.shape[1] < 2:
            raise ValueError("raster must be at least 2x2")
        if not np.all(np.isfinite(d)):
            raise ValueError("raster intensities must be finite")
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def sample(self, p) -> float:
        return bilinear_sample(self, p)

    def gradient(self, p) -> np.ndarray:
        return image_gradient(self, p)


def bilinear_sample(img: ImageRaster, p) -> float:
    u, v = float(p[0]), float(p[1])
    if not (0.0 <= u <= img.width - 1 and 0.0 <= v <= img.height - 1):
        raise OutOfImage(f"sample ({u:.3f}, {v:.3f}) outside {img.width}x{img.height}")
    u0 = min(int(np.floor(u)), img.width - 2)
    v0 = min(int(np.floor(v)), img.height - 2)
    a, b = u - u0, v - v0
    d = img.data
    return float(
        (1 - a) * (1 - b) * d[v0, u0]
        + a * (1 - b) * d[v0, u0 + 1]
        + (1 - a) * b * d[v0 + 1, u0]
        + a * b * d[v0 + 1, u0 + 1]
    )


def image_gradient(img: ImageRaster, p) -> np.ndarray:
    u, v = float(p[0]), float(p[1])
    if not (1.0 <= u <= img.width - 2 and 1.0 <= v <= img.height - 2):
        raise OutOfImage(f"gradient at ({u:.3f}, {v:.3f}) too close to the border")
    h = GRADIENT_STEP
    gu = bilinear_sample(img, (u + h, v)) - bilinear_sample(img, (u - h, v))
    gv = bilinear_sample(img, (u, v + h)) - bilinear_sample(img, (u, v - h))
    return np.array([gu, gv]) / (2 * h)


def photometric_error(img1: Image, img2: Image, T: Pose, X, K: Intrinsics) -> np.ndarray:
    """Host camera sits at the origin; X is expressed in the host frame."""
    p1 = project(K, X)
    p2 = project(K, T.act(X))
    return np.array([img1.sample(p1) - img2.sample(p2)])


def jacobian_pose_se3(img2: Image, T: Pose, X, K: Intrinsics) -> np.ndarray:
    Xp = T.act(X)
    g = img2.gradient(project(K, Xp))
    P = np.hstack([-hat3(Xp), np.eye(3)])
    return -(g @ projection_jacobian(K, Xp) @ P).reshape(1, 6)


@dataclass
class PhotometricFactor(Factor):
    pose: str
    img1: Image
    img2: Image
    X: np.ndarray
    K: Intrinsics
    information: np.ndarray = None

    def __post_init__(self):
        self.keys = (self.pose,)
        self.X = np.asarray(self.X, dtype=float)
        if self.information is None:
            self.information = np.eye(1)

    def error(self, values):
        return photometric_error(self.img1, self.img2, values[0], self.X, self.K)

    def linearize(self, values):
        T = values[0]
        return self.error(values), [jacobian_pose_se3(self.img2, T, self.X, self.K)]
