"""Small factors used to exercise the graph and solver on problems with known answers."""

from dataclasses import dataclass, field

import numpy as np

from slamf.graph import Factor


@dataclass
class AffineFactor(Factor):
    """e = A x - b on one vector-valued variable."""

    key: str
    A: np.ndarray
    b: np.ndarray
    information: np.ndarray = None

    def __post_init__(self):
        self.keys = (self.key,)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.information is None:
            self.information = np.eye(self.A.shape[0])

    def linearize(self, values):
        return self.A @ np.atleast_1d(values[0]) - self.b, [self.A]


@dataclass
class DifferenceFactor(Factor):
    """e = x_j - x_i - z between two vector variables."""

    i: str
    j: str
    z: np.ndarray
    information: np.ndarray = field(default=None)

    def __post_init__(self):
        self.keys = (self.i, self.j)
        n = len(self.z)
        if self.information is None:
            self.information = np.eye(n)

    def linearize(self, values):
        n = len(self.z)
        return values[1] - values[0] - self.z, [-np.eye(n), np.eye(n)]
