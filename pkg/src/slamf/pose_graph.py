"""SE(3) relative-pose residuals for pose-graph optimization.

Node Jacobians are taken under left perturbation x <- exp(d) x, so nodes
are registered as ``VariableKind.POSE_GLOBAL``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Factor
from .lie import Pose, adjoint_se3, inv_right_jacobian_se3_approx, log_se3

JR_MODES = ("identity", "first_order")


def relative_pose_error(xi: Pose, xj: Pose, zij: Pose) -> np.ndarray:
    return log_se3(zij.inverse() @ xi.inverse() @ xj)


def jacobians_relative_pose(
    xi: Pose, xj: Pose, zij: Pose, jr_mode: str = "first_order"
) -> tuple[np.ndarray, np.ndarray]:
    if jr_mode not in JR_MODES:
        raise ValueError(f"jr_mode must be one of {JR_MODES}")
    e = relative_pose_error(xi, xj, zij)
    Jr = inv_right_jacobian_se3_approx(e) if jr_mode == "first_order" else np.eye(6)
    A = Jr @ adjoint_se3(xj.inverse())
    return -A, A


def g2o_variant_error(xi: Pose, xj: Pose, zij: Pose) -> np.ndarray:
    """Variant residual log(xj^-1 z xi); consistent when z = xj xi^-1."""
    return log_se3(xj.inverse() @ zij @ xi)


def jacobians_g2o_variant(xi: Pose, xj: Pose, zij: Pose) -> tuple[np.ndarray, np.ndarray]:
    # both BCH Jacobians approximated by the identity
    return adjoint_se3(xj.inverse() @ zij), -adjoint_se3(xi.inverse() @ zij.inverse())


@dataclass
class BetweenFactor(Factor):
    i: str
    j: str
    z: Pose
    information: np.ndarray = None
    jr_mode: str = "first_order"
    variant: str = "primary"

    def __post_init__(self):
        self.keys = (self.i, self.j)
        if self.information is None:
            self.information = np.eye(6)
        if self.variant not in ("primary", "g2o"):
            raise ValueError("variant must be 'primary' or 'g2o'")
        if self.jr_mode not in JR_MODES:
            raise ValueError(f"jr_mode must be one of {JR_MODES}")

    def error(self, values):
        xi, xj = values
        if self.variant == "g2o":
            return g2o_variant_error(xi, xj, self.z)
        return relative_pose_error(xi, xj, self.z)

    def linearize(self, values):
        xi, xj = values
        if self.variant == "g2o":
            return g2o_variant_error(xi, xj, self.z), list(jacobians_g2o_variant(xi, xj, self.z))
        e = relative_pose_error(xi, xj, self.z)
        return e, list(jacobians_relative_pose(xi, xj, self.z, self.jr_mode))
