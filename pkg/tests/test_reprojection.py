import numpy as np
import pytest

from slamf.camera import DegenerateDepth, Intrinsics, project
from slamf.checks import run_check
from slamf.graph import VariableKind as VK
from slamf.lie import Pose, exp_se3, exp_so3, hat3
from slamf.numdiff import factor_numeric_jacobians, max_relative_error
from slamf.reprojection import (
    InverseDepthFactor,
    ReprojectionFactor,
    inverse_depth_pixel,
    jacobian_intrinsics,
    jacobian_inverse_depth,
    jacobian_point,
    jacobian_pose_so3,
    jacobian_quaternion,
    pose_chain_blocks,
    reprojection_error,
)

K100 = Intrinsics(100, 100, 320, 240)
K1 = Intrinsics(1, 1, 0, 0)


def random_case(rng):
    T = exp_se3(np.concatenate([rng.normal(size=3) * 0.5, rng.normal(size=3)]))
    Z = rng.uniform(0.5, 10)
    Xc = np.array([rng.uniform(-0.8, 0.8) * Z, rng.uniform(-0.6, 0.6) * Z, Z])
    K = Intrinsics(*rng.uniform(200, 600, 2), rng.uniform(280, 360), rng.uniform(200, 280))
    return T, T.inverse().act(Xc), K


def test_error_substitution():
    assert np.all(reprojection_error(Pose.identity(), [1, 2, 4], K100, [345, 290]) == 0)
    np.testing.assert_allclose(reprojection_error(Pose.identity(), [1, 2, 4], K100, [346, 288]), [1, -2])


def test_pose_jacobian_on_axis():
    T = Pose.identity()
    J = jacobian_pose_so3(T, [0, 0, 1], K1)
    np.testing.assert_array_equal(-J, [[0, 1, 0, 1, 0, 0], [-1, 0, 0, 0, 1, 0]])
    J = jacobian_pose_so3(T, [0, 0, 2.5], Intrinsics(300, 300, 0, 0))
    np.testing.assert_allclose(J[:, 3:5], -np.diag([120.0, 120.0]))


def test_chain_product_equals_explicit_entries():
    rng = np.random.default_rng(0)
    for _ in range(500):
        T, X, K = random_case(rng)
        Kt, D, P = pose_chain_blocks(T, X, K)
        np.testing.assert_allclose(-(Kt @ D @ P), jacobian_pose_so3(T, X, K), rtol=0, atol=1e-12 * K.fx)


def test_chain_first_row_second_column():
    # the (1,2) entry of the chain is f (1 + x^2) with x = X'/Z', not (1 + X'^2)/Z'^2
    T = Pose.identity()
    X = np.array([2.0, 0.0, 4.0])
    J = -jacobian_pose_so3(T, X, K100)
    assert J[0, 1] == pytest.approx(100 * (1 + 0.25))
    assert J[0, 1] != pytest.approx(100 * (1 + 4.0) / 16.0)


def test_point_jacobian_axis_and_rotation():
    np.testing.assert_array_equal(jacobian_point(Pose.identity(), [0, 0, 1], K1), -np.array([[1, 0, 0], [0, 1, 0]]))
    rng = np.random.default_rng(1)
    for _ in range(20):
        R = exp_so3(rng.normal(size=3))
        Xc = np.array([0.3, -0.2, 2.0])
        T = Pose(R, Xc - R @ np.array([0.1, 0.2, 0.3]))
        J0 = jacobian_point(Pose.identity(), Xc, K100)
        np.testing.assert_allclose(jacobian_point(T, [0.1, 0.2, 0.3], K100), J0 @ R, atol=1e-12)


def test_intrinsics_jacobian_substitution():
    K = Intrinsics(450, 420, 300, 250)
    np.testing.assert_allclose(jacobian_intrinsics(Pose.identity(), K, [100, 80], 3.0), 0, atol=1e-12)
    Z = 3.0
    J = jacobian_intrinsics(Pose(np.eye(3), np.array([0, 0, 1.0])), K, [100, 80], Z)
    assert J[0, 2] == pytest.approx(1 - Z / (Z + 1))


def test_inverse_depth_substitution():
    K = Intrinsics(450, 420, 300, 250)
    p1 = np.array([100.0, 80.0])
    np.testing.assert_array_equal(jacobian_inverse_depth(Pose.identity(), K, p1, 0.5), np.zeros((2, 1)))
    tau, rho = 0.7, 0.5
    T = Pose(np.eye(3), np.array([0, 0, tau]))
    Xh = np.array([(p1[0] - K.cx) / K.fx, (p1[1] - K.cy) / K.fy, 1.0])
    Xp = Xh / rho + [0, 0, tau]
    rho_p = 1 / Xp[2]
    u2, v2 = Xp[0] * rho_p, Xp[1] * rho_p
    expect = -rho_p / rho * np.array([[K.fx * u2 * tau], [K.fy * v2 * tau]])
    np.testing.assert_allclose(jacobian_inverse_depth(T, K, p1, rho), expect, rtol=1e-14)


def test_quaternion_jacobian_substitution():
    np.testing.assert_array_equal(jacobian_quaternion([1, 2, 3]), [[0, 6, -4], [-6, 0, 2], [4, -2, 0]])
    np.testing.assert_array_equal(jacobian_quaternion([0, 0, 0]), np.zeros((3, 3)))


def test_factor_jacobians_match_differences():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(200):
        T, X, K = random_case(rng)
        f = ReprojectionFactor("c", "p", K, project(K, T.act(X)) + rng.normal(size=2))
        _, J = f.linearize([T, X])
        N = factor_numeric_jacobians(f, [VK.POSE_GLOBAL, VK.POINT3], [T, X])
        worst = max(worst, *(max_relative_error(a, n) for a, n in zip(J, N)))
    assert worst < 1e-5


@pytest.mark.parametrize("name", ["reprojection", "intrinsics", "inverse_depth", "quaternion"])
def test_registry_sweeps(name):
    for r in run_check(name, instances=100, seed=3):
        assert r.passed, (r.name, r.max_rel_err)


def test_inverse_depth_factor_residual():
    K = Intrinsics(450, 420, 300, 250)
    T = exp_se3([0.05, -0.02, 0.01, 0.2, 0.0, 0.1])
    p1 = np.array([280.0, 230.0])
    f = InverseDepthFactor("r", T, K, p1, inverse_depth_pixel(T, K, p1, 0.4))
    np.testing.assert_allclose(f.error([np.array([0.4])]), 0, atol=1e-12)


def test_degenerate_depth():
    with pytest.raises(DegenerateDepth):
        jacobian_pose_so3(Pose.identity(), [1, 1, 0], K100)
    X = np.array([1.0, 2.0, 3.0])
    assert np.allclose(hat3(X) @ X, 0)
