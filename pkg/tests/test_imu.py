import numpy as np
import pytest

from oracles import quat_angle, rk4_preintegration
from slamf.checks import run_check
from slamf.imu import (
    GRAVITY,
    ImuFactor,
    ImuSample,
    ImuState,
    NoiseParams,
    Preintegration,
    RejectedSample,
    bias_blocks,
    correct_for_bias_change,
    forward_simulate,
    imu_error,
    imu_jacobians,
    observed_z,
    preintegrate,
    transition_matrices,
)
from slamf.lie import exp_so3, quat_identity, quat_multiply, quat_normalize, quat_to_rot, rot_to_quat
from slamf.scenarios import vio_problem
from slamf.solver import SolverOptions, solve
from slamf.synth import TrajectorySpec, make_imu_sequence

NOISE = NoiseParams(0.02, 0.002, 1e-3, 1e-4)
TH = slice(3, 6)


def sinusoid(hz=200.0, T=1.0, scale=1.0):
    def acc(t):
        return np.array([np.sin(0.7 * t), 0.8 * np.cos(0.6 * t), 9.81 + 0.5 * np.sin(0.9 * t)]) * [scale, scale, 1]

    def gyr(t):
        return 0.3 * scale * np.array([np.sin(t), 0.8 * np.cos(1.1 * t), 0.6 * np.sin(0.9 * t + 0.4)])

    n = int(round(T * hz))
    return [ImuSample(i / hz, acc(i / hz), gyr(i / hz)) for i in range(n + 1)], acc, gyr


def random_state(rng, ba=None, bg=None):
    return ImuState(
        rng.normal(size=3),
        quat_normalize(rng.normal(size=4)),
        rng.normal(size=3),
        rng.normal(size=3) * 0.05 if ba is None else ba,
        rng.normal(size=3) * 0.01 if bg is None else bg,
    )


def test_zero_signal():
    s = [ImuSample(i * 0.01, np.zeros(3), np.zeros(3)) for i in range(11)]
    pre = preintegrate(s)
    np.testing.assert_array_equal(pre.alpha, 0)
    np.testing.assert_array_equal(pre.beta, 0)
    np.testing.assert_array_equal(pre.gamma, quat_identity())
    assert pre.dt_total == pytest.approx(0.1)


def test_constant_acceleration_closed_form():
    n, dt = 100, 0.005
    tau = n * dt
    s = [ImuSample(i * dt, np.array([1.0, 0, 0]), np.zeros(3)) for i in range(n + 1)]
    pre = preintegrate(s)
    np.testing.assert_allclose(pre.alpha, [0.5 * tau * tau, 0, 0], atol=1e-12)
    np.testing.assert_allclose(pre.beta, [tau, 0, 0], atol=1e-12)
    np.testing.assert_array_equal(pre.gamma, quat_identity())


def test_midpoint_discrepancy_is_second_order():
    errs = []
    for hz in (100.0, 200.0, 400.0):
        s, acc, gyr = sinusoid(hz)
        pre = preintegrate(s)
        a, b, _ = rk4_preintegration(acc, gyr, 1.0, 2000)
        errs.append(np.linalg.norm(pre.alpha - a) + np.linalg.norm(pre.beta - b))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_transition_limit_dt_zero():
    A, B = transition_matrices(np.ones(3), quat_identity(), np.eye(3), np.eye(3), np.ones(3), np.ones(3), 0.0)
    np.testing.assert_array_equal(A, np.eye(15))
    np.testing.assert_array_equal(B, np.zeros((15, 18)))


def test_zero_noise_keeps_covariance_zero():
    s, _, _ = sinusoid()
    pre = preintegrate(s, noise=NoiseParams())
    np.testing.assert_array_equal(pre.P, np.zeros((15, 15)))
    assert np.abs(pre.J - np.eye(15)).max() > 1e-3


def test_covariance_stays_psd():
    s, _, _ = sinusoid()
    pre = Preintegration(noise=NOISE)
    from slamf.imu import propagate_step

    for s0, s1 in zip(s[:-1], s[1:]):
        pre = propagate_step(pre, s0, s1)
        np.testing.assert_array_equal(pre.P, pre.P.T)
        assert np.linalg.eigvalsh(pre.P).min() >= -1e-12


def test_fresh_bias_blocks_are_zero():
    for block in bias_blocks(Preintegration()).values():
        np.testing.assert_array_equal(block, np.zeros((3, 3)))


def test_bias_blocks_match_reintegration():
    for r in run_check("imu_bias", instances=20, seed=1):
        assert r.passed, (r.name, r.max_rel_err)


def test_bias_block_positions_by_unit_probe():
    s, _, _ = sinusoid()
    pre = preintegrate(s)
    jb = bias_blocks(pre)
    h = 1e-5
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        da = preintegrate(s, ba=e).alpha - preintegrate(s, ba=-e).alpha
        np.testing.assert_allclose(da / (2 * h), jb["alpha_ba"][:, axis], rtol=1e-4, atol=1e-7)
        db = preintegrate(s, bg=e).beta - preintegrate(s, bg=-e).beta
        np.testing.assert_allclose(db / (2 * h), jb["beta_bg"][:, axis], rtol=1e-4, atol=1e-7)


def test_observed_z_constant_acceleration():
    a, dt = np.array([0.3, -0.2, 0.5]), 0.7
    xk = ImuState(np.array([1.0, 2, 3]), quat_identity(), np.zeros(3), np.zeros(3), np.zeros(3))
    # world acceleration a - g so the body feels specific force a
    p1 = xk.p + 0.5 * (a - GRAVITY) * dt * dt
    v1 = (a - GRAVITY) * dt
    xk1 = ImuState(p1, quat_identity(), v1, np.zeros(3), np.zeros(3))
    alpha, beta, gamma, dba, dbg = observed_z(xk, xk1, GRAVITY, dt)
    np.testing.assert_allclose(alpha, 0.5 * a * dt * dt, atol=1e-14)
    np.testing.assert_allclose(beta, a * dt, atol=1e-14)
    np.testing.assert_array_equal(gamma, quat_identity())
    np.testing.assert_array_equal(dba, 0)
    np.testing.assert_array_equal(dbg, 0)


def test_observed_z_identical_states():
    rng = np.random.default_rng(2)
    x = random_state(rng)
    dt = 0.4
    alpha, beta, _, _, _ = observed_z(x, x, GRAVITY, dt)
    RT = quat_to_rot(x.q).T
    np.testing.assert_allclose(alpha, RT @ (-x.v * dt + 0.5 * GRAVITY * dt * dt), atol=1e-14)
    x0 = ImuState(x.p, x.q, np.zeros(3), x.ba, x.bg)
    alpha, beta, _, _, _ = observed_z(x0, x0, GRAVITY, dt)
    np.testing.assert_allclose(alpha, 0.5 * RT @ GRAVITY * dt * dt, atol=1e-14)
    np.testing.assert_allclose(beta, RT @ GRAVITY * dt, atol=1e-14)
    with pytest.raises(ValueError):
        observed_z(x, x, GRAVITY, 0.0)


def _consistent(seed=3):
    rng = np.random.default_rng(seed)
    s, _, _ = sinusoid()
    x0 = random_state(rng)
    pre = preintegrate(s, x0.ba, x0.bg, NOISE)
    x1 = forward_simulate(x0, s)[-1]
    return s, pre, x0, x1, rng


def test_error_zero_at_forward_simulated_truth():
    for seed in range(5):
        _, pre, x0, x1, _ = _consistent(seed)
        assert np.abs(imu_error(x0, x1, pre)).max() <= 1e-8


def test_rotation_row_zero_when_gamma_matches():
    rng = np.random.default_rng(4)
    x0, x1 = random_state(rng), random_state(rng)
    pre = Preintegration(gamma=quat_multiply(np.array([1, -1, -1, -1]) * x0.q, x1.q), dt_total=0.5, ba_lin=x0.ba, bg_lin=x0.bg)
    np.testing.assert_allclose(imu_error(x0, x1, pre)[TH], np.zeros(3), atol=1e-15)


def test_double_cover_sign_flip():
    _, pre, x0, x1, rng = _consistent(5)
    x1 = ImuState(x1.p, quat_multiply(x1.q, quat_normalize([1, 0.05, -0.03, 0.02])), x1.v, x1.ba, x1.bg)
    flipped = ImuState(x1.p, -x1.q, x1.v, x1.ba, x1.bg)
    np.testing.assert_allclose(imu_error(x0, flipped, pre), imu_error(x0, x1, pre), atol=1e-15)
    for a, b in zip(imu_jacobians(x0, flipped, pre), imu_jacobians(x0, x1, pre)):
        np.testing.assert_allclose(a, b, atol=1e-14)


def test_jacobian_structure():
    rng = np.random.default_rng(6)
    _, pre, x0, _, _ = _consistent(6)
    x1 = random_state(rng)
    J0, J1, J2, J3 = imu_jacobians(x0, x1, pre)
    RT = quat_to_rot(x0.q).T
    np.testing.assert_array_equal(J0[0:3, 0:3], -RT)
    np.testing.assert_array_equal(J3[6:9, 0:3], RT)
    np.testing.assert_array_equal(J3[9:12, 3:6], np.eye(3))
    np.testing.assert_array_equal(J3[12:15, 6:9], np.eye(3))


def test_jacobians_match_differences():
    for r in run_check("imu", instances=100, seed=7):
        assert r.passed, (r.name, r.max_rel_err)


def test_bias_correction_paths():
    s, _, _ = sinusoid()
    pre = preintegrate(s, np.zeros(3), np.zeros(3))
    same = correct_for_bias_change(pre, np.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(same.alpha, pre.alpha)
    np.testing.assert_array_equal(same.gamma, pre.gamma)
    assert not same.reintegrated
    big = correct_for_bias_change(pre, np.zeros(3), np.array([0.0, 0.0, 2e-3]))
    assert big.reintegrated
    np.testing.assert_array_equal(big.alpha, preintegrate(s, np.zeros(3), np.array([0, 0, 2e-3])).alpha)


def test_bias_correction_is_first_order():
    s, _, _ = sinusoid()
    pre = preintegrate(s)
    rng = np.random.default_rng(8)
    d = np.concatenate([rng.normal(size=3) * 2e-3, rng.normal(size=3) * 2e-4])

    def gap(k):
        ba, bg = d[:3] * k, d[3:] * k
        c = correct_for_bias_change(pre, ba, bg)
        full = preintegrate(s, ba, bg)
        return np.linalg.norm(c.alpha - full.alpha) + np.linalg.norm(c.beta - full.beta) + quat_angle(c.gamma, full.gamma)

    assert not correct_for_bias_change(pre, d[:3], d[3:]).reintegrated
    assert 3.0 < gap(1.0) / gap(0.5) < 5.0


def test_rejected_samples():
    with pytest.raises(RejectedSample):
        preintegrate([ImuSample(0.0, np.zeros(3), np.zeros(3)), ImuSample(0.0, np.zeros(3), np.zeros(3))])
    with pytest.raises(RejectedSample):
        preintegrate([ImuSample(0.0, np.zeros(3), np.zeros(3)), ImuSample(0.2, np.zeros(3), np.zeros(3))])


def test_world_frame_invariance():
    _, pre, x0, _, rng = _consistent(9)
    x1 = random_state(rng)
    Rs = exp_so3([0.4, -1.1, 0.7])
    ts = np.array([3.0, -2.0, 5.0])
    qs = rot_to_quat(Rs)

    def move(x):
        return ImuState(Rs @ x.p + ts, quat_multiply(qs, x.q), Rs @ x.v, x.ba, x.bg)

    a = imu_error(x0, x1, pre, GRAVITY)
    b = imu_error(move(x0), move(x1), pre, Rs @ GRAVITY)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_stationary_sequence_reads_gravity():
    traj = TrajectorySpec(radius=0.0, rate=0.0, z_amp=0.0, yaw_amp=0.0)
    s, states, _ = make_imu_sequence(traj)
    R = quat_to_rot(states[0].q)
    for x in s[::20]:
        np.testing.assert_allclose(x.a, R.T @ GRAVITY, atol=1e-12)
        np.testing.assert_allclose(x.omega, 0, atol=1e-15)


def test_sequence_noise_statistics():
    traj = TrajectorySpec(radius=0.0, rate=0.0, z_amp=0.0, yaw_amp=0.0, duration=25.0, imu_hz=200.0)
    s, _, _ = make_imu_sequence(traj, noise=NoiseParams(0.1, 0.01), seed=3)
    a = np.array([x.a for x in s]) - GRAVITY
    w = np.array([x.omega for x in s])
    assert np.std(a) == pytest.approx(0.1, rel=0.1)
    assert np.std(w) == pytest.approx(0.01, rel=0.1)


def test_factor_information_from_covariance():
    _, pre, x0, x1, _ = _consistent(10)
    f = ImuFactor("a", "b", pre)
    np.testing.assert_allclose(f.information @ pre.P, np.eye(15), atol=1e-6)
    g = ImuFactor("a", "b", preintegrate(sinusoid()[0]))
    np.testing.assert_array_equal(g.information, np.eye(15))


def test_vio_chain_converges():
    prob, gt = vio_problem(seed=0)
    res = solve(prob, SolverOptions(method="lm"))
    assert res.converged
    for k, x in enumerate(gt):
        np.testing.assert_allclose(res.problem.value(f"s{k}").p, x.p, atol=1e-6)
