"""Mid-point IMU preintegration, its error state, and the 15-dim IMU residual.

Error-state and residual ordering is [dalpha, dtheta, dbeta, dba, dbg].
Accelerometers measure specific force; with g_w = (0, 0, +9.81) the world
acceleration is R a - g_w.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidEvaluation
from .graph import Factor
from .lie import (
    hat3,
    quat_conjugate,
    quat_from_small_angle,
    quat_identity,
    quat_left_matrix,
    quat_multiply,
    quat_normalize,
    quat_right_matrix,
    quat_to_rot,
)

GRAVITY = np.array([0.0, 0.0, 9.81])
DT_MAX = 0.05
REINTEGRATE_BG = 1e-3
REINTEGRATE_BA = 1e-2

A_, TH, B_, BA, BG = (slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15))


class RejectedSample(InvalidEvaluation):
    pass


@dataclass(frozen=True)
class ImuSample:
    t: float
    a: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class ImuState:
    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    ba: np.ndarray
    bg: np.ndarray

    def boxplus(self, delta) -> "ImuState":
        d = np.asarray(delta, dtype=float)
        return ImuState(
            self.p + d[A_],
            quat_normalize(quat_multiply(self.q, quat_from_small_angle(d[TH]))),
            self.v + d[B_],
            self.ba + d[BA],
            self.bg + d[BG],
        )


@dataclass(frozen=True)
class NoiseParams:
    sigma_a: float = 0.0
    sigma_g: float = 0.0
    sigma_ba: float = 0.0
    sigma_bg: float = 0.0

    def Q(self) -> np.ndarray:
        s = [self.sigma_a, self.sigma_g, self.sigma_a, self.sigma_g, self.sigma_ba, self.sigma_bg]
        return np.diag(np.repeat(np.square(s), 3))


@dataclass(frozen=True)
class Preintegration:
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(3))
    beta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gamma: np.ndarray = field(default_factory=quat_identity)
    J: np.ndarray = field(default_factory=lambda: np.eye(15))
    P: np.ndarray = field(default_factory=lambda: np.zeros((15, 15)))
    dt_total: float = 0.0
    ba_lin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bg_lin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    noise: NoiseParams = NoiseParams()
    samples: tuple = ()
    dt_max: float = DT_MAX
    reintegrated: bool = False


def _check_dt(pre: Preintegration, s0: ImuSample, s1: ImuSample) -> float:
    dt = s1.t - s0.t
    if not (0.0 < dt <= pre.dt_max):
        raise RejectedSample(f"sample spacing {dt!r} outside (0, {pre.dt_max}]")
    return dt


def _buffer(pre: Preintegration, s0: ImuSample, s1: ImuSample) -> tuple:
    if pre.samples:
        return pre.samples + (s1,)
    return (s0, s1)


def _midpoint(pre: Preintegration, s0: ImuSample, s1: ImuSample, dt: float):
    w = 0.5 * (s0.omega + s1.omega) - pre.bg_lin
    dq = quat_normalize(np.concatenate([[1.0], 0.5 * w * dt]))
    gamma1 = quat_normalize(quat_multiply(pre.gamma, dq))
    R0, R1 = quat_to_rot(pre.gamma), quat_to_rot(gamma1)
    a0x, a1x = s0.a - pre.ba_lin, s1.a - pre.ba_lin
    acc = 0.5 * (R0 @ a0x + R1 @ a1x)
    beta1 = pre.beta + acc * dt
    alpha1 = pre.alpha + pre.beta * dt + 0.5 * acc * dt * dt
    return alpha1, beta1, gamma1, (w, dq, R0, R1, a0x, a1x)


def midpoint_step(pre: Preintegration, s0: ImuSample, s1: ImuSample) -> Preintegration:
    dt = _check_dt(pre, s0, s1)
    alpha1, beta1, gamma1, _ = _midpoint(pre, s0, s1, dt)
    return replace(
        pre, alpha=alpha1, beta=beta1, gamma=gamma1,
        dt_total=pre.dt_total + dt, samples=_buffer(pre, s0, s1),
    )


def transition_matrices(w, dq, R0, R1, a0x, a1x, dt) -> tuple[np.ndarray, np.ndarray]:
    """Exact linearization (A, B) of one mid-point step; B columns are the 18 noises."""
    v = 0.5 * w * dt
    D = (np.eye(3) - hat3(v)) * dt / (1.0 + v @ v)
    Rdq_T = quat_to_rot(dq).T
    H0, H1 = R0 @ hat3(a0x), R1 @ hat3(a1x)
    I3 = np.eye(3)

    A = np.eye(15)
    rot = H0 + H1 @ Rdq_T
    A[A_, TH] = -0.25 * dt * dt * rot
    A[A_, B_] = I3 * dt
    A[A_, BA] = -0.25 * (R0 + R1) * dt * dt
    A[A_, BG] = 0.25 * dt * dt * H1 @ D
    A[TH, TH] = Rdq_T
    A[TH, BG] = -D
    A[B_, TH] = -0.5 * dt * rot
    A[B_, BA] = -0.5 * (R0 + R1) * dt
    A[B_, BG] = 0.5 * dt * H1 @ D

    # noise order: na0, ng0, na1, ng1, nba, nbg
    B = np.zeros((15, 18))
    B[A_, 0:3] = 0.25 * R0 * dt * dt
    B[A_, 6:9] = 0.25 * R1 * dt * dt
    B[A_, 3:6] = B[A_, 9:12] = -0.125 * dt * dt * H1 @ D
    B[TH, 3:6] = B[TH, 9:12] = 0.5 * D
    B[B_, 0:3] = 0.5 * R0 * dt
    B[B_, 6:9] = 0.5 * R1 * dt
    B[B_, 3:6] = B[B_, 9:12] = -0.25 * dt * H1 @ D
    B[BA, 12:15] = I3 * dt
    B[BG, 15:18] = I3 * dt
    return A, B


def propagate_step(pre: Preintegration, s0: ImuSample, s1: ImuSample) -> Preintegration:
    dt = _check_dt(pre, s0, s1)
    alpha1, beta1, gamma1, lin = _midpoint(pre, s0, s1, dt)
    A, B = transition_matrices(*lin, dt)
    P = A @ pre.P @ A.T + B @ pre.noise.Q() @ B.T
    return replace(
        pre,
        alpha=alpha1,
        beta=beta1,
        gamma=gamma1,
        J=A @ pre.J,
        P=0.5 * (P + P.T),
        dt_total=pre.dt_total + dt,
        samples=_buffer(pre, s0, s1),
    )


def preintegrate(samples, ba=None, bg=None, noise: NoiseParams | None = None, dt_max: float = DT_MAX) -> Preintegration:
    pre = Preintegration(
        ba_lin=np.zeros(3) if ba is None else np.asarray(ba, dtype=float),
        bg_lin=np.zeros(3) if bg is None else np.asarray(bg, dtype=float),
        noise=noise or NoiseParams(),
        dt_max=dt_max,
    )
    for s0, s1 in zip(samples[:-1], samples[1:]):
        pre = propagate_step(pre, s0, s1)
    return pre


def bias_blocks(pre: Preintegration) -> dict[str, np.ndarray]:
    J = pre.J
    return {
        "alpha_ba": J[A_, BA],
        "alpha_bg": J[A_, BG],
        "beta_ba": J[B_, BA],
        "beta_bg": J[B_, BG],
        "gamma_bg": J[TH, BG],
    }


def corrected_measurements(pre: Preintegration, ba, bg):
    """First-order (alpha, beta, gamma) at biases (ba, bg)."""
    dba = np.asarray(ba, dtype=float) - pre.ba_lin
    dbg = np.asarray(bg, dtype=float) - pre.bg_lin
    jb = bias_blocks(pre)
    alpha = pre.alpha + jb["alpha_ba"] @ dba + jb["alpha_bg"] @ dbg
    beta = pre.beta + jb["beta_ba"] @ dba + jb["beta_bg"] @ dbg
    gamma = quat_multiply(pre.gamma, quat_from_small_angle(jb["gamma_bg"] @ dbg))
    return alpha, beta, gamma


def correct_for_bias_change(pre: Preintegration, ba_new, bg_new) -> Preintegration:
    ba_new = np.asarray(ba_new, dtype=float)
    bg_new = np.asarray(bg_new, dtype=float)
    big = (
        np.linalg.norm(bg_new - pre.bg_lin) > REINTEGRATE_BG
        or np.linalg.norm(ba_new - pre.ba_lin) > REINTEGRATE_BA
    )
    if big and len(pre.samples) >= 2:
        fresh = preintegrate(list(pre.samples), ba_new, bg_new, pre.noise, pre.dt_max)
        return replace(fresh, reintegrated=True)
    alpha, beta, gamma = corrected_measurements(pre, ba_new, bg_new)
    return replace(
        pre, alpha=alpha, beta=beta, gamma=quat_normalize(gamma),
        ba_lin=ba_new, bg_lin=bg_new, reintegrated=False,
    )


def observed_z(xk: ImuState, xk1: ImuState, g=GRAVITY, dt: float = 0.0):
    if dt <= 0:
        raise ValueError("dt must be positive")
    RkT = quat_to_rot(xk.q).T
    alpha = RkT @ (xk1.p - xk.p - xk.v * dt + 0.5 * g * dt * dt)
    beta = RkT @ (xk1.v - xk.v + g * dt)
    gamma = quat_multiply(quat_conjugate(xk.q), xk1.q)
    return alpha, beta, gamma, xk1.ba - xk.ba, xk1.bg - xk.bg


def _rotation_residual(c, qk, qk1):
    E = quat_multiply(quat_multiply(quat_conjugate(c), quat_conjugate(qk)), qk1)
    s = -1.0 if E[0] < 0 else 1.0
    return E, s


def imu_error(xk: ImuState, xk1: ImuState, pre: Preintegration, g=GRAVITY, dt: float | None = None) -> np.ndarray:
    dt = pre.dt_total if dt is None else dt
    alpha_o, beta_o, _, dba, dbg = observed_z(xk, xk1, g, dt)
    alpha, beta, c = corrected_measurements(pre, xk.ba, xk.bg)
    E, s = _rotation_residual(c, xk.q, xk1.q)
    return np.concatenate([alpha_o - alpha, 2.0 * s * E[1:], beta_o - beta, dba, dbg])


def imu_jacobians(xk: ImuState, xk1: ImuState, pre: Preintegration, g=GRAVITY, dt: float | None = None):
    """(J0 15x6, J1 15x9, J2 15x6, J3 15x9) w.r.t. [p,theta]_k, [v,ba,bg]_k, [p,theta]_k1, [v,ba,bg]_k1."""
    dt = pre.dt_total if dt is None else dt
    Rk_T = quat_to_rot(xk.q).T
    I3 = np.eye(3)
    _, _, c = corrected_measurements(pre, xk.ba, xk.bg)
    E, s = _rotation_residual(c, xk.q, xk1.q)
    jb = bias_blocks(pre)

    J0 = np.zeros((15, 6))
    J0[A_, 0:3] = -Rk_T
    J0[A_, 3:6] = hat3(Rk_T @ (xk1.p - xk.p - xk.v * dt + 0.5 * g * dt * dt))
    M = quat_multiply(quat_conjugate(xk1.q), xk.q)
    J0[TH, 3:6] = -s * (quat_left_matrix(M) @ quat_right_matrix(c))[1:, 1:]
    J0[B_, 3:6] = hat3(Rk_T @ (xk1.v - xk.v + g * dt))

    J1 = np.zeros((15, 9))
    J1[A_, 0:3] = -Rk_T * dt
    J1[A_, 3:6] = -jb["alpha_ba"]
    J1[A_, 6:9] = -jb["alpha_bg"]
    G = quat_multiply(quat_multiply(quat_conjugate(pre.gamma), quat_conjugate(xk.q)), xk1.q)
    J1[TH, 6:9] = -s * quat_right_matrix(G)[1:, 1:] @ jb["gamma_bg"]
    J1[B_, 0:3] = -Rk_T
    J1[B_, 3:6] = -jb["beta_ba"]
    J1[B_, 6:9] = -jb["beta_bg"]
    J1[BA, 3:6] = -I3
    J1[BG, 6:9] = -I3

    J2 = np.zeros((15, 6))
    J2[A_, 0:3] = Rk_T
    J2[TH, 3:6] = s * quat_left_matrix(E)[1:, 1:]

    J3 = np.zeros((15, 9))
    J3[B_, 0:3] = Rk_T
    J3[BA, 3:6] = I3
    J3[BG, 6:9] = I3
    return J0, J1, J2, J3


def forward_simulate(x0: ImuState, samples, g=GRAVITY) -> list[ImuState]:
    """World-frame mid-point integration with the same discretization as the preintegration."""
    states = [x0]
    x = x0
    for s0, s1 in zip(samples[:-1], samples[1:]):
        dt = s1.t - s0.t
        w = 0.5 * (s0.omega + s1.omega) - x.bg
        q1 = quat_normalize(quat_multiply(x.q, quat_normalize(np.concatenate([[1.0], 0.5 * w * dt]))))
        acc = 0.5 * (quat_to_rot(x.q) @ (s0.a - x.ba) + quat_to_rot(q1) @ (s1.a - x.ba)) - g
        x = ImuState(x.p + x.v * dt + 0.5 * acc * dt * dt, q1, x.v + acc * dt, x.ba, x.bg)
        states.append(x)
    return states


@dataclass
class ImuFactor(Factor):
    k: str
    k1: str
    pre: Preintegration
    g: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    information: np.ndarray = None

    def __post_init__(self):
        self.keys = (self.k, self.k1)
        if self.information is None:
            P = self.pre.P
            if np.linalg.eigvalsh(P).min() > 1e-300:
                self.information = np.linalg.inv(P)
                self.information = 0.5 * (self.information + self.information.T)
            else:
                self.information = np.eye(15)

    def error(self, values):
        xk, xk1 = values
        return imu_error(xk, xk1, self.pre, self.g)

    def linearize(self, values):
        xk, xk1 = values
        J0, J1, J2, J3 = imu_jacobians(xk, xk1, self.pre, self.g)
        return self.error(values), [np.hstack([J0, J1]), np.hstack([J2, J3])]
