"""Gauss-Newton and Levenberg-Marquardt on a ``Problem``."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .graph import FactorEvaluation, Problem, evaluate_all, total_error

log = logging.getLogger(__name__)

LAMBDA_MAX = 1e12
INVALID_FRACTION_MAX = 0.5
CSV_HEADER = "iter,E,step_norm,lambda,accepted,millis"


class IndefiniteSystem(LinAlgError):
    pass


class SolverAbort(RuntimeError):
    pass


@dataclass
class SolverOptions:
    method: str = "gn"
    max_iterations: int = 50
    abs_tolerance: float = 1e-10
    rel_tolerance: float = 1e-12
    rel_window: int = 3
    lm_lambda_init: float = 1e-4
    lm_lambda_up: float = 10.0
    lm_lambda_down: float = 10.0
    record_timing: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.method not in ("gn", "lm"):
            raise ValueError("method must be 'gn' or 'lm'")
        if self.abs_tolerance <= 0 or self.rel_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.lm_lambda_up <= 1 or self.lm_lambda_down <= 1:
            raise ValueError("lambda factors must exceed 1")


@dataclass
class IterationStats:
    iteration: int
    E: float
    step_norm: float
    lam: float
    accepted: bool
    millis: float

    def csv_row(self) -> str:
        return (
            f"{self.iteration},{self.E:.17g},{self.step_norm:.17g},{self.lam:.17g},"
            f"{int(self.accepted)},{self.millis:.3f}"
        )


@dataclass
class SolveResult:
    problem: Problem
    stats: list[IterationStats] = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    @property
    def final_error(self) -> float:
        accepted = [s.E for s in self.stats if s.accepted]
        return accepted[-1] if accepted else float("nan")

    @property
    def iterations(self) -> int:
        return self.stats[-1].iteration if self.stats else 0

    def csv(self) -> str:
        return "\n".join([CSV_HEADER] + [s.csv_row() for s in self.stats]) + "\n"


def build_normal_equations(
    problem: Problem, evaluations: list[FactorEvaluation] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    off, n = problem.offsets()
    if n == 0:
        raise SolverAbort("no free variables")
    evals = evaluate_all(problem) if evaluations is None else evaluations
    H = np.zeros((n, n))
    b = np.zeros(n)
    # fixed accumulation order: factor registration order
    for f, ev in zip(problem.factors, evals):
        if not ev.valid:
            continue
        Om = f.information
        blocks = [(off[k], J) for k, J in zip(f.keys, ev.jacobians) if k in off]
        for oi, Ji in blocks:
            JtO = Ji.T @ Om
            b[oi : oi + Ji.shape[1]] += JtO @ ev.residual
            for oj, Jj in blocks:
                H[oi : oi + Ji.shape[1], oj : oj + Jj.shape[1]] += JtO @ Jj
    return 0.5 * (H + H.T), b


def solve_spd(H: np.ndarray, b: np.ndarray, lam: float = 0.0) -> np.ndarray:
    A = H + lam * np.eye(H.shape[0])
    try:
        c = cho_factor(A, lower=True, check_finite=True)
    except LinAlgError as exc:
        raise IndefiniteSystem(f"(H + {lam:g} I) is not positive definite") from exc
    return cho_solve(c, -b)


def _check_validity(problem: Problem, evals: list[FactorEvaluation], it: int) -> None:
    bad = sum(not e.valid for e in evals)
    if bad:
        log.info("iteration %d: %d of %d factors invalid", it, bad, len(evals))
    if evals and bad > INVALID_FRACTION_MAX * len(evals):
        raise SolverAbort(f"iteration {it}: {bad}/{len(evals)} factors invalid")


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.t0 = time.perf_counter()

    def lap(self) -> float:
        if not self.enabled:
            return 0.0
        now = time.perf_counter()
        ms, self.t0 = 1e3 * (now - self.t0), now
        return ms


def gauss_newton(problem: Problem, options: SolverOptions | None = None) -> SolveResult:
    opt = options or SolverOptions()
    prob = problem.copy()
    res = SolveResult(prob)
    E = total_error(prob)
    res.stats.append(IterationStats(0, E, 0.0, 0.0, True, 0.0))
    clock = _Clock(opt.record_timing)
    small = 0
    for it in range(1, opt.max_iterations + 1):
        evals = evaluate_all(prob, opt.threads)
        try:
            _check_validity(prob, evals, it)
            H, b = build_normal_equations(prob, evals)
            delta = solve_spd(H, b, 0.0)
        except (SolverAbort, IndefiniteSystem) as exc:
            res.reason = f"iteration {it}: {exc}"
            return res
        prob.retract(delta)
        E_new = total_error(prob)
        step = float(np.linalg.norm(delta))
        res.stats.append(IterationStats(it, E_new, step, 0.0, True, clock.lap()))
        small = small + 1 if (E - E_new) < opt.rel_tolerance * max(E, 1e-300) else 0
        E = E_new
        if step < opt.abs_tolerance:
            res.converged, res.reason = True, "step below tolerance"
            return res
        if small >= opt.rel_window:
            res.converged, res.reason = True, "relative decrease below tolerance"
            return res
    res.reason = "max iterations"
    return res


def levenberg_marquardt(problem: Problem, options: SolverOptions | None = None) -> SolveResult:
    opt = options or SolverOptions(method="lm")
    prob = problem.copy()
    res = SolveResult(prob)
    E = total_error(prob)
    lam = opt.lm_lambda_init
    res.stats.append(IterationStats(0, E, 0.0, lam, True, 0.0))
    clock = _Clock(opt.record_timing)
    small = 0
    H = b = None
    for it in range(1, opt.max_iterations + 1):
        try:
            if H is None:
                evals = evaluate_all(prob, opt.threads)
                _check_validity(prob, evals, it)
                H, b = build_normal_equations(prob, evals)
            delta = solve_spd(H, b, lam)
        except SolverAbort as exc:
            res.reason = f"iteration {it}: {exc}"
            return res
        except IndefiniteSystem:
            delta = None
        step = float(np.linalg.norm(delta)) if delta is not None else float("inf")
        accepted = False
        E_new = E
        if delta is not None:
            trial = prob.copy()
            trial.retract(delta)
            E_try = total_error(trial)
            if E_try < E:
                accepted, E_new = True, E_try
                prob.variables = trial.variables
        res.stats.append(IterationStats(it, E_new, step, lam, accepted, clock.lap()))
        if accepted:
            small = small + 1 if (E - E_new) < opt.rel_tolerance * max(E, 1e-300) else 0
            E = E_new
            lam /= opt.lm_lambda_down
            H = None
        else:
            lam *= opt.lm_lambda_up
        if step < opt.abs_tolerance:
            res.converged, res.reason = True, "step below tolerance"
            return res
        if small >= opt.rel_window:
            res.converged, res.reason = True, "relative decrease below tolerance"
            return res
        if lam > LAMBDA_MAX:
            res.reason = f"iteration {it}: lambda {lam:g} exceeded {LAMBDA_MAX:g}, stalled"
            return res
    res.reason = "max iterations"
    return res


def solve(problem: Problem, options: SolverOptions | None = None) -> SolveResult:
    opt = options or SolverOptions()
    return (levenberg_marquardt if opt.method == "lm" else gauss_newton)(problem, opt)
