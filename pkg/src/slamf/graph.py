"""Variables, factors and the per-kind manifold update table."""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import InvalidEvaluation
from .lie import exp_se3


class VariableKind(enum.Enum):
    POSE_GLOBAL = "PoseSE3Global"
    POSE_LOCAL = "PoseSE3Local"
    POINT3 = "Point3"
    INVERSE_DEPTH = "InverseDepth"
    INTRINSICS = "IntrinsicsVar"
    ORTHONORMAL_LINE = "OrthonormalLineVar"
    IMU_STATE = "ImuStateVar"

    @property
    def dim(self) -> int:
        return _DIMS[self]


_DIMS = {
    VariableKind.POSE_GLOBAL: 6,
    VariableKind.POSE_LOCAL: 6,
    VariableKind.POINT3: 3,
    VariableKind.INVERSE_DEPTH: 1,
    VariableKind.INTRINSICS: 4,
    VariableKind.ORTHONORMAL_LINE: 4,
    VariableKind.IMU_STATE: 15,
}


def apply_update(kind: VariableKind, value: Any, delta) -> Any:
    """Retraction x ⊞ delta for the given variable kind."""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if delta.shape[0] != kind.dim:
        raise ValueError(f"{kind.value} expects a {kind.dim}-vector, got {delta.shape[0]}")
    if kind is VariableKind.POSE_GLOBAL:
        return (exp_se3(delta) @ value).normalized()
    if kind is VariableKind.POSE_LOCAL:
        return (value @ exp_se3(delta)).normalized()
    if kind is VariableKind.POINT3:
        return np.asarray(value, dtype=float) + delta
    if kind is VariableKind.INVERSE_DEPTH:
        return np.asarray(value, dtype=float).reshape(1) + delta
    if kind is VariableKind.INTRINSICS:
        from .camera import Intrinsics

        return Intrinsics.from_vector(value.vector() + delta)
    if kind is VariableKind.ORTHONORMAL_LINE:
        from .lines import update_orthonormal

        return update_orthonormal(value, delta)
    if kind is VariableKind.IMU_STATE:
        return value.boxplus(delta)
    raise ValueError(f"unknown kind {kind}")


def weighted_error(e, Omega) -> float:
    e = np.atleast_1d(np.asarray(e, dtype=float))
    Omega = np.atleast_2d(np.asarray(Omega, dtype=float))
    if Omega.shape != (e.shape[0], e.shape[0]):
        raise ValueError(f"information {Omega.shape} does not match residual of size {e.shape[0]}")
    return float(e @ Omega @ e)


class Factor:
    """Base factor: subclasses provide ``keys``, ``information`` and ``linearize``.

    ``linearize(values)`` returns the residual and one Jacobian block per key,
    each block taken w.r.t. that variable's tangent under its registered kind.
    """

    keys: tuple[str, ...] = ()
    information: np.ndarray

    def linearize(self, values: Sequence[Any]) -> tuple[np.ndarray, list[np.ndarray]]:
        raise NotImplementedError

    def error(self, values: Sequence[Any]) -> np.ndarray:
        return self.linearize(values)[0]


@dataclass
class FactorEvaluation:
    residual: np.ndarray | None
    jacobians: list[np.ndarray] | None
    valid: bool
    message: str = ""


@dataclass
class Variable:
    kind: VariableKind
    value: Any


@dataclass
class Problem:
    variables: dict[str, Variable] = field(default_factory=dict)
    factors: list[Factor] = field(default_factory=list)
    fixed: set[str] = field(default_factory=set)

    def add_variable(self, key: str, kind: VariableKind, value: Any, fixed: bool = False) -> None:
        if key in self.variables:
            raise ValueError(f"duplicate variable {key!r}")
        self.variables[key] = Variable(kind, value)
        if fixed:
            self.fixed.add(key)

    def add_factor(self, factor: Factor) -> None:
        for k in factor.keys:
            if k not in self.variables:
                raise KeyError(f"factor references unknown variable {k!r}")
        self.factors.append(factor)

    def value(self, key: str) -> Any:
        return self.variables[key].value

    def values_for(self, factor: Factor) -> list[Any]:
        return [self.variables[k].value for k in factor.keys]

    def free_keys(self) -> list[str]:
        return [k for k in self.variables if k not in self.fixed]

    def offsets(self) -> tuple[dict[str, int], int]:
        off, n = {}, 0
        for k in self.free_keys():
            off[k] = n
            n += self.variables[k].kind.dim
        return off, n

    def copy(self) -> "Problem":
        return Problem(
            {k: Variable(v.kind, v.value) for k, v in self.variables.items()},
            list(self.factors),
            set(self.fixed),
        )

    def retract(self, delta: np.ndarray) -> None:
        off, _ = self.offsets()
        for k, o in off.items():
            var = self.variables[k]
            var.value = apply_update(var.kind, var.value, delta[o : o + var.kind.dim])


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("SLAMF_THREADS", "1")))
    except ValueError:
        return 1


def evaluate_factor(problem: Problem, factor: Factor, jacobians: bool = True) -> FactorEvaluation:
    values = problem.values_for(factor)
    try:
        if jacobians:
            e, J = factor.linearize(values)
        else:
            e, J = factor.error(values), None
    except InvalidEvaluation as exc:
        return FactorEvaluation(None, None, False, str(exc))
    return FactorEvaluation(np.atleast_1d(np.asarray(e, dtype=float)), J, True)


def evaluate_all(
    problem: Problem, threads: int | None = None, jacobians: bool = True
) -> list[FactorEvaluation]:
    """Evaluate every factor; output order always matches ``problem.factors``."""
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(problem.factors) < 2:
        return [evaluate_factor(problem, f, jacobians) for f in problem.factors]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda f: evaluate_factor(problem, f, jacobians), problem.factors))


def total_error(problem: Problem, evaluations: list[FactorEvaluation] | None = None) -> float:
    evals = evaluate_all(problem, jacobians=False) if evaluations is None else evaluations
    E = 0.0
    for f, ev in zip(problem.factors, evals):
        if ev.valid:
            E += weighted_error(ev.residual, f.information)
    return E

