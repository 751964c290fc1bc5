"""Central finite differences taken through the solver's own retraction."""

from __future__ import annotations

from typing import Any, Callable, Sequence

import numpy as np

from .errors import InvalidEvaluation
from .graph import Factor, VariableKind, apply_update

H_DEFAULT = 1e-6
H_PHOTOMETRIC = 1e-5


class OracleFailure(RuntimeError):
    pass


def numeric_jacobian(
    residual_fn: Callable[[list[Any]], np.ndarray],
    kinds: Sequence[VariableKind],
    values: Sequence[Any],
    target: int,
    h: float = H_DEFAULT,
) -> np.ndarray:
    """Column j is (r(x ⊞ h e_j) - r(x ⊞ -h e_j)) / 2h for variable ``target``."""
    if h <= 0:
        raise ValueError("step must be positive")
    kind = kinds[target]
    cols = []
    for j in range(kind.dim):
        step = np.zeros(kind.dim)
        step[j] = h
        probe = list(values)
        try:
            probe[target] = apply_update(kind, values[target], step)
            rp = np.atleast_1d(residual_fn(probe))
            probe[target] = apply_update(kind, values[target], -step)
            rm = np.atleast_1d(residual_fn(probe))
        except InvalidEvaluation as exc:
            raise OracleFailure(f"probe {j} of variable {target} invalid: {exc}") from exc
        cols.append((rp - rm) / (2.0 * h))
    return np.column_stack(cols)


def factor_numeric_jacobians(
    factor: Factor, kinds: Sequence[VariableKind], values: Sequence[Any], h: float = H_DEFAULT
) -> list[np.ndarray]:
    return [numeric_jacobian(factor.error, kinds, values, i, h) for i in range(len(kinds))]


def relative_errors(analytic, numeric, floor: float = 1e-7) -> np.ndarray:
    """Entrywise |A - N| / |N|, with absolute errors at or below ``floor`` counted as zero."""
    A = np.asarray(analytic, dtype=float)
    N = np.asarray(numeric, dtype=float)
    err = np.abs(A - N)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(err <= floor, 0.0, err / np.abs(N))
    return rel


def max_relative_error(analytic, numeric, floor: float = 1e-7) -> float:
    return float(np.max(relative_errors(analytic, numeric, floor), initial=0.0))


def agrees(analytic, numeric, rtol: float = 1e-5, floor: float = 1e-7) -> bool:
    return max_relative_error(analytic, numeric, floor) <= rtol


def mismatch_rows(analytic, numeric, floor: float = 1e-7):
    """(row, col, analytic, numeric, rel_err) tuples for a heatmap dump."""
    A = np.atleast_2d(analytic)
    N = np.atleast_2d(numeric)
    R = relative_errors(A, N, floor)
    return [(r, c, float(a), float(N[r, c]), float(R[r, c])) for (r, c), a in np.ndenumerate(A)]
