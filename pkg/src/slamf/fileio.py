"""Plain-text fixture formats: g2o SE(3) graphs, ASCII rasters, IMU CSV, line text, run configs.

g2o stores the edge information in (x y z qx qy qz) tangent order while twists
here are [w, v], so the reader/writer swaps the two 3x3 block rows/columns:

    Omega_internal = P^T Omega_g2o P,   P = [[0, I3], [I3, 0]]

No other rescaling is applied.
"""

from __future__ import annotations

import configparser
import csv
import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .graph import Problem, VariableKind
from .imu import ImuSample
from .lie import Pose, quat_to_rot, rot_to_quat
from .lines import LineObservation, PluckerLine
from .photometric import ImageRaster
from .pose_graph import BetweenFactor

G2O_PERM = np.block([[np.zeros((3, 3)), np.eye(3)], [np.eye(3), np.zeros((3, 3))]])
_UPPER = np.triu_indices(6)


class ParseError(ValueError):
    def __init__(self, path, line: int, column: int, msg: str):
        super().__init__(f"{path}:{line}:{column}: {msg}")
        self.path, self.line, self.column = path, line, column


class QuaternionNormalized(UserWarning):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _tokens(text: str) -> list[tuple[str, int]]:
    """Whitespace tokens with their 1-based column."""
    return [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", text)]


def _number(tok: tuple[str, int], path, lineno: int, integer: bool = False):
    s, col = tok
    try:
        return int(s) if integer else float(s)
    except ValueError:
        kind = "integer" if integer else "number"
        raise ParseError(path, lineno, col, f"expected {kind}, got {s!r}") from None


# --- g2o --------------------------------------------------------------------


def information_to_g2o(info: np.ndarray) -> np.ndarray:
    return G2O_PERM @ info @ G2O_PERM.T


def information_from_g2o(info: np.ndarray) -> np.ndarray:
    return G2O_PERM.T @ info @ G2O_PERM


def _pose_from_quat(vals: list[float], path, lineno: int, col: int) -> Pose:
    x, y, z, qx, qy, qz, qw = vals
    q = np.array([qw, qx, qy, qz])
    n = float(np.linalg.norm(q))
    if n == 0.0 or not np.isfinite(n):
        raise ParseError(path, lineno, col, "zero or non-finite quaternion")
    if abs(n - 1.0) > 1e-9:
        warnings.warn(f"{path}:{lineno}: quaternion norm {n:.6g} normalized", QuaternionNormalized, stacklevel=3)
    return Pose(quat_to_rot(q / n), np.array([x, y, z]))


def _quat_fields(T: Pose) -> list[float]:
    w, x, y, z = rot_to_quat(T.R)
    return [*T.t, x, y, z, w]


def parse_g2o(text: str, path: str = "<string>", fix_first: bool = True) -> Problem:
    """Vertices become ``x<id>`` global poses; edges become primary-form between factors.

    ``FIX id`` lines pin vertices.  Without any, the lowest id is fixed when ``fix_first``.
    """
    prob = Problem()
    edges: list[tuple[int, int, int, Pose, np.ndarray]] = []
    fixed: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = _tokens(raw.split("#", 1)[0])
        if not toks:
            continue
        tag, col = toks[0]
        if tag == "VERTEX_SE3:QUAT":
            if len(toks) != 9:
                raise ParseError(path, lineno, col, f"VERTEX_SE3:QUAT needs 8 fields, got {len(toks) - 1}")
            vid = _number(toks[1], path, lineno, integer=True)
            vals = [_number(t, path, lineno) for t in toks[2:]]
            key = f"x{vid}"
            if key in prob.variables:
                raise ParseError(path, lineno, toks[1][1], f"duplicate vertex {vid}")
            prob.add_variable(key, VariableKind.POSE_GLOBAL, _pose_from_quat(vals, path, lineno, toks[5][1]))
        elif tag == "EDGE_SE3:QUAT":
            if len(toks) != 31:
                raise ParseError(path, lineno, col, f"EDGE_SE3:QUAT needs 30 fields, got {len(toks) - 1}")
            i = _number(toks[1], path, lineno, integer=True)
            j = _number(toks[2], path, lineno, integer=True)
            z = _pose_from_quat([_number(t, path, lineno) for t in toks[3:10]], path, lineno, toks[6][1])
            upper = [_number(t, path, lineno) for t in toks[10:]]
            info = np.zeros((6, 6))
            info[_UPPER] = upper
            info = info + np.triu(info, 1).T
            edges.append((lineno, i, j, z, information_from_g2o(info)))
        elif tag == "FIX":
            if len(toks) < 2:
                raise ParseError(path, lineno, col, "FIX needs at least one vertex id")
            fixed.extend((lineno, t[1], _number(t, path, lineno, integer=True)) for t in toks[1:])
        else:
            raise ParseError(path, lineno, col, f"unknown record {tag!r}")
    for lineno, i, j, z, info in edges:
        for v in (i, j):
            if f"x{v}" not in prob.variables:
                raise ParseError(path, lineno, 1, f"edge references unknown vertex {v}")
        prob.add_factor(BetweenFactor(f"x{i}", f"x{j}", z, info))
    for lineno, col, v in fixed:
        if f"x{v}" not in prob.variables:
            raise ParseError(path, lineno, col, f"FIX references unknown vertex {v}")
        prob.fixed.add(f"x{v}")
    if not fixed and fix_first and prob.variables:
        prob.fixed.add(min(prob.variables, key=lambda k: int(k[1:])))
    return prob


def read_g2o(path, fix_first: bool = True) -> Problem:
    return parse_g2o(Path(path).read_text(), str(path), fix_first)


def _vertex_id(key: str) -> int:
    m = re.fullmatch(r"x(\d+)", key)
    if m is None:
        raise ValueError(f"variable {key!r} has no g2o vertex id (expected x<int>)")
    return int(m.group(1))


def format_g2o(problem: Problem) -> str:
    lines = []
    for key, var in problem.variables.items():
        if var.kind not in (VariableKind.POSE_GLOBAL, VariableKind.POSE_LOCAL):
            raise ValueError(f"variable {key!r} is not a pose")
        lines.append(" ".join(["VERTEX_SE3:QUAT", str(_vertex_id(key))] + [_fmt(v) for v in _quat_fields(var.value)]))
    for f in problem.factors:
        if not isinstance(f, BetweenFactor) or f.variant != "primary":
            raise ValueError("only primary-form between factors can be written as EDGE_SE3:QUAT")
        info = information_to_g2o(f.information)
        fields = [_fmt(v) for v in _quat_fields(f.z)] + [_fmt(v) for v in info[_UPPER]]
        lines.append(" ".join(["EDGE_SE3:QUAT", str(_vertex_id(f.i)), str(_vertex_id(f.j))] + fields))
    for key in problem.variables:
        if key in problem.fixed:
            lines.append(f"FIX {_vertex_id(key)}")
    return "\n".join(lines) + "\n"


def write_g2o(problem: Problem, path) -> None:
    Path(path).write_text(format_g2o(problem))


# --- raster -----------------------------------------------------------------


def write_raster(img: ImageRaster, path) -> None:
    rows = [f"{img.width} {img.height}"] + [" ".join(_fmt(v) for v in row) for row in img.data]
    Path(path).write_text("\n".join(rows) + "\n")


def read_raster(path) -> ImageRaster:
    toks = Path(path).read_text().split()
    if len(toks) < 2:
        raise ValueError(f"{path}: missing width/height header")
    w, h = int(toks[0]), int(toks[1])
    vals = np.array([float(t) for t in toks[2:]])
    if vals.size != w * h:
        raise ValueError(f"{path}: expected {w * h} intensities, got {vals.size}")
    return ImageRaster(vals.reshape(h, w))


# --- IMU CSV ----------------------------------------------------------------


def write_imu_csv(samples: list[ImuSample], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "ax", "ay", "az", "wx", "wy", "wz"])
        for s in samples:
            w.writerow([_fmt(s.t), *map(_fmt, s.a), *map(_fmt, s.omega)])


def read_imu_csv(path) -> list[ImuSample]:
    out = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if lineno == 1 and row[0].strip() == "t":
                continue
            if len(row) != 7:
                raise ParseError(path, lineno, 1, f"expected 7 columns, got {len(row)}")
            try:
                v = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(path, lineno, 1, str(exc)) from None
            out.append(ImuSample(v[0], np.array(v[1:4]), np.array(v[4:7])))
    return out


# --- line text --------------------------------------------------------------


def _write_rows(rows, path) -> None:
    Path(path).write_text("".join(" ".join(_fmt(v) for v in r) + "\n" for r in rows))


def _read_rows(path, width: int) -> np.ndarray:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        toks = _tokens(raw.split("#", 1)[0])
        if not toks:
            continue
        if len(toks) != width:
            raise ParseError(path, lineno, 1, f"expected {width} values, got {len(toks)}")
        rows.append([_number(t, path, lineno) for t in toks])
    return np.array(rows, dtype=float).reshape(-1, width)


def write_lines(lines: list[PluckerLine], path) -> None:
    _write_rows([np.concatenate([L.m, L.d]) for L in lines], path)


def read_lines(path) -> list[PluckerLine]:
    return [PluckerLine(r[:3].copy(), r[3:].copy()) for r in _read_rows(path, 6)]


def write_line_observations(obs: list[LineObservation], path) -> None:
    _write_rows([[o.xs[0], o.xs[1], o.xe[0], o.xe[1]] for o in obs], path)


def read_line_observations(path) -> list[LineObservation]:
    return [LineObservation.from_pixels(*r) for r in _read_rows(path, 4)]


# --- run config -------------------------------------------------------------

SCENARIOS = ("ba", "pgo", "vio", "line-ba", "photometric", "jacobian-check")

# section -> key -> (type, default)
_SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "run": {"scenario": (str, None), "seed": (int, 0), "output": (str, "slamf_out"), "figures": (bool, True)},
    "solver": {
        "method": (str, "gn"),
        "max_iterations": (int, 50),
        "abs_tolerance": (float, 1e-10),
        "rel_tolerance": (float, 1e-12),
        "lambda_init": (float, 1e-4),
        "record_timing": (bool, False),
    },
    "ba": {
        "cameras": (int, 10),
        "points": (int, 100),
        "perturbation": (float, 0.05),
        "pixel_noise": (float, 0.0),
        "fixed_cameras": (int, 2),
    },
    "pgo": {
        "nodes": (int, 20),
        "loops": (int, 1),
        "odometry_noise": (float, 0.0),
        "loop_noise": (float, 0.0),
        "perturbation": (float, 0.05),
        "variant": (str, "primary"),
        "jr_mode": (str, "first_order"),
        "input": (str, ""),
    },
    "vio": {"duration": (float, 1.0), "imu_hz": (float, 200.0), "keyframes": (int, 5), "perturbation": (float, 0.02)},
    "line-ba": {"lines": (int, 6), "cameras": (int, 4), "perturbation": (float, 0.02), "pixel_noise": (float, 0.0)},
    "photometric": {"points": (int, 60), "perturbation": (float, 0.05)},
    "jacobian-check": {"factor": (str, "all"), "instances": (int, 100), "step": (float, 0.0)},
}


@dataclass
class RunConfig:
    scenario: str
    seed: int
    output: Path
    figures: bool
    solver: dict
    params: dict


def _convert(section: str, key: str, raw: str, typ: type):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec}]")

    def section(name: str) -> dict:
        out = {}
        for key, (typ, default) in _SCHEMA[name].items():
            if cp.has_option(name, key):
                out[key] = _convert(name, key, cp[name][key], typ)
            else:
                out[key] = default
        return out

    run = section("run")
    if run["scenario"] is None:
        raise ConfigError(f"{source}: [run] scenario is required")
    if run["scenario"] not in SCENARIOS:
        raise ConfigError(f"{source}: unknown scenario {run['scenario']!r}; choose from {', '.join(SCENARIOS)}")
    solver = section("solver")
    if solver["method"] not in ("gn", "lm"):
        raise ConfigError(f"{source}: [solver] method must be gn or lm")
    return RunConfig(run["scenario"], run["seed"], Path(run["output"]), run["figures"], solver, section(run["scenario"]))


def read_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
