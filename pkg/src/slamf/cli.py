"""``slamf`` command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks
from .errors import ConfigError
from .fileio import ParseError, RunConfig, read_config, read_g2o, write_g2o
from .graph import Problem, VariableKind
from .lie import rot_to_quat
from .lines import plucker_from_orthonormal
from .solver import SolveResult, SolverOptions, solve
from .synth import GenerationError, make_pose_graph

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2
SUMMARY_HEADER = "scenario,seed,final_E,iters,converged"
CHECK_HEADER = "factor,jacobian,instances,max_rel_err,threshold,status"

log = logging.getLogger("slamf")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _state_fields(kind: VariableKind, value) -> list[float]:
    if kind in (VariableKind.POSE_GLOBAL, VariableKind.POSE_LOCAL):
        w, x, y, z = rot_to_quat(value.R)
        return [*value.t, x, y, z, w]
    if kind is VariableKind.ORTHONORMAL_LINE:
        L = plucker_from_orthonormal(value)
        return [*L.m, *L.d]
    if kind is VariableKind.IMU_STATE:
        return [*value.p, *value.q, *value.v, *value.ba, *value.bg]
    if kind is VariableKind.INTRINSICS:
        return list(value.vector())
    return list(np.atleast_1d(value))


def format_state(problem: Problem) -> str:
    """One line per variable: key, kind, fixed flag, then values at 17 significant digits."""
    rows = []
    for key, var in problem.variables.items():
        vals = " ".join(_fmt(v) for v in _state_fields(var.kind, var.value))
        rows.append(f"{key} {var.kind.name} {int(key in problem.fixed)} {vals}")
    return "\n".join(rows) + "\n"


def build_problem(cfg: RunConfig) -> tuple[Problem, bool, np.ndarray | None]:
    """(problem, world_from_body, truth positions) for a solver scenario."""
    from . import scenarios

    p, seed = cfg.params, cfg.seed
    if cfg.scenario == "ba":
        prob, _ = scenarios.ba_problem(
            p["cameras"], p["points"], p["perturbation"], p["pixel_noise"], seed, p["fixed_cameras"]
        )
        return prob, False, None
    if cfg.scenario == "pgo":
        if p["input"]:
            return read_g2o(p["input"]), True, None
        prob, gt = make_pose_graph(
            p["nodes"],
            p["odometry_noise"],
            p["loops"],
            seed,
            p["loop_noise"],
            p["perturbation"],
            p["jr_mode"],
            p["variant"],
        )
        return prob, True, np.array([x.t for x in gt])
    if cfg.scenario == "vio":
        prob, gt = scenarios.vio_problem(p["duration"], p["imu_hz"], p["keyframes"], p["perturbation"], seed=seed)
        return prob, True, np.array([x.p for x in gt])
    if cfg.scenario == "line-ba":
        prob, _ = scenarios.line_ba_problem(p["lines"], p["cameras"], p["perturbation"], p["pixel_noise"], seed)
        return prob, False, None
    if cfg.scenario == "photometric":
        prob, _ = scenarios.photometric_problem(seed, p["points"], p["perturbation"])
        return prob, False, None
    raise ConfigError(f"scenario {cfg.scenario!r} has no problem builder")


def _solver_options(cfg: RunConfig) -> SolverOptions:
    s = cfg.solver
    try:
        return SolverOptions(
            method=s["method"],
            max_iterations=s["max_iterations"],
            abs_tolerance=s["abs_tolerance"],
            rel_tolerance=s["rel_tolerance"],
            lm_lambda_init=s["lambda_init"],
            record_timing=s["record_timing"],
        )
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None


def _write_summary(out: Path, row: str) -> None:
    (out / "summary.csv").write_text(f"{SUMMARY_HEADER}\n{row}\n")
    print(row)


def run_solver_scenario(cfg: RunConfig) -> int:
    try:
        opts = _solver_options(cfg)
        prob, world_from_body, truth = build_problem(cfg)
    except (ConfigError, ParseError, GenerationError, ValueError, OSError) as exc:
        print(f"slamf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    res: SolveResult = solve(prob, opts)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    (out / "iterations.csv").write_text(res.csv())
    (out / "final_state.txt").write_text(format_state(res.problem))
    if cfg.scenario == "pgo" and all(
        v.kind is VariableKind.POSE_GLOBAL for v in res.problem.variables.values()
    ) and all(getattr(f, "variant", "") == "primary" for f in res.problem.factors):
        write_g2o(res.problem, out / "final.g2o")
    if cfg.figures:
        from .report import convergence_figure, trajectory_figure

        convergence_figure(res.stats, out / "convergence.png", f"{cfg.scenario} seed {cfg.seed}")
        trajectory_figure(prob, res.problem, out / "trajectory.png", world_from_body, truth)
    if not res.converged:
        log.warning("not converged: %s", res.reason)
    _write_summary(out, f"{cfg.scenario},{cfg.seed},{_fmt(res.final_error)},{res.iterations},{str(res.converged).lower()}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def run_checks(factor: str, instances: int, seed: int, h: float | None, heatmap_dir: Path | None = None):
    names = list(checks.CHECKS) if factor == "all" else [factor]
    for n in names:
        if n not in checks.CHECKS:
            raise ConfigError(f"unknown factor {n!r}; choose from all, {', '.join(checks.CHECKS)}")
    results = []
    for n in names:
        for r in checks.run_check(n, instances, seed, h):
            results.append((n, r))
            if heatmap_dir is not None and r.worst:
                heatmap_dir.mkdir(parents=True, exist_ok=True)
                lines = ["row,col,analytic,numeric,rel_err"]
                lines += [f"{i},{j},{_fmt(a)},{_fmt(b)},{_fmt(e)}" for i, j, a, b, e in r.worst]
                (heatmap_dir / f"{r.name}.csv").write_text("\n".join(lines) + "\n")
    return results


def _check_rows(results) -> list[str]:
    return [
        f"{n},{r.name},{r.instances},{r.max_rel_err:.3e},{r.threshold:.0e},{'PASS' if r.passed else 'FAIL'}"
        for n, r in results
    ]


def run_check_scenario(cfg: RunConfig) -> int:
    p = cfg.params
    try:
        results = run_checks(p["factor"], p["instances"], cfg.seed, p["step"] or None)
    except ConfigError as exc:
        print(f"slamf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.output.mkdir(parents=True, exist_ok=True)
    (cfg.output / "jacobian_check.csv").write_text("\n".join([CHECK_HEADER] + _check_rows(results)) + "\n")
    worst = max(r.max_rel_err for _, r in results)
    ok = all(r.passed for _, r in results)
    _write_summary(cfg.output, f"jacobian-check,{cfg.seed},{_fmt(worst)},{p['instances']},{str(ok).lower()}")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_run(args) -> int:
    try:
        cfg = read_config(args.config)
    except ConfigError as exc:
        print(f"slamf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output:
        cfg.output = Path(args.output)
    if cfg.scenario == "jacobian-check":
        return run_check_scenario(cfg)
    return run_solver_scenario(cfg)


def cmd_jacobian_check(args) -> int:
    if args.h is not None and not args.h > 0:
        print("slamf: --h must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        results = run_checks(args.factor, args.instances, args.seed, args.h, args.heatmaps)
    except ConfigError as exc:
        print(f"slamf: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(CHECK_HEADER)
    for row in _check_rows(results):
        print(row)
    return EXIT_OK if all(r.passed for _, r in results) else EXIT_NOT_CONVERGED


def cmd_g2o_roundtrip(args) -> int:
    try:
        prob = read_g2o(args.input)
    except (ParseError, OSError) as exc:
        print(f"slamf: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_g2o(prob, args.output)
    print(f"{len(prob.variables)} vertices, {len(prob.factors)} edges -> {args.output}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slamf", description="Manifold least squares for SLAM error terms.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario from a config file")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="override [run] output directory")
    r.set_defaults(fn=cmd_run)

    j = sub.add_parser("jacobian-check", help="compare analytic Jacobians with central differences")
    j.add_argument("--factor", default="all", help="all or one of: " + ", ".join(checks.CHECKS))
    j.add_argument("--h", type=float, default=None, help="finite-difference step")
    j.add_argument("--instances", type=int, default=100)
    j.add_argument("--seed", type=int, default=0)
    j.add_argument("--heatmaps", type=Path, default=None, help="directory for per-Jacobian worst-case CSVs")
    j.set_defaults(fn=cmd_jacobian_check)

    g = sub.add_parser("g2o-roundtrip", help="read a g2o SE(3) graph and write it back")
    g.add_argument("input")
    g.add_argument("output")
    g.set_defaults(fn=cmd_g2o_roundtrip)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
