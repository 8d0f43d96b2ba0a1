"""Command-line front end: simulation, gradient checks, optimization, verification.

Every run materializes its own directory under the output root (flag
--out, else the SMP_SPDE_OUT environment variable, else ./runs) and
writes a fully resolved config copy there before doing any work, so a
run directory plus its seeds reproduces the outputs bit for bit.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from . import noise as noise_mod
from .forward import constant_control, estimate_cost, export_forward_csv, simulate_path
from .harness import run_suite, suite_passed
from .models import ConfigError, ProblemSpec, builtin_problem, check_assumptions, load_problem
from .noise import generate_batch
from .optimizer import OptimizeOptions, fd_gradient_check, projected_gradient_descent
from .sensitivity import eps_scaling_report
from .spectral import FieldFormatError

__all__ = ["main", "build_parser", "dump_problem_config"]

_DEFAULT_EPS = (0.2, 0.1, 0.05, 0.025)
_FD_EPS = (1e-2, 1e-3, 1e-4)


def _fmt_vec(v) -> str:
    return ", ".join(repr(float(x)) for x in np.atleast_1d(v))


def dump_problem_config(spec: ProblemSpec) -> str:
    """Serialize a problem to the INI format accepted by load_problem."""
    gain_rows = "; ".join(_fmt_vec(row) for row in spec.drift.gain)
    lines = [
        "[space]",
        f"n_modes = {spec.space.n_modes}",
        "",
        "[operator]",
        f"diag = {_fmt_vec(spec.a_op.diag)}",
        f"theta = {spec.a_op.theta!r}",
        "",
        "[drift]",
        f"kind = {spec.drift.kind}",
        f"gain = {gain_rows}",
        f"c3 = {spec.drift.c3!r}",
        f"K = {spec.drift.K!r}",
        f"K2 = {spec.drift.K2!r}",
        f"K3 = {spec.drift.K3!r}",
        f"K4 = {spec.drift.K4!r}",
        f"K5 = {spec.drift.K5!r}",
        "",
        "[noise]",
        f"kind = {spec.noise.kind}",
        f"sigma = {_fmt_vec(spec.noise.sigma)}",
        f"m_noise = {spec.noise.m_noise}",
        f"saturation = {spec.noise.saturation!r}",
        f"K6 = {spec.noise.K6!r}",
        "",
        "[cost]",
        f"q = {spec.cost.q!r}",
        f"r = {spec.cost.r!r}",
        f"g = {spec.cost.g!r}",
        f"u_ref = {_fmt_vec(spec.cost.u_ref)}",
        f"u_T = {_fmt_vec(spec.cost.u_T)}",
        f"C_L = {spec.cost.C_L!r}",
        f"C_K = {spec.cost.C_K!r}",
        f"k_L = {spec.cost.k_L!r}",
        f"k_K = {spec.cost.k_K!r}",
        "",
        "[controls]",
        f"lower = {_fmt_vec(spec.controls.lower)}",
        f"upper = {_fmt_vec(spec.controls.upper)}",
        "",
        "[time]",
        f"horizon = {spec.horizon!r}",
        f"n_steps = {spec.n_steps}",
        "",
        "[initial]",
        f"u0 = {_fmt_vec(spec.u0)}",
        "",
    ]
    return "\n".join(lines)


def _load_problem_ref(ref: str) -> ProblemSpec:
    if ref.startswith("builtin:"):
        return builtin_problem(ref[len("builtin:"):])
    return load_problem(ref)


def _make_run_dir(args) -> Path:
    root = Path(args.out) if args.out else Path(os.environ.get("SMP_SPDE_OUT", "runs"))
    stamp = datetime.now().strftime("%Y%m%dT%H%M%S")
    run_dir = root / f"{stamp}-{args.command}"
    k = 1
    while run_dir.exists():
        run_dir = root / f"{stamp}-{args.command}-{k}"
        k += 1
    run_dir.mkdir(parents=True)
    return run_dir


def _write_resolved_config(args, run_dir: Path, spec: ProblemSpec | None) -> None:
    # All defaults are materialized here; the persisted copy is explicit.
    lines = [
        "[run]",
        f"command = {args.command}",
        f"config = {args.config}",
        f"seed = {args.seed}",
        f"paths = {args.paths}",
        f"method = {getattr(args, 'method', 'discrete-adjoint')}",
        f"threads = {args.threads}",
        f"out = {run_dir}",
        "",
    ]
    text = "\n".join(lines)
    if spec is not None:
        text += dump_problem_config(spec)
    else:
        text += Path(args.config).read_text()
    (run_dir / "resolved-config.cfg").write_text(text)


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload))
    else:
        print(human)


def _cmd_simulate(args) -> int:
    spec = _load_problem_ref(args.config)
    run_dir = _make_run_dir(args)
    _write_resolved_config(args, run_dir, spec)
    control = constant_control(spec, np.zeros(spec.d_control))
    files = []
    for pid in range(args.paths):
        wiener = noise_mod.generate(args.seed, pid, spec.n_steps, spec.noise.m_noise, spec.dt)
        fpath = simulate_path(spec, spec.u0, control, wiener)
        out = run_dir / f"trajectory_{pid:04d}.csv"
        export_forward_csv(spec, fpath, out)
        files.append(str(out))
    _emit(args, {"run_dir": str(run_dir), "files": files},
          f"wrote {len(files)} trajectories to {run_dir}")
    return 0


def _cmd_cost(args) -> int:
    spec = _load_problem_ref(args.config)
    run_dir = _make_run_dir(args)
    _write_resolved_config(args, run_dir, spec)
    control = constant_control(spec, np.zeros(spec.d_control))
    batch = generate_batch(args.seed, range(args.paths), spec.n_steps, spec.noise.m_noise, spec.dt)
    est = estimate_cost(spec, spec.u0, control, batch)
    (run_dir / "cost.json").write_text(est.to_json() + "\n")
    _emit(args, est.to_dict(),
          f"cost {est.mean:.6g} +/- {est.std_err:.2g} ({est.n_paths} paths, "
          f"{est.invalid_paths} invalid) -> {run_dir}")
    return 0 if est.valid else 1


def _cmd_grad_check(args) -> int:
    spec = _load_problem_ref(args.config)
    run_dir = _make_run_dir(args)
    _write_resolved_config(args, run_dir, spec)
    control = constant_control(spec, np.zeros(spec.d_control))
    direction = constant_control(spec, 0.5 * np.ones(spec.d_control))
    report = fd_gradient_check(
        spec, spec.u0, control, [direction], _FD_EPS,
        n_paths=args.paths, seed=args.seed, method=args.method,
    )
    payload = report.to_dict()
    (run_dir / "grad_check.json").write_text(json.dumps(payload, indent=2) + "\n")
    best = float(np.min(report.rel_errors))
    _emit(args, payload, f"best relative error {best:.3g}, remainder slope "
                         f"{report.remainder_slopes[0]:.3f} -> {run_dir}")
    return 0


def _cmd_eps_scaling(args) -> int:
    spec = _load_problem_ref(args.config)
    run_dir = _make_run_dir(args)
    _write_resolved_config(args, run_dir, spec)
    control = constant_control(spec, np.zeros(spec.d_control))
    direction = constant_control(spec, 0.5 * np.ones(spec.d_control))
    report = eps_scaling_report(spec, spec.u0, control, direction, _DEFAULT_EPS,
                                n_paths=args.paths, seed=args.seed)
    report.write_csv(run_dir / "eps_scaling.csv")
    (run_dir / "eps_scaling.json").write_text(report.to_json() + "\n")
    _emit(args, report.to_dict(),
          f"perturbation slope {report.slope:.4f}, remainder slope "
          f"{report.delta_slope:.4f} -> {run_dir}")
    return 0


def _cmd_optimize(args) -> int:
    spec = _load_problem_ref(args.config)
    run_dir = _make_run_dir(args)
    _write_resolved_config(args, run_dir, spec)
    opts = OptimizeOptions(n_paths=args.paths, seed=args.seed, method=args.method)
    phi0 = constant_control(spec, np.zeros(spec.d_control))
    report = projected_gradient_descent(spec, spec.u0, phi0, opts)
    (run_dir / "optimize_report.json").write_text(report.to_json() + "\n")
    report.write_csv(run_dir / "optimize_log.csv")
    _emit(args, report.to_dict(),
          f"cost {report.iterates[0]:.6g} -> {report.iterates[-1]:.6g} in "
          f"{len(report.iterates) - 1} accepted steps, final residual "
          f"{report.smp_residual_history[-1]:.3g} -> {run_dir}")
    return 0


def _cmd_verify(args) -> int:
    run_dir = _make_run_dir(args)
    _write_resolved_config(args, run_dir, None)
    reports = run_suite(args.config, out_root=run_dir)
    ok = suite_passed(reports)
    if args.json:
        print(json.dumps([r.to_dict() for r in reports]))
    else:
        for r in reports:
            status = "PASS" if r.verdict else "FAIL"
            print(f"[{status}] {r.name}: {r.claim} ({r.runtime_s:.2f}s)")
        print(f"suite {'passed' if ok else 'FAILED'} -> {run_dir}")
    return 0 if ok else 1


def _cmd_check_assumptions(args) -> int:
    spec = _load_problem_ref(args.config)
    run_dir = _make_run_dir(args)
    _write_resolved_config(args, run_dir, spec)
    report = check_assumptions(spec, n_samples=args.paths, seed=args.seed)
    payload = report.to_dict()
    (run_dir / "assumptions.json").write_text(json.dumps(payload, indent=2) + "\n")
    ok = report.a2_min_margin >= 0.0 and report.a3_min_margin >= 0.0
    _emit(args, payload,
          f"monotonicity margin {report.a2_min_margin:.3g}, coercivity margin "
          f"{report.a3_min_margin:.3g}, exponential-moment condition "
          f"{'holds' if report.exp_moment_satisfied else 'violated'} -> {run_dir}")
    return 0 if ok else 1


_COMMANDS = {
    "simulate": _cmd_simulate,
    "cost": _cmd_cost,
    "grad-check": _cmd_grad_check,
    "eps-scaling": _cmd_eps_scaling,
    "optimize": _cmd_optimize,
    "verify": _cmd_verify,
    "check-assumptions": _cmd_check_assumptions,
}

_HELP = {
    "simulate": "simulate forward paths and export CSV trajectories",
    "cost": "Monte Carlo estimate of the control cost",
    "grad-check": "adjoint gradient against finite differences",
    "eps-scaling": "perturbation-scaling report",
    "optimize": "projected gradient descent on the box",
    "verify": "run a verification suite config",
    "check-assumptions": "sampled structural-condition margins",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smp-spde",
        description="Spectral stochastic PDE control lab: simulation, adjoints, "
                    "optimization, and verification experiments.",
    )
    sub = parser.add_subparsers(dest="command")
    for name, runner in _COMMANDS.items():
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", required=True,
                       help="problem config file, or builtin:<name>"
                            if name != "verify" else "suite config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--paths", type=int, default=100 if name != "simulate" else 1)
        p.add_argument("--out", default=None, help="output root (default: $SMP_SPDE_OUT or ./runs)")
        p.add_argument("--method", choices=["discrete-adjoint", "lsmc"],
                       default="discrete-adjoint")
        p.add_argument("--threads", type=int, default=1,
                       help="worker bound; results are identical at any value")
        p.add_argument("--json", action="store_true", help="machine-readable stdout")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FieldFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
