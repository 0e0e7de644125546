"""Command-line entry point: ``relaxo {synthesize,sweep,verify,simulate,optimize,audit}``.

Exit codes: 0 success, 1 numerical or verification failure, 2 usage error.
Set ``RELAXO_LOG`` (DEBUG, INFO, ...) to control logging.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analytic, export, oracle, pmp
from .bloch import DEFAULT_EPS, Magnetization, PulseParams, PulseTarget
from .errors import InvalidArgument, NumericalError, OptimizationFailure
from .trajectory import IntegratorConfig, integrate_optimal, simulate_cartesian, waveform_from_trajectory

log = logging.getLogger("relaxo")


class UsageError(Exception):
    pass


def _ratio(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and 0 < v < 1):
        raise argparse.ArgumentTypeError(f"r must lie in (0, 1), got {text}")
    return v


def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _vector(text):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected mx,my,mz, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three components, got {text!r}")
    return vals


def _add_pulse_flags(p, required=True):
    p.add_argument("--target", choices=["pi2", "pi"], required=required, help="pi/2 or pi pulse")
    p.add_argument("--r", type=_ratio, required=required, help="magnitude ratio M(T)/M(0), in (0, 1)")
    p.add_argument("--R", type=_positive, default=None, help="transverse relaxation rate (default 1; times then in 1/R units)")
    p.add_argument("--eps", type=_positive, default=DEFAULT_EPS, help="endpoint angle (default 1e-3)")


def _params(args):
    try:
        params = PulseParams(R=1.0 if args.R is None else args.R, r=args.r, eps=args.eps)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from exc
    return PulseTarget.parse(args.target), params, ("1/R" if args.R is None else "absolute")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synthesize(args) -> int:
    target, params, unit = _params(args)
    traj = integrate_optimal(target, params)
    wave = waveform_from_trajectory(traj, args.dt_out)
    sol = analytic.solve(target, params)
    metrics = sol.as_dict() | {
        "time_unit": unit,
        "duration_integrated": traj.duration,
        "a_final": float(traj.a[-1]),
        "energy_waveform": wave.energy(),
    }
    out = _out_dir(args)
    stem = f"{target.value}"
    if args.format == "csv":
        files = [
            export.write_csv(out / f"{stem}_waveform.csv", export.WAVEFORM_COLUMNS, zip(wave.times, wave.omega)),
            export.write_csv(
                out / f"{stem}_trajectory.csv",
                export.TRAJECTORY_COLUMNS,
                zip(traj.t, traj.theta, traj.a, traj.omega, traj.lambda_theta),
            ),
            export.write_json(out / f"{stem}_metrics.json", {"kind": "metrics", "params": export.params_block(target, params, unit), "metrics": metrics}),
        ]
    else:
        payload = {
            "kind": "synthesize",
            "params": export.params_block(target, params, unit),
            "metrics": metrics,
            "waveform": {"t0": wave.t0, "dt": wave.dt, "t": wave.times, "omega": wave.omega},
            "trajectory": export.trajectory_payload(traj),
        }
        files = [export.write_json(out / f"{stem}_synthesize.json", payload)]
    export.append_run(out, "synthesize", export.params_block(target, params, unit), files, metrics)
    print(f"kappa={sol.kappa:.10g} T={sol.duration:.10g} E={sol.energy:.10g} time_unit={unit}")
    for f in files:
        print(f"wrote {f}")
    return 0


def cmd_sweep(args) -> int:
    if args.r_steps < 1 or args.r_min > args.r_max or (args.r_steps > 1 and args.r_min == args.r_max):
        raise UsageError(f"empty r range: [{args.r_min}, {args.r_max}] with {args.r_steps} steps")
    R = 1.0 if args.R is None else args.R
    unit = "1/R" if args.R is None else "absolute"
    rs = np.linspace(args.r_min, args.r_max, args.r_steps) if args.r_steps > 1 else np.array([args.r_min])
    rows = []
    for r in rs:
        p = PulseParams(R=R, r=float(r), eps=args.eps)
        rows.append(
            (r, analytic.energy(PulseTarget.HalfPi, p), analytic.energy(PulseTarget.Pi, p),
             analytic.duration(PulseTarget.HalfPi, p), analytic.duration(PulseTarget.Pi, p),
             analytic.kappa(PulseTarget.HalfPi, r), analytic.kappa(PulseTarget.Pi, r))
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        out = export.write_csv(out, export.SWEEP_COLUMNS, rows)
    else:
        out = export.write_json(out, {
            "kind": "sweep",
            "params": {"R": R, "eps": args.eps, "time_unit": unit},
            "columns": list(export.SWEEP_COLUMNS),
            "rows": rows,
        })
    params = {"R": R, "eps": args.eps, "r_min": args.r_min, "r_max": args.r_max, "r_steps": args.r_steps, "time_unit": unit}
    export.append_run(out.parent, "sweep", params, [out], {"rows": len(rows)})
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


def _load_trajectory(args):
    path = Path(args.input)
    if path.suffix == ".json":
        doc = export.read_json(path)
        try:
            prm = doc["params"]
            target = PulseTarget.parse(prm["target"])
            params = PulseParams(R=prm["R"], r=prm["r"], eps=prm["eps"])
            kappa = float(doc["metrics"]["kappa"])
            block = doc["trajectory"]
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"malformed input file {path}: {exc}") from exc
        return export.trajectory_from_payload(block, params, target, kappa)
    if args.target is None or args.r is None:
        raise UsageError("a CSV trajectory needs --target and --r")
    target, params, _ = _params(args)
    cols = export.read_csv(path, export.TRAJECTORY_COLUMNS)
    kappa = args.kappa if args.kappa is not None else analytic.kappa(target, params.r)
    return export.trajectory_from_payload(cols, params, target, kappa)


def verification_report(traj) -> dict:
    target, params = traj.target, traj.params
    chk = pmp.check_trajectory(traj)
    k_closed = analytic.kappa(target, params.r)
    t_closed = analytic.duration(target, params)
    e_closed = analytic.energy(target, params)
    return {
        "residual_h": chk.residual_h / (params.R * max(float(np.max(traj.omega**2)), 1e-300)),
        "residual_adjoint": chk.residual_adjoint,
        "residual_stationarity": chk.residual_stationarity,
        "terminal_defect_theta": abs(float(traj.theta[-1]) - target.final_angle(params.eps)),
        "terminal_defect_a": abs(float(traj.a[-1]) - math.log(params.r)),
        "duration_quadrature_gap": abs(analytic.duration_quadrature(target, params, k_closed) - t_closed) * params.R,
        "energy_quadrature_gap": abs(analytic.energy_quadrature(target, params, k_closed) - e_closed) / e_closed,
        "constraint_residual": abs(analytic.constraint_residual(k_closed, target, params.r, params.eps)),
    }


def cmd_verify(args) -> int:
    if args.input:
        traj = _load_trajectory(args)
    else:
        if args.target is None or args.r is None:
            raise UsageError("verify needs --input or both --target and --r")
        target, params, _ = _params(args)
        traj = integrate_optimal(target, params)
    report = verification_report(traj)
    ok = all(v < args.tol for v in report.values())
    for k, v in report.items():
        print(f"{k:26s} {v:.3e}  {'ok' if v < args.tol else 'FAIL'}")
    print(f"tolerance {args.tol:g}: {'PASS' if ok else 'FAIL'}")
    if args.json:
        out = Path(args.json)
        out.parent.mkdir(parents=True, exist_ok=True)
        out = export.write_json(out, {"kind": "verify", "tolerance": args.tol, "passed": ok, "report": report})
        export.append_run(out.parent, "verify", {"input": args.input, "tol": args.tol}, [out], report)
    return 0 if ok else 1


def cmd_simulate(args) -> int:
    R = 1.0 if args.R is None else args.R
    if args.waveform:
        path = Path(args.waveform)
        if path.suffix == ".json":
            doc = export.read_json(path)
            try:
                wf = doc["waveform"]
                wave = export.waveform_from_columns(np.asarray(wf["t"], float), np.asarray(wf["omega"], float))
                if args.R is None:
                    R = float(doc["params"]["R"])
            except (KeyError, TypeError, ValueError) as exc:
                raise UsageError(f"malformed waveform file {path}: {exc}") from exc
        else:
            cols = export.read_csv(path, export.WAVEFORM_COLUMNS)
            wave = export.waveform_from_columns(cols["t"], cols["omega"])
        params_echo = {"waveform": str(path), "R": R}
    else:
        if args.target is None or args.r is None:
            raise UsageError("simulate needs --waveform or both --target and --r")
        target, params, _ = _params(args)
        wave = waveform_from_trajectory(integrate_optimal(target, params))
        params_echo = export.params_block(target, params, "1/R" if args.R is None else "absolute")
    m0 = Magnetization(*args.m0)
    if m0.magnitude == 0:
        raise UsageError("initial magnetization must be non-zero")
    run = simulate_cartesian(wave, m0, R, IntegratorConfig(dt=args.dt))
    a, theta, phi = run.spherical()
    out = _out_dir(args)
    stem = Path(args.waveform).stem if args.waveform else params_echo["target"]
    path = export.write_csv(
        out / f"{stem}_simulation.csv",
        export.MAGNETIZATION_COLUMNS,
        zip(run.t, run.m[:, 0], run.m[:, 1], run.m[:, 2], np.exp(a), theta, phi),
    )
    metrics = {"final_ratio": run.final_ratio, "final_theta": run.final_theta, "final_mz": float(run.m[-1, 2])}
    export.append_run(out, "simulate", params_echo | {"m0": list(args.m0)}, [path], metrics)
    print(f"final |M|/M0={run.final_ratio:.10g} theta={run.final_theta:.10g} mz={run.m[-1, 2]:.10g}")
    print(f"wrote {path}")
    return 0


def cmd_optimize(args) -> int:
    target, params, unit = _params(args)
    try:
        prob = oracle.DirectProblem.at_analytic_horizon(target, params, n=args.n, seed=args.seed)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from exc
    opts = oracle.SolveOptions(max_iters=args.max_iters, warm_start=args.warm_start)
    out = _out_dir(args)
    stem = f"{target.value}"
    try:
        res = oracle.solve_direct(prob, opts)
    except OptimizationFailure as exc:
        trace_path = export.write_json(out / f"{stem}_optimize_trace.json", {"kind": "trace", "trace": exc.trace})
        export.append_run(out, "optimize", export.params_block(target, params, unit), [trace_path], {"error": str(exc)})
        print(f"optimization failed: {exc}; trace in {trace_path}", file=sys.stderr)
        return 1
    cmp = oracle.compare_to_analytic(res, prob)
    t = np.arange(prob.n) * prob.dt
    files = [
        export.write_csv(out / f"{stem}_oracle.csv", export.ORACLE_COLUMNS, zip(t, t + 0.5 * prob.dt, res.omega.omega)),
        export.write_json(out / f"{stem}_optimize.json", {
            "kind": "optimize",
            "params": export.params_block(target, params, unit) | {"n": prob.n, "seed": prob.seed, "warm_start": args.warm_start, "horizon": prob.horizon},
            "result": res.summary(),
            "comparison": cmp,
            "note": "numerical evidence of optimality, not a proof",
        }),
    ]
    export.append_run(out, "optimize", export.params_block(target, params, unit), files, res.summary() | cmp)
    status = "converged" if res.converged else "NOT converged"
    print(f"{status} after {res.iterations} outer / {res.inner_iterations} inner iterations")
    print(f"oracle energy={res.energy:.10g} analytic={cmp['energy_analytic']:.10g} rel_gap={cmp['energy_rel_gap']:.3e}")
    print(f"waveform max deviation={cmp['waveform_max_dev']:.3e} of peak")
    for f in files:
        print(f"wrote {f}")
    return 0


def cmd_audit(args) -> int:
    target, params, unit = _params(args)
    traj = integrate_optimal(target, params)
    rep = oracle.perturbation_audit(traj, args.trials, args.magnitude, args.seed)
    out = _out_dir(args)
    path = export.write_json(out / f"{target.value}_audit.json", {"kind": "audit", "params": export.params_block(target, params, unit), "summary": rep.summary()})
    export.append_run(out, "audit", export.params_block(target, params, unit), [path], rep.summary())
    for k, v in rep.summary().items():
        print(f"{k}: {v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relaxo", description="Minimum-energy pi/2 and pi pulses under transverse relaxation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="closed-form pulse, waveform and trajectory files")
    _add_pulse_flags(p)
    p.add_argument("--dt-out", type=_positive, default=None, help="output sample spacing (default: integrator step)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("sweep", help="energy/duration/kappa table over r")
    p.add_argument("--r-min", type=_ratio, default=0.05)
    p.add_argument("--r-max", type=_ratio, default=0.95)
    p.add_argument("--r-steps", type=int, default=19)
    p.add_argument("--R", type=_positive, default=None)
    p.add_argument("--eps", type=_positive, default=DEFAULT_EPS)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default="sweep.csv", help="output file")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="necessary-condition and closed-form residuals")
    _add_pulse_flags(p, required=False)
    p.add_argument("--input", default=None, help="synthesize JSON output or trajectory CSV")
    p.add_argument("--kappa", type=_positive, default=None, help="override kappa for a CSV trajectory")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--json", default=None, help="also write the report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="Cartesian Bloch simulation of a waveform")
    _add_pulse_flags(p, required=False)
    p.add_argument("--waveform", default=None, help="waveform CSV (t,omega) or synthesize JSON")
    p.add_argument("--m0", type=_vector, default=[0.0, 0.0, 1.0], help="initial magnetization mx,my,mz")
    p.add_argument("--dt", type=_positive, default=None, help="maximum integration step")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="independent direct optimal-control solve")
    _add_pulse_flags(p)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=20_000)
    p.add_argument("--warm-start", choices=["ramp", "analytic"], default="ramp")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("audit", help="random constraint-corrected perturbations of the optimum")
    _add_pulse_flags(p)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--magnitude", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RELAXO_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"relaxo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except InvalidArgument as exc:
        print(f"relaxo {args.command}: invalid input: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"relaxo {args.command}: numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
