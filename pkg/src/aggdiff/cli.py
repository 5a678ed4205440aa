"""Command-line front end: stationary solves, evolutions, envelopes, analysis,
the Cartesian harness, and the named-experiment runner."""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, envelopes, experiments, potentials, radial_solver as rs, stationary as st
from .config import ExperimentConfig, read_config
from .core import Params, RadialGrid, mass_function, read_profile_csv, write_profile_csv
from .errors import AggDiffError, ConfigError
from .initdata import make_initial_profile


def _add_model_args(sp):
    sp.add_argument("--m", type=float, default=2.0, help="diffusion exponent (> 1)")
    sp.add_argument("--d", type=int, default=3, help="spatial dimension (>= 3)")
    sp.add_argument("--mass", type=float, default=1.0)
    sp.add_argument("--kernel", default="newtonian",
                    help="newtonian | mollified | custom")
    sp.add_argument("--kernel-shape", default="gaussian", help="gaussian | ball | table")
    sp.add_argument("--kernel-width", type=float, default=0.5)
    sp.add_argument("--kernel-table", default=None, help="CSV r,value table path")


def _kernel_from_args(args) -> potentials.Kernel:
    cfg = {"kernel.kind": args.kernel, "kernel.h.shape": args.kernel_shape,
           "kernel.h.width": args.kernel_width}
    if args.kernel_table:
        cfg["kernel.table.path"] = args.kernel_table
        cfg["kernel.h.shape"] = "table"
    return potentials.kernel_from_config(cfg)


def _add_solver_args(sp):
    sp.add_argument("--init", default="uniform-ball:2.0",
                    help="uniform-ball:R | stationary-dilation:k | barenblatt:t0 | "
                         "tall-bump:eps | annulus:r0,w | file:<csv>")
    sp.add_argument("--t-end", type=float, default=1.0)
    sp.add_argument("--dr", type=float, default=None)
    sp.add_argument("--domain-radius", type=float, default=8.0)
    sp.add_argument("--n", type=int, default=800)
    sp.add_argument("--snapshots", default="", help="comma-separated times")
    sp.add_argument("--out", default="run_out")


def _solver_grid(args, p: Params) -> RadialGrid:
    if args.dr is not None:
        n = int(round(args.domain_radius / args.dr))
        return RadialGrid(dr=args.dr, n=n, d=p.d)
    return RadialGrid(dr=args.domain_radius / args.n, n=args.n, d=p.d)


def _run_evolution(args, rescaled: bool) -> int:
    p = Params(args.m, args.d)
    kernel = _kernel_from_args(args)
    grid = _solver_grid(args, p)
    rho0 = make_initial_profile(args.init, grid, p, kernel, mass=args.mass)
    snaps = tuple(float(x) for x in args.snapshots.split(",") if x.strip())
    opts = rs.SolverOptions(t_end=args.t_end, snapshot_times=snaps)
    runner = rs.evolve_rescaled if rescaled else rs.evolve
    traj = runner(rs.SolverState(rho0), kernel, p, opts)
    out = Path(args.out)
    (out / "series").mkdir(parents=True, exist_ok=True)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    traj.write_csv(out / "series" / "diagnostics.csv")
    for tc, prof in traj.snapshots:
        write_profile_csv(out / "snapshots" / f"rho_t{tc:g}.csv", prof)
    write_profile_csv(out / "snapshots" / "final.csv", traj.final.rho)
    print(f"status={traj.status} t={traj.final.t:g} steps={traj.final.step_count} "
          f"mass={traj.mass[-1]:.12g}")
    return 0 if traj.status == "completed" else 1


def _cmd_stationary(args) -> int:
    p = Params(args.m, args.d)
    kernel = _kernel_from_args(args)
    sol = st.solve_stationary(p, kernel, args.mass, n=args.n,
                              domain_radius=args.domain_radius)
    write_profile_csv(args.out, sol.profile)
    print(f"support_radius={sol.support_radius:.8g} center={sol.center_density:.8g} "
          f"mass={sol.mass:.12g} residual={sol.equation_residual:.3g}")
    return 0


def _cmd_envelope(args) -> int:
    p = Params(args.m, args.d)
    coeff = args.coeff
    t, k, diverged, t_esc = envelopes.integrate_scaling_ode(
        args.kind + "solution", args.frame, args.k0, coeff, p,
        t_end=args.t_end)
    rate = envelopes.fit_scaling_rate(t, k)
    lines = ["t,k,rate_fit"]
    rate_out = rate if rate is not None else float("nan")
    for tv, kv in zip(t, k):
        lines.append(f"{tv:.17g},{kv:.17g},{rate_out:.17g}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    if diverged:
        print(f"diverged at t={t_esc:g}")
    else:
        print(f"rate_fit={rate_out:g}")
    return 0


def _cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    if args.metric in ("w2", "lp", "monotonicity"):
        files = sorted((run_dir / "snapshots").glob("*.csv"))
        if not files:
            raise ConfigError(f"no snapshots under {run_dir}")
        profiles = [read_profile_csv(f) for f in files]
        if args.metric == "w2":
            ref = profiles[-1]
            for f, prof in zip(files, profiles):
                w = analysis.wasserstein_p(mass_function(prof), mass_function(ref), 2.0)
                print(f"{f.name}: W2-to-last = {w:.8g}")
        elif args.metric == "lp":
            for f, prof in zip(files, profiles):
                print(f"{f.name}: L2 = {analysis.lp_norm(prof, 2.0):.8g} "
                      f"Linf = {analysis.lp_norm(prof, float('inf')):.8g}")
        else:
            for f, prof in zip(files, profiles):
                print(f"{f.name}: monotonicity_violation = "
                      f"{analysis.monotonicity_violation(prof):.8g}")
        return 0
    if args.metric == "rate":
        series = np.genfromtxt(run_dir / "series" / "diagnostics.csv", delimiter=",",
                               names=True)
        col = series["sup_mass_err"]
        good = np.isfinite(col) & (col > 0)
        fit = analysis.fit_decay(series["t"][good], col[good], model=args.model)
        print(f"rate = {fit.rate:.8g} (model {fit.model}, window {fit.window})")
        return 0
    raise ConfigError(f"unknown metric {args.metric!r}")


def _cmd_cartesian(args) -> int:
    from . import cartesian as cart

    p = Params(args.m, 3)
    kernel = _kernel_from_args(args)
    n = args.n
    box = args.box
    h = box / n
    if args.init.startswith("two-balls"):
        f0 = experiments.two_balls_field(n, box)
    elif args.init.startswith("off-center-ball"):
        f0 = experiments.offcenter_ball_field(n, box)
    elif args.init.startswith("file:"):
        f0 = cart.read_field_csv(args.init.split(":", 1)[1])
    else:
        raise ConfigError(f"unknown cartesian init {args.init!r}")
    snaps = tuple(float(x) for x in args.snapshots.split(",") if x.strip()) or (args.t_end,)
    opts = rs.SolverOptions(t_end=args.t_end, snapshot_times=snaps)
    rep = cart.symmetrized_comparison_run(f0, kernel, p, opts)
    out = Path(args.out)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    for tc, fld in rep.cartesian_trajectory.snapshots:
        cart.write_field_csv(out / "snapshots" / f"field_t{tc:g}.csv", fld)
    print(f"passed={rep.passed} order_margins={rep.order_margins}")
    return 0 if rep.passed else 1


def _config_from_run_args(args) -> ExperimentConfig:
    if args.config:
        cfg = read_config(args.config)
    else:
        cfg = ExperimentConfig()
    if args.experiment:
        cfg.set("experiment", args.experiment)
    if args.seed is not None:
        cfg.set("seed", args.seed)
    if args.out:
        cfg.set("out", args.out)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        cfg.set(key.strip(), value.strip())
    return cfg


def _run_one(cfg: ExperimentConfig) -> dict:
    return experiments.run_experiment(cfg)


def _cmd_run(args) -> int:
    cfg = _config_from_run_args(args)
    if args.jobs and args.jobs > 1 and args.sweep_seeds:
        seeds = [int(s) for s in args.sweep_seeds.split(",")]
        cfgs = []
        for s in seeds:
            c = ExperimentConfig(dict(cfg.entries))
            c.set("seed", s)
            if c.get("out"):
                c.set("out", f"{c.get('out')}-seed{s}")
            cfgs.append(c)
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_run_one, cfgs))
    else:
        summaries = [experiments.run_experiment(cfg)]
    ok = all(s["pass"] for s in summaries)
    for s in summaries:
        print(json.dumps({"experiment": s["experiment"], "pass": s["pass"]}))
    return 0 if ok else 1


def _cmd_list(args) -> int:
    for name, theorem in experiments.list_experiments().items():
        print(f"{name}: {theorem}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="aggdiff",
        description="Radial finite-volume laboratory for degenerate diffusion "
                    "with nonlocal aggregation drift.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("stationary", help="solve a radial steady state by shooting")
    _add_model_args(sp)
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--domain-radius", type=float, default=None)
    sp.add_argument("--out", default="profile.csv")
    sp.set_defaults(func=_cmd_stationary)

    sp = sub.add_parser("evolve", help="explicit evolution in the original frame")
    _add_model_args(sp)
    _add_solver_args(sp)
    sp.set_defaults(func=lambda a: _run_evolution(a, rescaled=False))

    sp = sub.add_parser("rescaled", help="evolution in self-similar variables")
    _add_model_args(sp)
    _add_solver_args(sp)
    sp.set_defaults(func=lambda a: _run_evolution(a, rescaled=True))

    sp = sub.add_parser("envelope", help="integrate the dilation scaling ODE")
    sp.add_argument("--kind", choices=("sub", "super"), default="sub")
    sp.add_argument("--frame", choices=("original", "rescaled"), default="original")
    sp.add_argument("--k0", type=float, required=True)
    sp.add_argument("--coeff", type=float, default=1.0)
    sp.add_argument("--m", type=float, default=2.0)
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--t-end", type=float, default=None)
    sp.add_argument("--out", default="envelope.csv")
    sp.set_defaults(func=_cmd_envelope)

    sp = sub.add_parser("analyze", help="metrics over a run directory")
    sp.add_argument("--metric", choices=("w2", "lp", "monotonicity", "rate"),
                    required=True)
    sp.add_argument("--in", dest="run_dir", required=True)
    sp.add_argument("--model", choices=("exponential", "algebraic"),
                    default="exponential")
    sp.set_defaults(func=_cmd_analyze)

    sp = sub.add_parser("cartesian", help="3D comparison harness")
    sp.add_argument("--m", type=float, default=2.0)
    sp.add_argument("--n", type=int, default=48)
    sp.add_argument("--box", type=float, default=12.0)
    sp.add_argument("--init", default="two-balls")
    sp.add_argument("--kernel", default="newtonian")
    sp.add_argument("--kernel-shape", default="gaussian")
    sp.add_argument("--kernel-width", type=float, default=0.5)
    sp.add_argument("--kernel-table", default=None)
    sp.add_argument("--t-end", type=float, default=0.5)
    sp.add_argument("--snapshots", default="")
    sp.add_argument("--out", default="cartesian_out")
    sp.set_defaults(func=_cmd_cartesian)

    sp = sub.add_parser("run", help="run a named experiment from a config")
    sp.add_argument("--config", default=None, help="key=value config file")
    sp.add_argument("--experiment", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a config entry")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--sweep-seeds", default=None,
                    help="comma-separated seeds to fan out with --jobs")
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("list-experiments", help="print the experiment registry")
    sp.set_defaults(func=_cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AggDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
