"""Named experiments binding the solvers into reproducible, machine-readable runs.

Each experiment consumes an ExperimentConfig, runs deterministically for a given
(config, seed), and produces a summary dict validating against SUMMARY_SCHEMA.
With an output directory it also writes config.resolved, summary.json,
series/*.csv and snapshots/*.csv.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import analysis, envelopes, potentials, radial_solver as rs, stationary as st
from .cartesian import CartesianField, field_from_function, rearrange_3d, symmetrized_comparison_run
from .config import ExperimentConfig
from .core import (Params, RadialGrid, RadialProfile, dilate, mass_function,
                   precedes, write_profile_csv)
from .errors import ConfigError
from .initdata import bump_shape, make_initial_profile

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["experiment", "theorem", "params", "metrics", "pass"],
    "properties": {
        "experiment": {"type": "string"},
        "theorem": {"type": "string"},
        "params": {"type": "object"},
        "metrics": {"type": "object"},
        "pass": {"type": "boolean"},
    },
}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    theorem: str  # the claim the experiment tests
    runner: Callable


def _params(cfg: ExperimentConfig, default_m: float = 2.0) -> Params:
    return Params(float(cfg.get("params.m", default_m)), int(cfg.get("params.d", 3)))


def _kernel(cfg: ExperimentConfig) -> potentials.Kernel:
    return potentials.kernel_from_config(cfg.entries)


def _mid_band_fit(times: np.ndarray, series: np.ndarray,
                  lo_factor: float = 3.0, hi_fraction: float = 0.3) -> analysis.DecayFit:
    """Exponential fit over the clean mid-decay band: above lo_factor times the
    final (plateau) level and below hi_fraction of the peak."""
    peak = float(series[0])
    floor = max(lo_factor * float(series[-1]), 1e-6 * peak)
    mask = (series >= floor) & (series <= hi_fraction * peak) & (times > times[0])
    if np.count_nonzero(mask) < 10:
        raise ValueError("mid-decay band has too few samples")
    tw = times[mask]
    return analysis.fit_decay(tw, series[mask], window=(float(tw[0]), float(tw[-1])))


def _ensure_dirs(out: Path | None):
    if out is None:
        return None, None
    series = out / "series"
    snaps = out / "snapshots"
    series.mkdir(parents=True, exist_ok=True)
    snaps.mkdir(parents=True, exist_ok=True)
    return series, snaps


# ---------------------------------------------------------------------------
# envelope-ode
# ---------------------------------------------------------------------------

def _run_envelope_ode(cfg: ExperimentConfig, out: Path | None, rng) -> dict:
    p = _params(cfg)
    coeff = float(cfg.get("envelope.coeff", 1.0))
    k0 = float(cfg.get("envelope.k0", 0.5))
    t, k, diverged, _ = envelopes.integrate_scaling_ode(
        envelopes.SUBSOLUTION, envelopes.ORIGINAL, k0, coeff, p)
    rate = envelopes.fit_scaling_rate(t, k)
    expected = envelopes.linearized_rate(coeff, p)
    rate_rel_err = abs(rate - expected) / expected

    t1, k1, _, _ = envelopes.integrate_scaling_ode(
        envelopes.SUBSOLUTION, envelopes.ORIGINAL, 1.0, coeff, p, t_end=5.0)
    fixed_point_dev = float(np.max(np.abs(k1 - 1.0)))

    # decaying-forcing ODE basin at the calibrated parameters
    c1 = c2 = a_exp = b_exp = 1.0
    d = 3
    delta = envelopes.forced_scaling_basin_threshold(c1, c2, a_exp, b_exp, d)
    eps_rate = envelopes.forced_scaling_rate(c1, c2, a_exp, b_exp)
    tb, kb, div_b, _ = envelopes.integrate_forced_scaling_ode(
        delta / 2.0, c1, c2, a_exp, b_exp, d, t_end=60.0)
    gap = np.abs(kb - 1.0)
    i1 = int(np.searchsorted(tb, 25.0))
    i2 = int(np.searchsorted(tb, 28.0))
    c_anchor = float(np.max(gap[i1:i2] * np.exp(eps_rate * tb[i1:i2])))
    bound = c_anchor * np.exp(-eps_rate * tb[i1:])
    usable = bound > 3e-10  # below this the integrator's relative noise dominates
    bound_holds = bool(np.all(gap[i1:][usable] <= bound[usable] * (1 + 1e-6)))
    basin_converged = (not div_b) and abs(kb[-1] - 1.0) < 1e-6

    if out is not None:
        traj = envelopes.EnvelopeTrajectory(None, t, k, envelopes.SUBSOLUTION,
                                            envelopes.ORIGINAL, (coeff, coeff), rate)
        traj.write_csv(out / "series" / "scaling_ode.csv")

    ok = rate_rel_err <= 0.02 and basin_converged and bound_holds \
        and fixed_point_dev <= 1e-12 and not diverged
    return {
        "metrics": {
            "fitted_rate": rate, "expected_rate": expected,
            "rate_rel_err": rate_rel_err, "fixed_point_dev": fixed_point_dev,
            "basin_delta": delta, "basin_converged": basin_converged,
            "basin_rate": eps_rate, "basin_bound_holds": bound_holds,
        },
        "pass": bool(ok),
    }


# ---------------------------------------------------------------------------
# stationary-profile
# ---------------------------------------------------------------------------

def _run_stationary_profile(cfg: ExperimentConfig, out: Path | None, rng) -> dict:
    p = _params(cfg)
    k = _kernel(cfg)
    mass = float(cfg.get("mass", 1.0))
    n = int(cfg.get("solver.n", 2000))
    t0 = time.perf_counter()
    sol = st.solve_stationary(p, k, mass, n=n,
                              domain_radius=cfg.get("solver.domain_radius", 6.0))
    solve_seconds = time.perf_counter() - t0

    metrics = {
        "support_radius": sol.support_radius,
        "center_density": sol.center_density,
        "mass": sol.mass,
        "equation_residual": sol.equation_residual,
        "solve_seconds": solve_seconds,
    }
    ok = True
    if p.m == 2.0 and p.d == 3 and k.is_newtonian:
        _, support_exact, center_exact = st.m2_newtonian_closed_form(mass)
        metrics["support_rel_err"] = abs(sol.support_radius - support_exact) / support_exact
        metrics["center_rel_err"] = abs(sol.center_density - center_exact) / center_exact
        ok = metrics["support_rel_err"] <= 5e-3 and metrics["center_rel_err"] <= 5e-3 \
            and solve_seconds < 5.0

    # mass-scaling dichotomy across the m = 2 boundary
    dichotomy = {}
    for m_val, expect in ((3.0, "grows"), (1.8, "shrinks"), (2.0, "equal")):
        pp = Params(m_val, p.d)
        s1 = st.solve_stationary(pp, potentials.newtonian_kernel(), 1.0, n=600)
        s8 = st.solve_stationary(pp, potentials.newtonian_kernel(), 8.0, n=600)
        r1, r8 = s1.support_radius, s8.support_radius
        if expect == "grows":
            good = r8 > r1 * 1.005
        elif expect == "shrinks":
            good = r8 < r1 * 0.995
        else:
            good = abs(r8 - r1) <= 5e-3 * r1
        dichotomy[f"m={m_val}"] = {"r_mass1": r1, "r_mass8": r8, "ok": bool(good)}
        ok = ok and good
    metrics["dichotomy"] = dichotomy

    if out is not None:
        write_profile_csv(out / "snapshots" / "stationary.csv", sol.profile)
    return {"metrics": metrics, "pass": bool(ok)}


# ---------------------------------------------------------------------------
# converge-subcritical
# ---------------------------------------------------------------------------

def _run_converge_subcritical(cfg: ExperimentConfig, out: Path | None, rng) -> dict:
    p = _params(cfg)
    k = _kernel(cfg)
    mass = float(cfg.get("mass", 1.0))
    n = int(cfg.get("solver.n", 2000))
    domain = float(cfg.get("solver.domain_radius", 12.0))
    t_end = float(cfg.get("solver.t_end", 1500.0))

    sol = st.solve_stationary(p, k, mass, n=n, domain_radius=domain)
    grid = sol.grid
    init_spec = cfg.get("init", "uniform-ball:3.0")
    rho0 = make_initial_profile(init_spec, grid, p, k, mass=mass)

    constants = envelopes.envelope_constants(sol, k, p)
    coeffs = envelopes.ode_coefficients(constants, p)
    rate_lo = envelopes.linearized_rate(coeffs[0], p)
    rate_hi = envelopes.linearized_rate(coeffs[1], p)
    k_sub, k_super = envelopes.bracketing_dilations(rho0, sol)
    traj_sub = envelopes.integrate_envelope(envelopes.SUBSOLUTION, envelopes.ORIGINAL,
                                            k_sub, coeffs, p, sol, t_end=t_end)
    traj_super = envelopes.integrate_envelope(envelopes.SUPERSOLUTION, envelopes.ORIGINAL,
                                              k_super, coeffs, p, sol, t_end=t_end)

    # early growth intervals, anchored past the front's numerical foot
    ladder_t0 = 0.5
    ladder = (0.5, 1.0, 2.0, 4.0)
    ladder_times = {ladder_t0} | {ladder_t0 + h for h in ladder}
    snap_times = tuple(cfg.snapshot_times()) or tuple(np.linspace(t_end / 15, t_end, 15))
    opts = rs.SolverOptions(t_end=t_end, diag_samples=int(cfg.get("solver.diag_samples", 1200)),
                            snapshot_times=tuple(sorted(set(snap_times) | ladder_times)))
    traj = rs.evolve(rs.SolverState(rho0), k, p, opts, target=sol.profile)
    dt_mean = traj.final.t / max(traj.final.step_count, 1)

    fit_m = _mid_band_fit(traj.times, traj.sup_mass_err)
    fit_w = _mid_band_fit(traj.times, traj.w2_to_target)

    # sandwich margins at the snapshots, against the scheme-error tolerance law
    sandwich_ok = True
    worst_resid = -math.inf
    sandwich_snaps = [(tc, prof) for tc, prof in traj.snapshots if tc in set(snap_times)]
    for tc, prof in sandwich_snaps:
        mf = mass_function(prof)
        m_sub = mass_function(envelopes.envelope_profile(traj_sub, tc, grid))
        m_super = mass_function(envelopes.envelope_profile(traj_super, tc, grid))
        tol = 5.0 * (grid.dr + dt_mean) * tc
        lo = precedes(m_sub, mf, tol=tol)
        hi = precedes(mf, m_super, tol=tol)
        worst_resid = max(worst_resid, lo.margin / max(tol, 1e-300),
                          hi.margin / max(tol, 1e-300))
        sandwich_ok = sandwich_ok and bool(lo) and bool(hi)

    final_gap = float(np.max(np.abs(traj.final.rho.values - sol.profile.values)))
    gap_bar = 0.01 * sol.profile.sup

    # support boundedness and the anchored growth-exponent ladder
    tt, rr = traj.times, traj.support_radius
    in_early = tt <= 10.0
    support_bound = float(rr.max())
    r_anchor = float(np.interp(ladder_t0, tt, rr))
    growth = [float(np.interp(ladder_t0 + h, tt, rr) - r_anchor) for h in ladder]
    holder, log_c = np.polyfit(np.log(ladder), np.log(np.maximum(growth, 1e-300)), 1)
    holder = float(holder)
    growth_prefactor = float(np.exp(log_c))  # the C in growth <= C h^(1/2), fitted

    band_lo, band_hi = 0.75 * rate_lo, 1.25 * rate_hi
    ok = (band_lo <= fit_m.rate <= band_hi and band_lo <= fit_w.rate <= band_hi
          and sandwich_ok and final_gap < gap_bar
          and support_bound < 0.95 * grid.radius
          and float(rr[in_early].max()) < 0.95 * grid.radius
          and holder >= 0.4 and traj.status == "completed")

    if out is not None:
        traj.write_csv(out / "series" / "diagnostics.csv")
        traj_sub.write_csv(out / "series" / "envelope_sub.csv")
        traj_super.write_csv(out / "series" / "envelope_super.csv")
        for tc, prof in traj.snapshots[:: max(1, len(traj.snapshots) // 5)]:
            write_profile_csv(out / "snapshots" / f"rho_t{tc:g}.csv", prof)

    return {
        "metrics": {
            "rate_mass_gap": fit_m.rate, "rate_w2": fit_w.rate,
            "rate_band": [band_lo, band_hi],
            "envelope_constants": list(constants),
            "k_sub": k_sub, "k_super": k_super,
            "sandwich_ok": sandwich_ok, "sandwich_worst_rel": worst_resid,
            "final_density_gap": final_gap, "density_gap_bar": gap_bar,
            "support_max": support_bound, "holder_exponent": holder,
            "growth_prefactor": growth_prefactor,
            "support_growth": dict(zip((str(h) for h in ladder), growth)),
            "steps": traj.final.step_count,
        },
        "pass": bool(ok),
    }


# ---------------------------------------------------------------------------
# supercritical-barenblatt (rescaled frame)
# ---------------------------------------------------------------------------

def _run_supercritical(cfg: ExperimentConfig, out: Path | None, rng) -> dict:
    p = _params(cfg, default_m=1.5)
    k = _kernel(cfg)
    mass = float(cfg.get("mass", 0.5))
    n = int(cfg.get("solver.n", 700))
    tau_end = float(cfg.get("solver.t_end", 8.0))
    k0 = float(cfg.get("envelope.k0", 0.8))

    mu = st.fokker_planck_stationary(p, mass, n=n)
    grid = RadialGrid(dr=mu.grid.dr * 1.6, n=n, d=p.d)
    mu_target = st.fokker_planck_stationary(p, mass, grid=grid)
    mu0 = dilate(mu.profile, k0, grid)

    opts = rs.SolverOptions(t_end=tau_end,
                            diag_samples=int(cfg.get("solver.diag_samples", 400)))
    traj = rs.evolve_rescaled(rs.SolverState(mu0), k, p, opts, target=mu_target.profile)

    gap = traj.sup_mass_err
    i_min = int(np.argmin(gap))
    fit = analysis.fit_decay(traj.times[: i_min + 1], gap[: i_min + 1],
                             window=(float(traj.times[1]), float(traj.times[i_min])))
    sup_ratio = float(traj.sup_norm.max() / mu.center_density)
    ok = (traj.status == "completed" and fit.rate > 0.0 and sup_ratio <= 10.0)

    # empirically probe the bounded basin at a genuinely supercritical exponent:
    # largest tested concentration factor whose rescaled run stays bounded
    basin = {"m": 1.25, "bounded_up_to": None, "diverged_at": None,
             "label": "empirical"}
    p_sc = Params(1.25, p.d)
    mu_sc = st.fokker_planck_stationary(p_sc, mass, n=240)
    for k0_probe in (0.5, 1.0, 2.0, 4.0):
        grid_sc = RadialGrid(dr=mu_sc.grid.dr / min(k0_probe, 0.9), n=300, d=p_sc.d)
        probe0 = dilate(mu_sc.profile, k0_probe, grid_sc)
        opts_sc = rs.SolverOptions(t_end=4.0, diag_samples=40,
                                   blowup_sup_threshold=50.0 * probe0.sup)
        tr = rs.evolve_rescaled(rs.SolverState(probe0), k, p_sc, opts_sc)
        if tr.status == "blowup":
            basin["diverged_at"] = k0_probe
            break
        basin["bounded_up_to"] = k0_probe

    if out is not None:
        traj.write_csv(out / "series" / "rescaled_diagnostics.csv")

    return {
        "metrics": {
            "fitted_rate": fit.rate, "gap_initial": float(gap[0]),
            "gap_min": float(gap[i_min]), "gap_final": float(gap[-1]),
            "tau_gap_min": float(traj.times[i_min]),
            "sup_ratio_max": sup_ratio, "status": traj.status,
            "empirical_basin": basin,
        },
        "pass": bool(ok),
    }


# ---------------------------------------------------------------------------
# mass-comparison-sandwich
# ---------------------------------------------------------------------------

DILATION_PAIRS = ((0.5, 0.7), (0.6, 0.8), (0.7, 0.9), (0.8, 1.0), (0.9, 1.1))


def _run_mass_comparison(cfg: ExperimentConfig, out: Path | None, rng) -> dict:
    p = _params(cfg)
    mass = float(cfg.get("mass", 100.0))
    n = int(cfg.get("solver.n", 320))
    domain = float(cfg.get("solver.domain_radius", 12.0))
    t_end = float(cfg.get("solver.t_end", 1.5))
    n_snaps = 20
    snap_times = tuple(np.linspace(t_end / n_snaps, t_end, n_snaps))
    opts = rs.SolverOptions(t_end=t_end, diag_samples=60, snapshot_times=snap_times)

    kernels = {
        "newtonian": potentials.newtonian_kernel(),
        "mollified": potentials.mollified_kernel(potentials.mollifier_profile("gaussian", 0.4)),
    }
    factors = sorted({kk for pair in DILATION_PAIRS for kk in pair})
    report = {}
    all_ok = True
    for kname, kern in kernels.items():
        sol = st.solve_stationary(p, kern, mass, n=n, domain_radius=domain)
        grid = sol.grid
        runs = {}
        for f in factors:
            rho0 = dilate(sol.profile, f, grid)
            runs[f] = rs.evolve(rs.SolverState(rho0), kern, p, opts)
        dt_mean = runs[factors[0]].final.t / max(runs[factors[0]].final.step_count, 1)
        worst = -math.inf
        for lo_f, hi_f in DILATION_PAIRS:
            lo_snaps = dict(runs[lo_f].snapshots)
            hi_snaps = dict(runs[hi_f].snapshots)
            for tc in snap_times:
                tol = 5.0 * (grid.dr + dt_mean) * tc
                res = precedes(mass_function(lo_snaps[tc]), mass_function(hi_snaps[tc]),
                               tol=tol)
                worst = max(worst, res.margin / tol)
                all_ok = all_ok and bool(res)
        report[kname] = {"worst_margin_over_tol": worst,
                         "dt_mean": dt_mean, "dr": grid.dr}
    return {
        "metrics": {"kernels": report, "pairs": [list(q) for q in DILATION_PAIRS],
                    "snapshots": len(snap_times)},
        "pass": bool(all_ok),
    }


# ---------------------------------------------------------------------------
# counterexample-monotonicity
# ---------------------------------------------------------------------------

def prop_counterexample_data(grid: RadialGrid, p: Params, eps: float = 0.05,
                             x2: float = 1.0) -> RadialProfile:
    """Radially decreasing data: eps * (mollified indicator of B(0, x2+1)) plus a
    unit-mass spike of width 0.2*eps at the origin."""
    r = grid.centers
    phi = RadialProfile(grid, bump_shape(r / 0.2))
    phi = RadialProfile(grid, phi.values / phi.mass)
    ball = RadialProfile(grid, (r < x2 + 1.0).astype(float))
    plateau = potentials.radial_convolve(ball, phi, p).values
    plateau = np.minimum.accumulate(plateau)  # scrub quadrature wiggle: data must be decreasing
    spike_w = 0.2 * eps
    spike = bump_shape(r / spike_w)
    total = float(spike @ grid.cell_volumes)
    if total <= 0.0:  # spike narrower than the first cell: deposit it there
        spike = np.zeros(grid.n)
        spike[0] = 1.0 / grid.cell_volumes[0]
    else:
        spike = spike / total
    return RadialProfile(grid, eps * plateau + spike)


def annular_laplacian(grid: RadialGrid, peak_radius: float = 1.0, width: float = 0.5,
                      amplitude: float = 4.0) -> RadialProfile:
    """Nonnegative continuous bump peaked away from the origin (not radially
    decreasing), the kernel class excluded by the monotonicity result."""
    return RadialProfile(grid, amplitude * bump_shape((grid.centers - peak_radius) / width))


def _run_counterexample(cfg: ExperimentConfig, out: Path | None, rng) -> dict:
    p = _params(cfg)
    n = int(cfg.get("solver.n", 320))
    domain = float(cfg.get("solver.domain_radius", 3.2))
    grid = RadialGrid(dr=domain / n, n=n, d=p.d)
    rho0 = prop_counterexample_data(grid, p)
    sup0 = rho0.sup
    scheme_tol = 1e-12 * sup0   # a priori monotonicity tolerance for this scheme

    snaps_early = tuple(0.001 * 1.26 ** np.arange(25))
    opts_cx = rs.SolverOptions(t_end=0.1, diag_samples=50,
                               snapshot_times=tuple(t for t in snaps_early if t <= 0.1),
                               blowup_sup_threshold=1e9)
    k_ann = potentials.custom_kernel(annular_laplacian(grid))
    traj_cx = rs.evolve(rs.SolverState(rho0), k_ann, p, opts_cx)
    series_cx = [(tc, analysis.monotonicity_violation(prof))
                 for tc, prof in traj_cx.snapshots]
    peak_cx = max(v for _, v in series_cx)
    crossing = next((tc for tc, v in series_cx if v > 10.0 * (10.0 * scheme_tol)),
                    None)

    opts_base = rs.SolverOptions(t_end=1.0, diag_samples=30,
                                 snapshot_times=tuple(np.linspace(0.05, 1.0, 20)),
                                 blowup_sup_threshold=1e9)
    baselines = {}
    base_ok = True
    for name, kern in (("newtonian", potentials.newtonian_kernel()),
                       ("mollified", potentials.mollified_kernel(
                           potentials.mollifier_profile("gaussian", 0.3)))):
        tr = rs.evolve(rs.SolverState(rho0), kern, p, opts_base)
        worst = max(analysis.monotonicity_violation(prof) for _, prof in tr.snapshots)
        baselines[name] = worst
        base_ok = base_ok and worst <= 10.0 * scheme_tol

    ok = base_ok and crossing is not None and crossing < 0.1
    if out is not None:
        lines = ["t,violation"] + [f"{tc:.17g},{v:.17g}" for tc, v in series_cx]
        (out / "series" / "violation.csv").write_text("\n".join(lines) + "\n")
    return {
        "metrics": {
            "sup0": sup0, "scheme_tol": scheme_tol,
            "baseline_violations": baselines,
            "counterexample_peak": peak_cx,
            "crossing_time": crossing,
        },
        "pass": bool(ok),
    }


# ---------------------------------------------------------------------------
# instant-regularization
# ---------------------------------------------------------------------------

def _run_instant_regularization(cfg: ExperimentConfig, out: Path | None, rng) -> dict:
    p = _params(cfg)
    k = _kernel(cfg)
    mass = float(cfg.get("mass", 1.0))
    n = int(cfg.get("solver.n", 1000))
    domain = float(cfg.get("solver.domain_radius", 8.0))
    grid = RadialGrid(dr=domain / n, n=n, d=p.d)

    base = st.solve_stationary(p, k, mass, n=400)
    target_sup = 1e3 * base.center_density

    from scipy.optimize import brentq
    eps = brentq(lambda e: make_initial_profile(f"tall-bump:{e}", grid, p, k,
                                                mass=mass).sup - target_sup,
                 8 * grid.dr, grid.radius / 2.0, xtol=1e-10)
    rho0 = make_initial_profile(f"tall-bump:{eps}", grid, p, k, mass=mass)

    opts = rs.SolverOptions(t_end=float(cfg.get("solver.t_end", 0.12)),
                            diag_samples=3000)
    traj = rs.evolve(rs.SolverState(rho0), k, p, opts)
    sup, tt = traj.sup_norm, traj.times
    d0 = int(np.argmax(sup <= 0.9 * sup[0]))
    d1 = int(np.argmax(sup <= 0.09 * sup[0]))
    if d1 == 0:
        raise ValueError("run too short: the sup norm never decayed a decade")
    fit = analysis.fit_decay(tt[d0:d1 + 1], sup[d0:d1 + 1], model="algebraic",
                             window=(float(tt[d0]), float(tt[d1])))
    slope = -fit.rate
    bar = -(p.alpha - 0.15)
    ok = slope <= bar
    if out is not None:
        traj.write_csv(out / "series" / "diagnostics.csv")
    return {
        "metrics": {"sup0": float(sup[0]), "sup_ratio": float(sup[0] / base.center_density),
                    "slope": slope, "slope_bar": bar, "alpha": p.alpha,
                    "decade_window": [float(tt[d0]), float(tt[d1])]},
        "pass": bool(ok),
    }


# ---------------------------------------------------------------------------
# mollified-limit
# ---------------------------------------------------------------------------

def _run_mollified_limit(cfg: ExperimentConfig, out: Path | None, rng) -> dict:
    p = _params(cfg)
    mass = float(cfg.get("mass", 20.0))
    n = int(cfg.get("solver.n", 500))
    domain = float(cfg.get("solver.domain_radius", 10.0))
    t_end = float(cfg.get("solver.t_end", 0.5))

    sol = st.solve_stationary(p, potentials.newtonian_kernel(), mass, n=n,
                              domain_radius=domain)
    grid = sol.grid
    rho0 = dilate(sol.profile, 0.85, grid)
    opts = rs.SolverOptions(t_end=t_end, diag_samples=20)
    ref = rs.evolve(rs.SolverState(rho0), potentials.newtonian_kernel(), p, opts)

    eps_values = (0.2, 0.1, 0.05)
    dists = []
    for eps in eps_values:
        km = potentials.mollified_kernel(potentials.mollifier_profile("gaussian", eps))
        tr = rs.evolve(rs.SolverState(rho0), km, p, opts)
        dists.append(float(np.max(np.abs(tr.final.rho.values - ref.final.rho.values))))
    monotone = bool(dists[0] > dists[1] > dists[2])
    return {
        "metrics": {"eps": list(eps_values), "sup_distances": dists,
                    "monotone_decreasing": monotone},
        "pass": monotone,
    }


# ---------------------------------------------------------------------------
# rearrangement-3d
# ---------------------------------------------------------------------------

def two_balls_field(n: int, box: float, separation: float = 1.2, radius: float = 1.0,
                    height: float = 0.6) -> CartesianField:
    h = box / n
    return field_from_function(n, h, lambda x, y, z: height * (
        bump_shape(np.sqrt((x - separation) ** 2 + y ** 2 + z ** 2) / radius)
        + bump_shape(np.sqrt((x + separation) ** 2 + y ** 2 + z ** 2) / radius)))


def offcenter_ball_field(n: int, box: float, offset: float = 1.0, radius: float = 1.2,
                         height: float = 0.6) -> CartesianField:
    h = box / n
    return field_from_function(n, h, lambda x, y, z: height * bump_shape(
        np.sqrt((x - offset) ** 2 + y ** 2 + z ** 2) / radius))


def _run_rearrangement_3d(cfg: ExperimentConfig, out: Path | None, rng) -> dict:
    p = _params(cfg)
    k = _kernel(cfg)
    n = int(cfg.get("cartesian.n", 48))
    box = float(cfg.get("cartesian.box", 12.0))
    t_end = float(cfg.get("solver.t_end", 0.5))
    snaps = (t_end * 0.4, t_end * 0.7, t_end)
    opts = rs.SolverOptions(t_end=t_end, snapshot_times=snaps, diag_samples=40)
    h = box / n

    # calibration: radial data run through both solvers computes the same solution
    radial0 = field_from_function(n, h, lambda x, y, z: 0.6 * bump_shape(
        np.sqrt(x ** 2 + y ** 2 + z ** 2) / 1.5))
    cal = symmetrized_comparison_run(radial0, k, p, opts)
    cal_err = np.array([
        max(abs(cal.order_margins[i]),
            max(abs(cal.lp_margins[pe][i]) for pe in cal.lp_margins))
        for i in range(len(cal.times))])
    c_cal = float(np.max(cal_err / ((h + cal.cartesian_trajectory.dt_last) * cal.times)))
    crosscheck_per_h = float(np.max(cal_err) / h)

    def tol_model(t, dt):
        return 3.0 * max(c_cal, 1e-6) * (h + dt) * max(t, h)

    results = {}
    all_ok = True
    for name, f0 in (("two-balls", two_balls_field(n, box)),
                     ("off-center-ball", offcenter_ball_field(n, box))):
        rep = symmetrized_comparison_run(f0, k, p, opts, tol_model=tol_model)
        results[name] = {
            "order_margins": rep.order_margins.tolist(),
            "lp_margins": {str(pe): rep.lp_margins[pe].tolist() for pe in rep.lp_margins},
            "tolerances": rep.tolerances.tolist(),
            "passed": rep.passed,
        }
        all_ok = all_ok and rep.passed
        if out is not None:
            from .cartesian import write_field_csv
            write_field_csv(out / "snapshots" / f"{name}_final.csv",
                            rep.cartesian_trajectory.final)
    return {
        "metrics": {"calibration_constant": c_cal, "crosscheck_err_per_h": crosscheck_per_h,
                    "cases": results},
        "pass": bool(all_ok),
    }


# ---------------------------------------------------------------------------
# implicit-onestep
# ---------------------------------------------------------------------------

def _run_implicit_onestep(cfg: ExperimentConfig, out: Path | None, rng) -> dict:
    p = _params(cfg)
    n = int(cfg.get("solver.n", 200))
    grid = RadialGrid(dr=4.0 / n, n=n, d=p.d)
    r = grid.centers

    def random_profile():
        vals = np.zeros(n)
        for _ in range(rng.integers(1, 4)):
            c, wdt, amp = rng.uniform(0, 2.5), rng.uniform(0.1, 0.8), rng.uniform(0.1, 2.0)
            vals += amp * np.exp(-(r - c) ** 2 / wdt ** 2)
        vals[r > 3.2] = 0.0
        return RadialProfile(grid, vals)

    # L1 contraction across random pairs with a shared potential
    worst_contraction = -math.inf
    h_step = 1e-2
    for _ in range(100):
        g1, g2 = random_profile(), random_profile()
        phi = rng.uniform(-1, 1) * np.exp(-r ** 2 / rng.uniform(0.5, 3.0))
        u1 = rs.implicit_step(g1, phi, h_step, p)
        u2 = rs.implicit_step(g2, phi, h_step, p)
        l1u = float(np.sum(np.abs(u1.values - u2.values) * grid.cell_volumes))
        l1g = float(np.sum(np.abs(g1.values - g2.values) * grid.cell_volumes))
        worst_contraction = max(worst_contraction, l1u - l1g)
    contraction_ok = worst_contraction <= 1e-8

    # chained steps converge to the explicit frozen-drift solution at first order
    g0 = RadialProfile(grid, np.exp(-(r - 1.2) ** 2 / 0.3) + 0.5 * np.exp(-r ** 2))
    drift = np.zeros(n + 1)
    drift[1:] = 0.5 * grid.edges[1:] * np.exp(-grid.edges[1:] ** 2 / 4.0)
    ex = rs.evolve_frozen_drift(g0, drift, p, rs.SolverOptions(t_end=0.1, diag_samples=5))
    phi_edges = np.concatenate(([0.0], np.cumsum(0.5 * (drift[:-1] + drift[1:]) * grid.dr)))
    phi_c = 0.5 * (phi_edges[:-1] + phi_edges[1:])
    m_ex = mass_function(ex.final.rho)
    h_values = (1e-2, 5e-3, 2.5e-3)
    errs = []
    for h in h_values:
        u = rs.implicit_chain(g0, phi_c, h, int(round(0.1 / h)), p)
        errs.append(float(np.max(np.abs(mass_function(u).cumulative - m_ex.cumulative))))
    order = float(np.polyfit(np.log(h_values), np.log(errs), 1)[0])
    order_ok = order >= 0.8

    # one-step rearrangement comparison for non-monotone data
    km = potentials.mollified_kernel(potentials.mollifier_profile("gaussian", 0.35))
    worst_order_margin = -math.inf
    for _ in range(20):
        f, g = random_profile(), random_profile()
        u = rs.implicit_step(g, potentials.potential_at_centers(f, km, p), h_step, p)
        fbar = analysis.rearrange_radial(f)
        gbar = analysis.rearrange_radial(g)
        ubar = rs.implicit_step(gbar, potentials.potential_at_centers(fbar, km, p),
                                h_step, p)
        ustar = analysis.rearrange_radial(u)
        res = precedes(mass_function(ustar), mass_function(ubar), tol=0.0)
        worst_order_margin = max(worst_order_margin, res.margin)
    rearr_tol = 1e-8 + 0.1 * grid.dr * grid.dr  # quadrature headroom, margins are ~roundoff
    rearr_ok = worst_order_margin <= rearr_tol

    ok = contraction_ok and order_ok and rearr_ok
    return {
        "metrics": {
            "worst_contraction_violation": worst_contraction,
            "chain_errors": errs, "chain_order": order,
            "worst_rearrangement_margin": worst_order_margin,
            "rearrangement_tol": rearr_tol,
        },
        "pass": bool(ok),
    }


# ---------------------------------------------------------------------------

REGISTRY: dict[str, ExperimentSpec] = {
    "stationary-profile": ExperimentSpec(
        "stationary-profile", "steady-state-family-and-mass-dichotomy",
        _run_stationary_profile),
    "converge-subcritical": ExperimentSpec(
        "converge-subcritical", "exponential-convergence-to-steady-state",
        _run_converge_subcritical),
    "supercritical-barenblatt": ExperimentSpec(
        "supercritical-barenblatt", "rescaled-frame-attraction",
        _run_supercritical),
    "mass-comparison-sandwich": ExperimentSpec(
        "mass-comparison-sandwich", "mass-comparison-principle",
        _run_mass_comparison),
    "counterexample-monotonicity": ExperimentSpec(
        "counterexample-monotonicity", "radial-monotonicity-preservation-and-failure",
        _run_counterexample),
    "instant-regularization": ExperimentSpec(
        "instant-regularization", "instant-sup-norm-regularization",
        _run_instant_regularization),
    "mollified-limit": ExperimentSpec(
        "mollified-limit", "mollified-kernel-limit",
        _run_mollified_limit),
    "rearrangement-3d": ExperimentSpec(
        "rearrangement-3d", "rearrangement-comparison-and-lp-domination",
        _run_rearrangement_3d),
    "implicit-onestep": ExperimentSpec(
        "implicit-onestep", "implicit-step-contraction-and-consistency",
        _run_implicit_onestep),
    "envelope-ode": ExperimentSpec(
        "envelope-ode", "scaling-ode-rates-and-basin",
        _run_envelope_ode),
}


def list_experiments() -> dict[str, str]:
    """Registry of experiment names and the claims they test."""
    return {name: spec.theorem for name, spec in REGISTRY.items()}


def _to_native(obj):
    """Recursively convert numpy scalars/arrays so summaries serialize cleanly."""
    if isinstance(obj, dict):
        return {k: _to_native(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_native(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_native(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> dict:
    """Run a named experiment; deterministic for a given (config, seed).

    Returns the summary dict (validated against SUMMARY_SCHEMA); with an output
    directory also writes config.resolved, summary.json and any series CSVs.
    """
    name = str(cfg.require("experiment"))
    if name not in REGISTRY:
        known = ", ".join(sorted(REGISTRY))
        raise ConfigError(f"unknown experiment {name!r}; known experiments: {known}")
    seed = int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is None and cfg.get("out"):
        out = Path(str(cfg.get("out")))
    if out is not None:
        _ensure_dirs(out)
        (out / "config.resolved").write_text(cfg.dump())

    result = REGISTRY[name].runner(cfg, out, rng)
    summary = {
        "experiment": name,
        "theorem": REGISTRY[name].theorem,
        "params": {k: _to_native(v) for k, v in sorted(cfg.entries.items())},
        "metrics": _to_native(result["metrics"]),
        "pass": bool(result["pass"]),
    }
    import jsonschema
    jsonschema.validate(summary, SUMMARY_SCHEMA)
    if out is not None:
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True)
                                          + "\n")
    return summary
