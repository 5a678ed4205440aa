"""Acceptance suite: every criterion at its stated tolerance, one line each.

Run with `pytest -s tests/test_acceptance.py` to see the PASS/FAIL lines.
The long subcritical convergence run backs two criteria and is shared.
"""
import math
import time

import numpy as np
import pytest

from aggdiff.config import ExperimentConfig
from aggdiff.core import Params, RadialGrid, mass_function
from aggdiff import experiments as ex
from aggdiff import potentials as pot
from aggdiff import radial_solver as rs
from aggdiff import stationary as st
from aggdiff.initdata import make_initial_profile


def _report(num: int, ok: bool, detail: str):
    print(f"\nACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def _cfg(name: str, **entries) -> ExperimentConfig:
    cfg = ExperimentConfig({"experiment": name, "seed": 0})
    for key, val in entries.items():
        cfg.set(key, val)
    return cfg


@pytest.fixture(scope="module")
def subcritical_summary():
    t0 = time.perf_counter()
    summary = ex.run_experiment(_cfg("converge-subcritical"))
    summary["wall_seconds"] = time.perf_counter() - t0
    return summary


@pytest.fixture(scope="module")
def stationary_summary():
    t0 = time.perf_counter()
    summary = ex.run_experiment(_cfg("stationary-profile"))
    summary["wall_seconds"] = time.perf_counter() - t0
    return summary


@pytest.fixture(scope="module")
def implicit_summary():
    t0 = time.perf_counter()
    summary = ex.run_experiment(_cfg("implicit-onestep"))
    summary["wall_seconds"] = time.perf_counter() - t0
    return summary


def test_criterion_01_stationary_oracle(stationary_summary):
    m = stationary_summary["metrics"]
    ok = (m["support_rel_err"] <= 5e-3 and m["center_rel_err"] <= 5e-3
          and m["solve_seconds"] < 5.0)
    _report(1, ok,
            f"support err {m['support_rel_err']:.2e}, center err {m['center_rel_err']:.2e}, "
            f"solve {m['solve_seconds']:.2f}s at n=2000")


def test_criterion_02_scaling_dichotomy(stationary_summary):
    d = stationary_summary["metrics"]["dichotomy"]
    wall = stationary_summary["wall_seconds"]
    ok = all(v["ok"] for v in d.values()) and wall < 30.0
    detail = ", ".join(f"{k}: R1={v['r_mass1']:.3f} R8={v['r_mass8']:.3f}"
                       for k, v in d.items())
    _report(2, ok, f"{detail} ({wall:.1f}s < 30s)")


def test_criterion_03_mass_comparison():
    t0 = time.perf_counter()
    summary = ex.run_experiment(_cfg("mass-comparison-sandwich"))
    wall = time.perf_counter() - t0
    m = summary["metrics"]["kernels"]
    worst = max(v["worst_margin_over_tol"] for v in m.values())
    ok = summary["pass"] and wall < 300.0
    _report(3, ok, f"5 dilation pairs x 2 kernels x 20 snapshots, "
                   f"worst margin/tol {worst:.3f} ({wall:.1f}s < 300s)")


def test_criterion_04_subcritical_convergence(subcritical_summary):
    m = subcritical_summary["metrics"]
    lo, hi = m["rate_band"]
    ok = (lo <= m["rate_mass_gap"] <= hi and lo <= m["rate_w2"] <= hi
          and m["sandwich_ok"] and m["final_density_gap"] < m["density_gap_bar"]
          and subcritical_summary["wall_seconds"] < 600.0)
    _report(4, ok,
            f"rates M={m['rate_mass_gap']:.4g} W2={m['rate_w2']:.4g} in "
            f"[{lo:.4g},{hi:.4g}], sandwich ok={m['sandwich_ok']}, "
            f"final gap {m['final_density_gap']:.2e} < {m['density_gap_bar']:.2e} "
            f"({subcritical_summary['wall_seconds']:.0f}s < 600s)")


def test_criterion_05_uniqueness_probe():
    t0 = time.perf_counter()
    p = Params(2.0, 3)
    mass = 60.0
    km = pot.mollified_kernel(pot.mollifier_profile("gaussian", 0.4))
    sol = st.solve_stationary(p, km, mass, n=256, domain_radius=10.0)
    grid = sol.grid
    rho_a = make_initial_profile("uniform-ball:2.5", grid, p, km, mass=mass)
    rho_b = make_initial_profile("annulus:1.0,2.0", grid, p, km, mass=mass)
    opts = rs.SolverOptions(t_end=65.0, diag_samples=40)
    tr_a = rs.evolve(rs.SolverState(rho_a), km, p, opts)
    tr_b = rs.evolve(rs.SolverState(rho_b), km, p, opts)
    gap = float(np.max(np.abs(tr_a.final.rho.values - tr_b.final.rho.values)))
    lip = float(np.max(np.abs(np.diff(sol.profile.values))))  # dr * Lipschitz scale
    scheme_tol = 5.0 * lip
    wall = time.perf_counter() - t0
    ok = gap < 2.0 * scheme_tol and wall < 600.0
    _report(5, ok, f"two data -> same steady state: sup gap {gap:.2e} < "
                   f"2 x scheme tol {scheme_tol:.2e} ({wall:.0f}s < 600s)")


def test_criterion_06_supercritical_rescaled():
    t0 = time.perf_counter()
    summary = ex.run_experiment(_cfg("supercritical-barenblatt"))
    wall = time.perf_counter() - t0
    m = summary["metrics"]
    ok = summary["pass"] and wall < 600.0
    _report(6, ok, f"rescaled m=1.5 run: fitted decay rate {m['fitted_rate']:.3f} > 0, "
                   f"sup ratio {m['sup_ratio_max']:.2f} <= 10 over tau in [0,8] "
                   f"({wall:.0f}s < 600s)")


def test_criterion_07_envelope_suite():
    t0 = time.perf_counter()
    summary = ex.run_experiment(_cfg("envelope-ode"))
    wall = time.perf_counter() - t0
    m = summary["metrics"]
    ok = summary["pass"] and wall < 60.0
    _report(7, ok, f"ODE rate {m['fitted_rate']:.4f} (expected {m['expected_rate']:.1f}, "
                   f"err {m['rate_rel_err']:.2%} <= 2%), basin delta {m['basin_delta']:.6g}"
                   f" converged={m['basin_converged']} bound={m['basin_bound_holds']} "
                   f"({wall:.1f}s)")


def test_criterion_08_implicit_step(implicit_summary):
    m = implicit_summary["metrics"]
    wall = implicit_summary["wall_seconds"]
    ok = (m["worst_contraction_violation"] <= 1e-8 and m["chain_order"] >= 0.8
          and wall < 300.0)
    _report(8, ok, f"contraction violation {m['worst_contraction_violation']:.2e} <= 1e-8 "
                   f"(100 pairs), chain order {m['chain_order']:.3f} >= 0.8 ({wall:.0f}s)")


def test_criterion_09_onestep_rearrangement(implicit_summary):
    m = implicit_summary["metrics"]
    ok = m["worst_rearrangement_margin"] <= m["rearrangement_tol"]
    _report(9, ok, f"20 non-monotone pairs: worst margin "
                   f"{m['worst_rearrangement_margin']:.2e} <= "
                   f"{m['rearrangement_tol']:.2e}")


def test_criterion_10_monotonicity():
    t0 = time.perf_counter()
    summary = ex.run_experiment(_cfg("counterexample-monotonicity"))
    wall = time.perf_counter() - t0
    m = summary["metrics"]
    base_worst = max(m["baseline_violations"].values())
    ok = summary["pass"] and wall < 300.0
    _report(10, ok,
            f"admissible kernels stay at {base_worst:.2e} <= 10 x tol "
            f"{m['scheme_tol']:.2e}; annular Laplacian crosses at t="
            f"{m['crossing_time']} with peak {m['counterexample_peak']:.2e} "
            f"({wall:.0f}s < 300s)")


def test_criterion_11_instant_regularization():
    t0 = time.perf_counter()
    summary = ex.run_experiment(_cfg("instant-regularization"))
    wall = time.perf_counter() - t0
    m = summary["metrics"]
    ok = summary["pass"] and wall < 600.0
    _report(11, ok, f"sup ratio {m['sup_ratio']:.0f}: log-log slope {m['slope']:.3f} "
                    f"<= {m['slope_bar']:.2f} ({wall:.0f}s)")


def test_criterion_12_nonradial_comparison():
    t0 = time.perf_counter()
    summary = ex.run_experiment(_cfg("rearrangement-3d"))
    wall = time.perf_counter() - t0
    m = summary["metrics"]
    ok = summary["pass"] and wall < 1800.0
    _report(12, ok,
            f"48^3 two-balls/off-center order + Lp domination hold; "
            f"crosscheck err/h {m['crosscheck_err_per_h']:.3f} ({wall:.0f}s < 1800s)")


def test_criterion_13_mollified_limit():
    t0 = time.perf_counter()
    summary = ex.run_experiment(_cfg("mollified-limit"))
    wall = time.perf_counter() - t0
    m = summary["metrics"]
    ok = summary["pass"] and wall < 600.0
    dists = ", ".join(f"{d:.2e}" for d in m["sup_distances"])
    _report(13, ok, f"sup distance to the bare-kernel run decreases over eps "
                    f"{m['eps']}: [{dists}] ({wall:.0f}s)")


def test_criterion_14_compact_support_and_propagation(subcritical_summary):
    m = subcritical_summary["metrics"]
    ok = (m["support_max"] < 0.95 * 12.0 and m["holder_exponent"] >= 0.4)
    _report(14, ok, f"support bounded by {m['support_max']:.2f} < domain; "
                    f"growth exponent {m['holder_exponent']:.2f} >= 0.4")
