"""Explicit conservative evolution in radial symmetry, plus the implicit one-step solve.

The production integrator is the explicit flux-form scheme of `_stepping.advance`
(original and rescaled frames). The implicit elliptic one-step solve exists as a
test subject and cross-check, not as the integrator.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from . import _stepping
from .analysis import wasserstein_p
from .core import MassFunction, Params, RadialGrid, RadialProfile, mass_function
from .errors import ConvergenceError
from .potentials import (Kernel, ConvolutionOperator, MOLLIFIED, NEWTONIAN,
                         drift_derivative, energy, mollified_kernel)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    cfl_diffusion: float = 0.4
    cfl_advection: float = 0.5
    t_end: float = 1.0
    snapshot_times: tuple[float, ...] = ()
    blowup_sup_threshold: float = 1e6
    domain_radius: float | None = None
    diag_samples: int = 2000
    max_steps: int = 2_000_000_000
    aggregation_scale: float = 1.0  # 0 disables the aggregation drift

    def __post_init__(self):
        for name in ("cfl_diffusion", "cfl_advection", "t_end", "blowup_sup_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SolverState:
    rho: RadialProfile
    t: float = 0.0
    step_count: int = 0
    dt_last: float = 0.0

    @property
    def diagnostics(self) -> tuple[float, float, float, float]:
        """(mass, sup_norm, support_radius, t) of the current state."""
        return (self.rho.mass, self.rho.sup, self.rho.support_radius(), self.t)


@dataclass
class Trajectory:
    """Diagnostic time series plus snapshots from one evolution run."""

    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    sup_norm: np.ndarray
    support_radius: np.ndarray
    sup_mass_err: np.ndarray
    w2_to_target: np.ndarray
    snapshots: list[tuple[float, RadialProfile]]
    final: SolverState
    status: str  # "completed" or "blowup"
    blowup_time: float | None = None
    rescaled: bool = False

    def write_csv(self, path) -> None:
        header = "t,mass,energy,sup_norm,support_radius,sup_mass_err,w2_to_target"
        cols = np.column_stack([self.times, self.mass, self.energy, self.sup_norm,
                                self.support_radius, self.sup_mass_err, self.w2_to_target])
        lines = [header]
        for row in cols:
            lines.append(",".join(f"{x:.17g}" for x in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _drift_setup(grid: RadialGrid, k: Kernel | None):
    if k is None:
        return _stepping.DRIFT_NONE, _stepping._EMPTY_MATRIX
    if k.is_newtonian:
        return _stepping.DRIFT_POINT_MASS, _stepping._EMPTY_MATRIX
    op = ConvolutionOperator(grid, k.laplacian)
    return _stepping.DRIFT_MATVEC, op.matrix


def _edge_mtilde(rho_vals: np.ndarray, grid: RadialGrid, mode: int,
                 conv_w: np.ndarray) -> np.ndarray:
    if mode == _stepping.DRIFT_MATVEC:
        dens = conv_w @ rho_vals
    else:
        dens = rho_vals
    return np.concatenate(([0.0], np.cumsum(dens * grid.cell_volumes)))


def step(s: SolverState, k: Kernel | None, p: Params,
         opts: SolverOptions = SolverOptions()) -> SolverState:
    """One explicit conservative update (convenience wrapper around the jitted loop)."""
    grid = s.rho.grid
    mode, conv_w = _drift_setup(grid, k)
    vals = s.rho.values.copy()
    t, steps, dt, status = _stepping.advance(
        vals, s.t, math.inf, 1,
        grid.dr, grid.cell_volumes, grid.face_areas, grid.edges, p.d, p.m,
        mode, conv_w, _stepping._EMPTY_EDGES,
        False, 0.0, 0.0, opts.aggregation_scale,
        opts.cfl_diffusion, opts.cfl_advection, opts.blowup_sup_threshold)
    return SolverState(RadialProfile(grid, vals), t, s.step_count + steps, dt)


def velocity_field(rho: RadialProfile, k: Kernel, p: Params) -> np.ndarray:
    """Inward velocity (m/(m-1)) d_r rho^(m-1) + Mtilde/(sigma_d r^(d-1)) at the edges.

    Nonnegative values mean mass is being pushed toward the origin. The first
    and last edges carry no flux and are set to 0.
    """
    grid = rho.grid
    v = np.zeros(grid.n + 1)
    w = rho.values ** (p.m - 1.0)
    v[1:-1] = (p.m / (p.m - 1.0)) * (w[1:] - w[:-1]) / grid.dr
    v[1:-1] += drift_derivative(rho, k, p)[1:-1]
    return v


def _run(state: SolverState, k: Kernel | None, p: Params, opts: SolverOptions,
         rescaled: bool, target: RadialProfile | None,
         frozen_drift: np.ndarray | None = None) -> Trajectory:
    grid = state.rho.grid
    if frozen_drift is not None:
        mode, conv_w = _stepping.DRIFT_FROZEN, _stepping._EMPTY_MATRIX
        frozen = np.asarray(frozen_drift, dtype=float)
    else:
        mode, conv_w = _drift_setup(grid, k)
        frozen = _stepping._EMPTY_EDGES

    t0 = state.t
    events = set(np.linspace(t0, opts.t_end, max(2, opts.diag_samples)).tolist())
    snap_times = sorted(t for t in opts.snapshot_times if t0 <= t <= opts.t_end)
    events.update(snap_times)
    events.add(opts.t_end)
    events = sorted(e for e in events if e >= t0)

    target_mf = mass_function(target) if target is not None else None

    vals = state.rho.values.copy()
    times, masses, energies, sups, supports, mass_errs, w2s = ([] for _ in range(7))
    snapshots: list[tuple[float, RadialProfile]] = []
    snap_set = set(snap_times)
    status = "completed"
    blowup_time = None
    t = t0
    steps = state.step_count
    dt_last = state.dt_last
    warned = False

    def record(tc: float):
        nonlocal warned
        prof = RadialProfile(grid, vals.copy())
        mf = mass_function(prof)
        times.append(tc)
        masses.append(mf.total)
        if k is not None and frozen_drift is None:
            mt_edges = _edge_mtilde(vals, grid, mode, conv_w)
            energies.append(_energy_from_mtilde(prof, mt_edges, p))
        else:
            energies.append(float((prof.values ** p.m) @ grid.cell_volumes) / (p.m - 1.0))
        sups.append(prof.sup)
        supp = prof.support_radius()
        supports.append(supp)
        if not warned and supp > 0.9 * grid.radius:
            logger.warning("support radius %.3g exceeds 90%% of the domain %.3g",
                           supp, grid.radius)
            warned = True
        if target_mf is not None:
            diff = mf.cumulative - target_mf(grid.edges)
            mass_errs.append(float(np.max(np.abs(diff))))
            w2s.append(wasserstein_p(mf, target_mf, 2.0))
        else:
            mass_errs.append(math.nan)
            w2s.append(math.nan)
        if tc in snap_set:
            snapshots.append((tc, prof))

    record(t0)
    for ev in events:
        if ev <= t:
            continue
        t, got, dt_last, st_code = _stepping.advance(
            vals, t, ev, opts.max_steps,
            grid.dr, grid.cell_volumes, grid.face_areas, grid.edges, p.d, p.m,
            mode, conv_w, frozen,
            rescaled, p.beta, 1.0 - p.alpha, opts.aggregation_scale,
            opts.cfl_diffusion, opts.cfl_advection, opts.blowup_sup_threshold)
        steps += got
        if st_code == _stepping.STATUS_BLOWUP:
            status = "blowup"
            blowup_time = t
            record(t)
            break
        if st_code == _stepping.STATUS_MAXSTEPS:
            raise ConvergenceError(f"step budget exhausted at t={t:.6g}")
        record(ev)

    final = SolverState(RadialProfile(grid, vals), t, steps, dt_last)
    return Trajectory(np.array(times), np.array(masses), np.array(energies),
                      np.array(sups), np.array(supports), np.array(mass_errs),
                      np.array(w2s), snapshots, final, status, blowup_time, rescaled)


def _energy_from_mtilde(rho: RadialProfile, mt_edges: np.ndarray, p: Params) -> float:
    grid = rho.grid
    integrand = np.zeros(grid.n + 1)
    integrand[1:] = mt_edges[1:] / grid.face_areas[1:]
    tail = -p.c_d * mt_edges[-1] / grid.radius ** (p.d - 2)
    phi = np.empty(grid.n + 1)
    phi[-1] = tail
    steps_ = 0.5 * grid.dr * (integrand[1:] + integrand[:-1])
    phi[:-1] = tail - np.cumsum(steps_[::-1])[::-1]
    phi_c = 0.5 * (phi[:-1] + phi[1:])
    internal = float((rho.values ** p.m) @ grid.cell_volumes) / (p.m - 1.0)
    return internal + 0.5 * float((rho.values * phi_c) @ grid.cell_volumes)


def evolve(s: SolverState, k: Kernel | None, p: Params, opts: SolverOptions,
           target: RadialProfile | None = None) -> Trajectory:
    """Run the explicit scheme to t_end (or blow-up), recording diagnostics.

    Diagnostics are sampled on ~diag_samples time points plus every requested
    snapshot time; snapshot times are hit exactly by clipping the step.
    """
    return _run(s, k, p, opts, rescaled=False, target=target)


def evolve_rescaled(s: SolverState, k: Kernel | None, p: Params, opts: SolverOptions,
                    target: RadialProfile | None = None) -> Trajectory:
    """Evolve in self-similar variables: confinement drift beta*lambda plus the
    aggregation drift amplified by exp((1-alpha) tau).

    For a gridded-Laplacian kernel the bump shrinks with tau (a dilation by
    e^(beta tau)); the convolution weights are rebuilt at every diagnostic event,
    so event spacing bounds the lag in the rescaling.
    """
    if k is not None and not k.is_newtonian:
        return _run_rescaled_mollified(s, k, p, opts, target)
    return _run(s, k, p, opts, rescaled=True, target=target)


def _run_rescaled_mollified(s: SolverState, k: Kernel, p: Params, opts: SolverOptions,
                            target: RadialProfile | None) -> Trajectory:
    """Rescaled-frame run with the per-event rescaled bump (slow path)."""
    grid = s.rho.grid
    taus = np.linspace(s.t, opts.t_end, max(2, opts.diag_samples))
    state = s
    pieces: list[Trajectory] = []
    for tau0, tau1 in zip(taus[:-1], taus[1:]):
        scale = math.exp(p.beta * tau0)
        h = k.laplacian
        hgrid = RadialGrid(dr=h.grid.dr / scale, n=h.grid.n, d=h.grid.d)
        h_tau = RadialProfile(hgrid, h.values * scale ** h.grid.d)
        k_tau = mollified_kernel(h_tau)
        sub_opts = replace(opts, t_end=tau1, diag_samples=2,
                           snapshot_times=tuple(t for t in opts.snapshot_times
                                                if tau0 < t <= tau1))
        pieces.append(_run(state, k_tau, p, sub_opts, rescaled=True, target=target))
        state = pieces[-1].final
        if pieces[-1].status == "blowup":
            break
    return _concat_trajectories(pieces)


def _concat_trajectories(pieces: list[Trajectory]) -> Trajectory:
    last = pieces[-1]
    arrays = {}
    for name in ("times", "mass", "energy", "sup_norm", "support_radius",
                 "sup_mass_err", "w2_to_target"):
        parts = [getattr(pieces[0], name)]
        for tr in pieces[1:]:
            parts.append(getattr(tr, name)[1:])
        arrays[name] = np.concatenate(parts)
    snapshots = [snap for tr in pieces for snap in tr.snapshots]
    return Trajectory(arrays["times"], arrays["mass"], arrays["energy"],
                      arrays["sup_norm"], arrays["support_radius"],
                      arrays["sup_mass_err"], arrays["w2_to_target"], snapshots,
                      last.final, last.status, last.blowup_time, True)


def evolve_frozen_drift(rho0: RadialProfile, drift_edges: np.ndarray, p: Params,
                        opts: SolverOptions) -> Trajectory:
    """Explicit evolution with an a priori drift derivative (fixed in time)."""
    return _run(SolverState(rho0), None, p, opts, rescaled=False, target=None,
                frozen_drift=drift_edges)


# -- implicit one-step elliptic solve ----------------------------------------------

EPS_REG = 1e-12  # keeps the degenerate diffusion coupling strictly positive


def implicit_step(g: RadialProfile, drift_potential: np.ndarray, h: float,
                  p: Params, *, rtol: float = 1e-10, max_iter: int = 80) -> RadialProfile:
    """Solve -h div(grad u^m + u grad Phi) + u = g on the radial grid.

    Damped Newton iteration on the density with fluxes in u^m; the Jacobian is
    tridiagonal with diffusion couplings m (u + eps)^(m-1), bounded through the
    degenerate free boundary. Zero-flux boundaries make the solve
    mass-preserving. drift_potential is Phi at the cell centers, given a priori.
    """
    grid = g.grid
    n = grid.n
    dr = grid.dr
    vol = grid.cell_volumes
    area = grid.face_areas
    phi = np.asarray(drift_potential, dtype=float)
    if phi.shape != (n,):
        raise ValueError("drift potential must be given at the cell centers")
    dphi = np.zeros(n + 1)
    dphi[1:-1] = (phi[1:] - phi[:-1]) / dr
    up_hi = dphi >= 0.0  # donor cell is the outer one where the drift is attractive

    gm = g.values
    scale = max(float(np.max(gm)), 1e-300)

    def residual(u):
        up = np.maximum(u, 0.0)
        w = up ** p.m
        gflux = np.zeros(n + 1)
        gflux[1:-1] = (w[1:] - w[:-1]) / dr
        donor = np.where(up_hi[1:-1], up[1:], up[:-1])
        gflux[1:-1] += donor * dphi[1:-1]
        div = area[1:] * gflux[1:] - area[:-1] * gflux[:-1]
        return (u - gm) * vol - h * div

    u = gm.copy()
    res = residual(u)
    res_norm = float(np.max(np.abs(res / vol)))
    for _ in range(max_iter):
        if res_norm <= rtol * scale:
            break
        dwdu = p.m * (np.maximum(u, 0.0) + EPS_REG) ** (p.m - 1.0)
        # interior edge e = j+1 between cells j (low) and j+1 (high)
        a_e = area[1:n]
        dphi_e = dphi[1:n]
        hi_e = up_hi[1:n]
        dge_lo = -dwdu[:-1] / dr + np.where(hi_e, 0.0, dphi_e)
        dge_hi = dwdu[1:] / dr + np.where(hi_e, dphi_e, 0.0)
        main = vol.copy()
        main[:-1] += -h * a_e * dge_lo     # -h A_e dG_e/du_low with e = j+1
        main[1:] += h * a_e * dge_hi       # +h A_e dG_e/du_high
        upper = np.zeros(n)
        lower = np.zeros(n)
        upper[1:] = -h * a_e * dge_hi      # J[j, j+1]
        lower[:-1] = h * a_e * dge_lo      # J[j+1, j]
        ab = np.stack([upper, main, lower])
        delta = solve_banded((1, 1), ab, -res)
        lam = 1.0
        while lam >= 2.0 ** -30:
            u_new = u + lam * delta
            res_new = residual(u_new)
            new_norm = float(np.max(np.abs(res_new / vol)))
            if new_norm < res_norm:
                u, res, res_norm = u_new, res_new, new_norm
                break
            lam *= 0.5
        else:
            raise ConvergenceError(
                f"implicit step stagnated: residual {res_norm:.3e} (tol {rtol * scale:.3e})",
                residual=res_norm)
    else:
        raise ConvergenceError(
            f"implicit step did not converge: residual {res_norm:.3e}", residual=res_norm)
    return RadialProfile(grid, np.maximum(u, 0.0))


def implicit_chain(g0: RadialProfile, drift_potential: np.ndarray, h: float,
                   n_steps: int, p: Params) -> RadialProfile:
    """n_steps backward-Euler steps with a frozen drift potential."""
    u = g0
    for _ in range(n_steps):
        u = implicit_step(u, drift_potential, h, p)
    return u
