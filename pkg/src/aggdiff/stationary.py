"""Radial stationary profiles by shooting, mass rescaling, and self-similar profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import integrate, optimize, special

from .core import Params, RadialGrid, RadialProfile, Regime, classify_regime
from .errors import ConvergenceError
from .potentials import Kernel, m_tilde, potential_at_centers, potential_value


@dataclass(frozen=True)
class StationaryProfile:
    """A radially decreasing, compactly supported steady state."""

    profile: RadialProfile
    support_radius: float
    center_density: float
    lagrange_constant: float
    mass: float
    kernel_kind: str
    equation_residual: float  # max deviation of (m/(m-1)) rho^(m-1) + rho*V from the constant
    fp_iterations: int = 0    # outer drift iterations used (gridded-Laplacian kernels)

    @property
    def grid(self) -> RadialGrid:
        return self.profile.grid


@njit(cache=True)
def _shoot(w0: float, h: float, n_steps: int, m: float, d: int, sigma_d: float,
           table_r: np.ndarray, table_m: np.ndarray, use_table: bool,
           l0: float):
    """Integrate w' = -((m-1)/m) * drift, M' = sigma_d r^(d-1) w^(1/(m-1)) outward.

    w is the Lipschitz variable rho^(m-1); drift is M/(sigma_d r^(d-1)) for the
    point-mass Laplacian or a frozen table otherwise, with the r -> 0 limit
    l0 * r / d used on the first steps. Classical fourth-order one-step method,
    fixed step h. Returns (support radius, mass, M at the integration nodes).
    """
    ex = 1.0 / (m - 1.0)
    coef = -(m - 1.0) / m
    w = w0
    mass = 0.0
    m_nodes = np.zeros(n_steps + 1)
    r_lin = 2.0 * h
    support = n_steps * h
    hit = False

    for k in range(n_steps):
        r0 = k * h

        # RK4 stages for the system (w, M)
        w_s = w
        m_s = mass
        kw = np.zeros(4)
        km = np.zeros(4)
        for stage in range(4):
            if stage == 0:
                r = r0
                ww, mm = w_s, m_s
            elif stage == 1:
                r = r0 + 0.5 * h
                ww, mm = w_s + 0.5 * h * kw[0], m_s + 0.5 * h * km[0]
            elif stage == 2:
                r = r0 + 0.5 * h
                ww, mm = w_s + 0.5 * h * kw[1], m_s + 0.5 * h * km[1]
            else:
                r = r0 + h
                ww, mm = w_s + h * kw[2], m_s + h * km[2]
            rho = ww ** ex if ww > 0.0 else 0.0
            if use_table:
                mt = np.interp(r, table_r, table_m)
            else:
                mt = mm
            if r < r_lin:
                drift = l0 * r / d
            else:
                drift = mt / (sigma_d * r ** (d - 1))
            kw[stage] = coef * drift
            km[stage] = sigma_d * r ** (d - 1) * rho

        w_new = w + (h / 6.0) * (kw[0] + 2.0 * kw[1] + 2.0 * kw[2] + kw[3])
        m_new = mass + (h / 6.0) * (km[0] + 2.0 * km[1] + 2.0 * km[2] + km[3])

        if w_new <= 0.0:
            frac = w / (w - w_new) if w_new < w else 1.0
            support = r0 + frac * h
            mass = mass + frac * (m_new - mass)
            for j in range(k + 1, n_steps + 1):
                m_nodes[j] = mass
            hit = True
            break
        w = w_new
        mass = m_new
        m_nodes[k + 1] = mass

    if not hit:
        support = n_steps * h
    return support, mass, m_nodes


_SUBSTEPS = 4  # shooting step is dr / 4


def _shoot_mass(w0, h, n_steps, p: Params, table, l0_table) -> tuple[float, float, np.ndarray]:
    if table is None:
        l0 = w0 ** (1.0 / (p.m - 1.0))
        tr = np.zeros(1)
        tm = np.zeros(1)
        return _shoot(w0, h, n_steps, p.m, p.d, p.sigma_d, tr, tm, False, l0)
    tr, tm = table
    return _shoot(w0, h, n_steps, p.m, p.d, p.sigma_d, tr, tm, True, l0_table)


def _match_mass(target: float, h: float, n_steps: int, p: Params, table, l0_table,
                w0_guess: float, rtol: float) -> tuple[float, float, float, np.ndarray]:
    """Bisect the center value so the shot mass hits the target (mass is monotone in w0)."""
    lo = hi = max(w0_guess, 1e-300)
    m_lo = m_hi = _shoot_mass(lo, h, n_steps, p, table, l0_table)[1]
    for _ in range(400):
        if m_hi < target:
            hi *= 4.0
            m_hi = _shoot_mass(hi, h, n_steps, p, table, l0_table)[1]
        elif m_lo >= target:
            lo /= 4.0
            m_lo = _shoot_mass(lo, h, n_steps, p, table, l0_table)[1]
        else:
            break
    else:
        raise ConvergenceError("could not bracket the center density")
    mass = m_hi
    for _ in range(300):
        mid = math.sqrt(lo * hi)
        support, mass, m_nodes = _shoot_mass(mid, h, n_steps, p, table, l0_table)
        if abs(mass - target) <= rtol * target:
            return mid, support, mass, m_nodes
        if mass < target:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(
        f"mass bisection stalled: target {target}, reached {mass}", residual=abs(mass - target))


def solve_stationary(p: Params, k: Kernel, mass: float, *, n: int = 2000,
                     domain_radius: float | None = None, mass_rtol: float = 1e-8,
                     fp_tol: float = 1e-8, fp_damping: float = 0.5,
                     fp_max_iter: int = 200) -> StationaryProfile:
    """Shoot the radial steady-state ODE outward and bisect on the center density.

    Rejects non-subcritical exponents. For gridded-Laplacian kernels the shoot
    is wrapped in a damped fixed-point iteration on the aggregation drift; its
    convergence is empirical and failures raise ConvergenceError.
    """
    if mass <= 0:
        raise ValueError("mass must be positive")
    if classify_regime(p) is not Regime.SUBCRITICAL:
        raise ValueError(f"stationary solve requires m > 2 - 2/d, got m={p.m}, d={p.d}")

    if domain_radius is None:
        domain_radius = _auto_domain(p, k, mass, n, mass_rtol, fp_damping)

    grid = RadialGrid(dr=domain_radius / n, n=n, d=p.d)
    h = grid.dr / _SUBSTEPS
    n_steps = n * _SUBSTEPS
    w0_guess = (mass / grid.ball_volume(domain_radius / 4.0)) ** (p.m - 1.0)

    if k.is_newtonian:
        w0, support, got, m_nodes = _match_mass(mass, h, n_steps, p, None, 0.0,
                                                w0_guess, mass_rtol)
        fp_iters = 0
    else:
        w0, support, got, m_nodes, fp_iters = _fixed_point_shoot(
            p, k, mass, grid, h, n_steps, w0_guess, mass_rtol, fp_tol, fp_damping,
            fp_max_iter)

    if support >= domain_radius * (1.0 - 2.0 / n):
        raise ConvergenceError(
            f"support radius {support:.3g} reached the domain boundary {domain_radius:.3g}; "
            "enlarge domain_radius")

    values = np.diff(m_nodes[::_SUBSTEPS]) / grid.cell_volumes
    # normalize the ~1e-8 bisection remainder away so masses compare exactly
    values *= mass / got
    profile = RadialProfile(grid, values)
    center = w0 ** (1.0 / (p.m - 1.0))
    phi = potential_value(profile, k, p)
    c_const = (p.m / (p.m - 1.0)) * w0 + phi[0]
    phi_c = 0.5 * (phi[:-1] + phi[1:])
    inside = grid.centers + grid.dr / 2.0 < support
    residual = 0.0
    if inside.any():
        lhs = (p.m / (p.m - 1.0)) * profile.values[inside] ** (p.m - 1.0) + phi_c[inside]
        residual = float(np.max(np.abs(lhs - c_const)))
    return StationaryProfile(profile, float(support), center, float(c_const),
                             profile.mass, k.kind, residual, fp_iters)


def _auto_domain(p: Params, k: Kernel, mass: float, n: int, mass_rtol: float,
                 fp_damping: float) -> float:
    """Find a domain comfortably containing the support by coarse trial shoots."""
    domain = 8.0
    for _ in range(8):
        try:
            trial = solve_stationary(p, k, mass, n=min(n, 400), domain_radius=domain,
                                     mass_rtol=1e-5, fp_tol=1e-5, fp_damping=fp_damping,
                                     fp_max_iter=80)
        except ConvergenceError:
            domain *= 2.0
            continue
        return max(1.35 * trial.support_radius, 1.0)
    raise ConvergenceError("could not find a domain containing the stationary support")


def _fixed_point_shoot(p, k, mass, grid, h, n_steps, w0_guess, mass_rtol, fp_tol,
                       fp_damping, fp_max_iter):
    """Damped outer iteration on the aggregation drift for gridded Laplacians."""
    # seed with the point-mass-Laplacian solution's drift
    w0, support, got, m_nodes = _match_mass(mass, h, n_steps, p, None, 0.0,
                                            w0_guess, mass_rtol)
    rho = np.diff(m_nodes[::_SUBSTEPS]) / grid.cell_volumes
    for it in range(fp_max_iter):
        prof = RadialProfile(grid, np.clip(rho, 0.0, None))
        mt = m_tilde(prof, k)
        table = (grid.edges, mt.cumulative)
        l0 = mt.cumulative[1] * p.d / (p.sigma_d * grid.edges[1] ** p.d)
        w0, support, got, m_nodes = _match_mass(mass, h, n_steps, p, table, l0,
                                                w0, mass_rtol)
        new_rho = np.diff(m_nodes[::_SUBSTEPS]) / grid.cell_volumes
        delta = float(np.max(np.abs(new_rho - rho)))
        rho = (1.0 - fp_damping) * rho + fp_damping * new_rho
        if delta <= fp_tol:
            return w0, support, got, m_nodes, it + 1
    raise ConvergenceError(
        f"aggregation-drift fixed point did not converge in {fp_max_iter} iterations",
        residual=delta)


def rescale_stationary(base: StationaryProfile, target_mass: float, p: Params) -> StationaryProfile:
    """Map a steady state to another mass by the homogeneity scaling of the bare kernel.

    rho_B(x) = a rho_A(a^(-(m-2)/2) x), a = (B/A)^(2/(d(m-2+2/d))); exact cellwise.
    """
    if base.kernel_kind != "newtonian":
        raise ValueError("mass rescaling requires the bare kernel (no scaling law otherwise)")
    if target_mass <= 0:
        raise ValueError("target mass must be positive")
    a = (target_mass / base.mass) ** (2.0 / (p.d * (p.m - 2.0 + 2.0 / p.d)))
    space = a ** ((p.m - 2.0) / 2.0)
    grid = RadialGrid(dr=base.grid.dr * space, n=base.grid.n, d=p.d)
    profile = RadialProfile(grid, a * base.profile.values)
    return StationaryProfile(profile, base.support_radius * space,
                             a * base.center_density,
                             a ** (p.m - 1.0) * base.lagrange_constant,
                             profile.mass, base.kernel_kind,
                             a ** (p.m - 1.0) * base.equation_residual)


# -- self-similar spreading profile ------------------------------------------------

def _parabolic_mass(r: np.ndarray, amp_pow: float, c: float, kappa: float,
                    p: Params, total: float) -> np.ndarray:
    """Ball masses of (c - kappa r^2)_+^(1/(m-1)) type profiles via the incomplete beta."""
    x = np.clip(kappa * np.asarray(r, dtype=float) ** 2 / c, 0.0, 1.0)
    return total * special.betainc(p.d / 2.0, p.m / (p.m - 1.0), x)


def _parabolic_total(c: float, kappa: float, p: Params, amplitude: float) -> float:
    """Radial quadrature of amplitude*(c - kappa r^2)_+^(1/(m-1))."""
    r_max = math.sqrt(c / kappa)
    val, _ = integrate.quad(
        lambda r: amplitude * (c - kappa * r * r) ** (1.0 / (p.m - 1.0)) * p.sigma_d * r ** (p.d - 1),
        0.0, r_max, limit=200)
    return val


def _solve_parabolic_c(mass: float, kappa: float, p: Params, amplitude: float) -> float:
    def f(c):
        return _parabolic_total(c, kappa, p, amplitude) - mass
    c = 1.0
    while f(c) < 0:
        c *= 2.0
    lo = c / 2.0
    while lo > 1e-300 and f(lo) > 0:
        lo /= 2.0
    return optimize.brentq(f, lo, c, xtol=1e-300, rtol=1e-14)


def barenblatt(p: Params, mass: float, t: float,
               grid: RadialGrid | None = None) -> RadialProfile:
    """Self-similar spreading profile t^(-beta d)(C - ((m-1)beta/2m)|x|^2 t^(-2beta))_+^(1/(m-1)).

    C is fixed by the mass through radial quadrature and bisection; cell values
    are exact cell averages of the closed form.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    kappa = (p.m - 1.0) * p.beta / (2.0 * p.m)
    c = _solve_parabolic_c(mass, kappa, p, 1.0)
    scale_t = t ** (-p.beta * p.d)
    radius = math.sqrt(c / kappa) * t ** p.beta
    if grid is None:
        grid = RadialGrid(dr=1.25 * radius / 1024, n=1024, d=p.d)
    # in similarity variables y = x t^(-beta), the mass in a ball is t-independent
    y = np.minimum(grid.edges * t ** (-p.beta), math.sqrt(c / kappa))
    cum = _parabolic_mass(y, 1.0, c, kappa, p, mass)
    return RadialProfile(grid, np.diff(cum) / grid.cell_volumes)


def barenblatt_constant(p: Params, mass: float) -> float:
    """The C appearing inside the self-similar profile for the given mass."""
    kappa = (p.m - 1.0) * p.beta / (2.0 * p.m)
    return _solve_parabolic_c(mass, kappa, p, 1.0)


def fokker_planck_stationary(p: Params, mass: float, *, grid: RadialGrid | None = None,
                             n: int = 1024) -> StationaryProfile:
    """Steady state of the confined (rescaled-frame) dynamics without aggregation:
    (m/(m-1)) mu^(m-1) = (C - beta |lambda|^2 / 2)_+, C fixed by the mass."""
    amplitude = ((p.m - 1.0) / p.m) ** (1.0 / (p.m - 1.0))
    kappa = p.beta / 2.0
    c = _solve_parabolic_c(mass, kappa, p, amplitude)
    radius = math.sqrt(2.0 * c / p.beta)
    if grid is None:
        grid = RadialGrid(dr=1.35 * radius / n, n=n, d=p.d)
    cum = _parabolic_mass(np.minimum(grid.edges, radius), amplitude, c, kappa, p, mass)
    prof = RadialProfile(grid, np.diff(cum) / grid.cell_volumes)
    center = amplitude * c ** (1.0 / (p.m - 1.0))
    return StationaryProfile(prof, radius, center, c, prof.mass, "fokker-planck", 0.0)


def m2_newtonian_closed_form(mass: float):
    """Closed form for m=2, d=3 with the bare kernel: B sin(r/sqrt(2))/r.

    The steady-state relation linearizes to Delta rho = -rho/2, so
    B = mass/(8 pi^2), support = sqrt(2) pi, center = B/sqrt(2).
    Returns (density callable, support radius, center density).
    """
    b = mass / (8.0 * math.pi ** 2)
    support = math.sqrt(2.0) * math.pi

    def density(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(r < support, b * np.sin(r / math.sqrt(2.0)) / np.where(r > 0, r, 1.0),
                            0.0)
        return np.where(r == 0.0, b / math.sqrt(2.0), np.clip(vals, 0.0, None))

    return density, support, b / math.sqrt(2.0)
