"""Scaling-factor ODEs for the dilation sub/supersolutions and their rates.

A dilation family k(t)^d rho_A(k(t) r) of a steady state sandwiches radial
solutions in the mass order when k solves an explicit scalar ODE driven by
bounds on the ball-averaged aggregation drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .analysis import fit_decay
from .core import MassFunction, Params, RadialGrid, RadialProfile, dilate, mass_function, precedes
from .potentials import Kernel, m_tilde
from .stationary import StationaryProfile

SUBSOLUTION = "subsolution"
SUPERSOLUTION = "supersolution"
ORIGINAL = "original"
RESCALED = "rescaled"

ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
ESCAPE_FACTOR = 1e3  # a scaling factor this far from 1 counts as finite-time escape


@dataclass(frozen=True)
class EnvelopeTrajectory:
    base: StationaryProfile
    times: np.ndarray
    k: np.ndarray
    kind: str
    frame: str
    constants: tuple[float, float]  # ODE coefficients (c1 for sub, c2 for super)
    rate_fit: float | None
    diverged: bool = False
    escape_time: float | None = None

    def k_at(self, t: float) -> float:
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"t={t} outside the integrated range")
        return float(np.interp(t, self.times, self.k))

    def write_csv(self, path) -> None:
        rate = self.rate_fit if self.rate_fit is not None else math.nan
        lines = ["t,k,rate_fit"]
        for t, k in zip(self.times, self.k):
            lines.append(f"{t:.17g},{k:.17g},{rate:.17g}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def envelope_constants(base: StationaryProfile, k: Kernel, p: Params) -> tuple[float, float]:
    """Min and max over the support of the ball average of rho_A * DeltaV,
    i.e. of d Mtilde(r) / (sigma_d r^d).

    The scaling ODE coefficient is this divided by d (see ode_coefficients).
    """
    mt = m_tilde(base.profile, k)
    grid = base.grid
    edges = grid.edges[1:]
    inside = edges <= base.support_radius
    avg = p.d * mt.cumulative[1:][inside] / (p.sigma_d * edges[inside] ** p.d)
    # the r -> 0 limit of the ball average is the center value of rho_A * DeltaV
    return float(avg.min()), float(avg.max())


def ode_coefficients(constants: tuple[float, float], p: Params) -> tuple[float, float]:
    """Convert ball-average bounds to the coefficients of the scaling ODE."""
    return constants[0] / p.d, constants[1] / p.d


def linearized_rate(coeff: float, p: Params) -> float:
    """Decay rate of 1 - k(t) for the original-frame ODE with coefficient coeff."""
    return coeff * p.d * (p.m - 2.0 + 2.0 / p.d)


def _scaling_rhs(frame: str, kind: str, coeff: float, p: Params):
    if frame == ORIGINAL:
        q = p.d * (p.m - 2.0 + 2.0 / p.d)

        def rhs(t, y):
            k = max(y[0], 0.0)
            return [coeff * k ** (p.d + 1) * (1.0 - k ** q)]
    elif frame == RESCALED:
        q = p.d * (p.m - 1.0) + 2.0
        agg = coeff if kind == SUPERSOLUTION else 0.0

        def rhs(t, y):
            k = max(y[0], 0.0)
            return [p.beta * k * (1.0 - k ** q)
                    + agg * k ** (p.d + 1) * math.exp((1.0 - p.alpha) * t)]
    else:
        raise ValueError(f"unknown frame {frame!r}")
    return rhs


def integrate_scaling_ode(kind: str, frame: str, k0: float, coeff: float, p: Params,
                          t_end: float | None = None,
                          n_samples: int = 2000) -> tuple[np.ndarray, np.ndarray, bool, float | None]:
    """Dense solution of the scaling-factor ODE; detects escape to infinity.

    Returns (t, k, diverged, escape_time). coeff is the raw ODE coefficient
    (the ball-average bound divided by d).
    """
    if k0 <= 0:
        raise ValueError("k0 must be positive")
    if t_end is None:
        base_rate = linearized_rate(coeff, p) if frame == ORIGINAL \
            else p.beta * (p.d * (p.m - 1.0) + 2.0)
        t_end = 40.0 / max(base_rate, 1e-12)
    rhs = _scaling_rhs(frame, kind, coeff, p)
    escape = ESCAPE_FACTOR * max(1.0, k0)

    def hit_escape(t, y):
        return y[0] - escape
    hit_escape.terminal = True
    hit_escape.direction = 1.0

    sol = solve_ivp(rhs, (0.0, t_end), [k0], method="RK45", rtol=ODE_RTOL,
                    atol=ODE_ATOL, dense_output=True, events=hit_escape)
    if sol.t_events[0].size or sol.status == -1:
        # event hit, or the integrator died on a blow-up; both are escapes
        t_esc = float(sol.t_events[0][0]) if sol.t_events[0].size else float(sol.t[-1])
        t = np.linspace(0.0, t_esc, n_samples)
        return t, sol.sol(t)[0], True, t_esc
    t = np.linspace(0.0, t_end, n_samples)
    return t, sol.sol(t)[0], False, None


RATE_WINDOW = (1e-6, 1e-2)  # |1-k| band used for the rate fit


def fit_scaling_rate(times: np.ndarray, k: np.ndarray) -> float | None:
    """Least-squares exponential rate of |1-k| inside the calibrated band."""
    gap = np.abs(1.0 - k)
    mask = (gap > RATE_WINDOW[0]) & (gap < RATE_WINDOW[1])
    if np.count_nonzero(mask) < 10:
        return None
    fit = fit_decay(times[mask], gap[mask], model="exponential",
                    window=(float(times[mask][0]), float(times[mask][-1])))
    return fit.rate


def integrate_envelope(kind: str, frame: str, k0: float, constants: tuple[float, float],
                       p: Params, base: StationaryProfile, t_end: float | None = None,
                       n_samples: int = 2000) -> EnvelopeTrajectory:
    """Integrate the scaling factor and attach the dilation base.

    `constants` are the ODE coefficients (c1, c2); the subsolution uses c1, the
    supersolution c2, matching the lower/upper drift bounds they derive from.
    """
    if kind not in (SUBSOLUTION, SUPERSOLUTION):
        raise ValueError(f"unknown envelope kind {kind!r}")
    coeff = constants[0] if kind == SUBSOLUTION else constants[1]
    t, k, diverged, t_esc = integrate_scaling_ode(kind, frame, k0, coeff, p,
                                                  t_end=t_end, n_samples=n_samples)
    rate = None if diverged else fit_scaling_rate(t, k)
    return EnvelopeTrajectory(base, t, k, kind, frame, tuple(constants), rate,
                              diverged, t_esc)


def envelope_profile(traj: EnvelopeTrajectory, t: float,
                     grid: RadialGrid | None = None) -> RadialProfile:
    """The dilation k(t)^d rho_A(k(t) r) of the base profile; mass-preserving."""
    k = traj.k_at(t)
    return dilate(traj.base.profile, k, grid)


def envelope_mass_function(traj: EnvelopeTrajectory, t: float) -> MassFunction:
    return mass_function(envelope_profile(traj, t))


def bracketing_dilations(rho0: RadialProfile, base: StationaryProfile,
                         rtol: float = 1e-6) -> tuple[float, float]:
    """Initial scaling factors for the sandwich: the largest k_sub <= 1 whose
    dilation lies below rho0 in the mass order and the smallest k_super >= 1
    whose dilation lies above, both by bisection.

    Requires rho0 and the base to have (numerically) equal masses and
    rho0(0) > 0 (data vanishing at the origin admits no spread dilation below
    it). The base grid must accommodate the spread dilations.
    """
    m0 = mass_function(rho0)
    bgrid = base.grid
    tol = 32.0 * np.finfo(float).eps * max(m0.total, base.mass)  # roundoff headroom

    def dilated_mass(k: float):
        # dilate the grid along with the profile: exact cellwise, any k
        grid = RadialGrid(dr=bgrid.dr / k, n=bgrid.n, d=bgrid.d)
        return mass_function(dilate(base.profile, k, grid))

    def below(k: float) -> bool:  # dilation ≺ rho0
        return bool(precedes(dilated_mass(k), m0, tol=tol))

    def above(k: float) -> bool:  # rho0 ≺ dilation
        return bool(precedes(m0, dilated_mass(k), tol=tol))

    if below(1.0):
        k_sub = 1.0
    else:
        lo = 0.5
        while not below(lo):
            lo *= 0.5
            if lo < 1e-6:
                raise ValueError("no spread dilation lies below the initial data")
        hi = 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if below(mid):
                lo = mid
            else:
                hi = mid
            if hi - lo <= rtol * lo:
                break
        k_sub = lo

    if above(1.0):
        k_super = 1.0
    else:
        hi = 2.0
        while not above(hi):
            hi *= 2.0
            if hi > 1e6:
                raise ValueError("no tight dilation lies above the initial data")
        lo = hi / 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if above(mid):
                hi = mid
            else:
                lo = mid
            if hi - lo <= rtol * hi:
                break
        k_super = hi
    return k_sub, k_super


# -- the appendix scalar ODE with decaying forcing ---------------------------------

def forced_scaling_basin_threshold(c1: float, c2: float, a_exp: float, b_exp: float,
                                   d: int) -> float:
    """Basin threshold delta = (a c1 c2^-1 2^(-d-2))^((c1+c2)/b) for the ODE
    k' = c1 k (1 - k^a) + c2 k^(d+1) e^(-b t)."""
    return (a_exp * c1 / c2 * 2.0 ** (-(d + 2))) ** ((c1 + c2) / b_exp)


def forced_scaling_rate(c1: float, c2: float, a_exp: float, b_exp: float) -> float:
    """Exponential approach rate min(b, c1 a / 2) of k -> 1 inside the basin."""
    return min(b_exp, 0.5 * c1 * a_exp)


def integrate_forced_scaling_ode(k0: float, c1: float, c2: float, a_exp: float,
                                 b_exp: float, d: int, t_end: float,
                                 n_samples: int = 2000):
    """Integrate k' = c1 k (1-k^a) + c2 k^(d+1) e^(-b t); detects escape."""
    def rhs(t, y):
        k = max(y[0], 0.0)
        return [c1 * k * (1.0 - k ** a_exp) + c2 * k ** (d + 1) * math.exp(-b_exp * t)]

    escape = ESCAPE_FACTOR * max(1.0, k0)

    def hit_escape(t, y):
        return y[0] - escape
    hit_escape.terminal = True
    hit_escape.direction = 1.0

    sol = solve_ivp(rhs, (0.0, t_end), [k0], method="RK45", rtol=ODE_RTOL,
                    atol=ODE_ATOL, dense_output=True, events=hit_escape)
    if sol.t_events[0].size or sol.status == -1:
        t_esc = float(sol.t_events[0][0]) if sol.t_events[0].size else float(sol.t[-1])
        t = np.linspace(0.0, t_esc, n_samples)
        return t, sol.sol(t)[0], True, t_esc
    t = np.linspace(0.0, t_end, n_samples)
    return t, sol.sol(t)[0], False, None
