"""Metrics and order diagnostics: quantile transport costs, L^p norms,
monotonicity gap, symmetric decreasing rearrangement, decay-rate fits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import MassFunction, RadialGrid, RadialProfile, mass_function

W_QUANTILE_SAMPLES = 4096


def _quantile_radii(mf: MassFunction, s: np.ndarray) -> np.ndarray:
    """Invert the mass function (piecewise-linear in the ball-volume variable);
    flat (vacuum) runs resolve to their left endpoint."""
    cum = mf.cumulative
    keep = np.concatenate(([True], np.diff(cum) > 0))
    d = mf.grid.d
    vol_pow = np.interp(s, cum[keep], (mf.grid.edges ** d)[keep])
    return vol_pow ** (1.0 / d)


def wasserstein_p(m1: MassFunction, m2: MassFunction, p_exp: float = 2.0,
                  n_samples: int = W_QUANTILE_SAMPLES) -> float:
    """Radial monotone-transport cost between two equal-mass radial measures.

    W_p^p = (1/A) int_0^A |r1(s) - r2(s)|^p ds with r_i the mass quantiles;
    this is the cost of the monotone radial map, evaluated in mass coordinates
    with uniform quantile samples. p_exp = inf gives the sup displacement.
    """
    a1, a2 = m1.total, m2.total
    scale = max(abs(a1), abs(a2), 1e-300)
    if abs(a1 - a2) > 1e-6 * scale:
        raise ValueError(f"totals differ: {a1} vs {a2}")
    if not (p_exp >= 1.0):
        raise ValueError("transport exponent must be >= 1")
    s1 = (np.arange(n_samples) + 0.5) / n_samples * a1
    s2 = (np.arange(n_samples) + 0.5) / n_samples * a2
    r1 = _quantile_radii(m1, s1)
    r2 = _quantile_radii(m2, s2)
    disp = np.abs(r1 - r2)
    if math.isinf(p_exp):
        return float(disp.max())
    return float(np.mean(disp ** p_exp) ** (1.0 / p_exp))


def lp_norm(rho, p_exp: float) -> float:
    """L^p norm by cell quadrature; p = inf returns the max. Accepts radial
    profiles or anything exposing values and a uniform spacing."""
    values = np.asarray(rho.values, dtype=float)
    if math.isinf(p_exp):
        return float(np.max(values)) if values.size else 0.0
    if p_exp <= 1.0 and p_exp != 1.0:
        raise ValueError("p must be 1, in (1, inf), or inf")
    if hasattr(rho, "grid"):
        vols = rho.grid.cell_volumes
    else:
        vols = float(rho.spacing) ** 3
    return float(np.sum(values ** p_exp * vols) ** (1.0 / p_exp))


def monotonicity_violation(rho: RadialProfile) -> float:
    """sup over r_a < r_b of rho(r_b) - rho(r_a); zero iff radially nonincreasing."""
    vals = rho.values
    if vals.size < 2:
        return 0.0
    run_min = np.minimum.accumulate(vals)
    return float(max(0.0, np.max(vals[1:] - run_min[:-1])))


def sorted_layer_cake(rho: RadialProfile) -> tuple[np.ndarray, np.ndarray]:
    """The rearranged step function as (descending values, their volumes).

    This is the exact equimeasurable object; every integral of a function of
    the value (mass, L^p norms) is preserved by construction.
    """
    order = np.argsort(rho.values, kind="stable")[::-1]
    return rho.values[order], rho.grid.cell_volumes[order]


def rearrange_radial(rho: RadialProfile, grid: RadialGrid | None = None) -> RadialProfile:
    """Symmetric decreasing rearrangement onto a radial grid.

    Level sets are rebuilt from cell volumes and sliced back into grid cells by
    exact cumulative masses, so total mass and the mass function at cell edges
    are preserved to roundoff; gridded L^p norms are preserved to the cell-mixing
    (resampling) tolerance. Radially nonincreasing input on the same grid is
    returned unchanged up to roundoff, and the map is idempotent.
    """
    grid = grid or rho.grid
    vals, vols = sorted_layer_cake(rho)
    cum_vol = np.concatenate(([0.0], np.cumsum(vols)))
    cum_mass = np.concatenate(([0.0], np.cumsum(vals * vols)))
    w = np.concatenate(([0.0], np.cumsum(grid.cell_volumes)))
    cell_mass = np.diff(np.interp(w, cum_vol, cum_mass))
    out = cell_mass / grid.cell_volumes
    np.minimum.accumulate(out, out=out)  # scrub ulp-level wiggle: output is monotone
    return RadialProfile(grid, out)


@dataclass(frozen=True)
class DecayFit:
    times: np.ndarray
    values: np.ndarray
    model: str  # "exponential" or "algebraic"
    rate: float  # lambda in e^(-lambda t), or the exponent gamma in t^(-gamma)
    window: tuple[float, float]
    residual: float  # rms misfit in log space
    log_prefactor: float = 0.0

    def predict(self, t: np.ndarray) -> np.ndarray:
        if self.model == "exponential":
            return math.exp(self.log_prefactor) * np.exp(-self.rate * np.asarray(t))
        return math.exp(self.log_prefactor) * np.asarray(t) ** (-self.rate)


FLOOR_FRACTION = 1e-6
TRANSIENT_FRACTION = 0.10


def fit_decay(times, values, model: str = "exponential",
              window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares decay fit of log(value) against t (exponential) or log t.

    The default window drops the first 10% of samples (transient) and values
    below 1e-6 of the peak (floor); an explicit (t_lo, t_hi) window overrides
    that. Needs at least 10 positive samples in the window.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and values must be matching 1-d arrays")
    if window is None:
        start = int(math.ceil(TRANSIENT_FRACTION * t.size))
        keep = np.zeros(t.size, dtype=bool)
        keep[start:] = True
        keep &= v >= FLOOR_FRACTION * np.max(v)
    else:
        keep = (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(keep) < 10:
        raise ValueError("need at least 10 samples in the fit window")
    tw, vw = t[keep], v[keep]
    if np.any(vw <= 0):
        raise ValueError("non-positive values in the fit window")
    if model == "exponential":
        x = tw
    elif model == "algebraic":
        if np.any(tw <= 0):
            raise ValueError("algebraic fits need positive times")
        x = np.log(tw)
    else:
        raise ValueError(f"unknown decay model {model!r}")
    y = np.log(vw)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return DecayFit(tw, vw, model, float(-slope), (float(tw[0]), float(tw[-1])),
                    resid, float(intercept))
