"""Shared vocabulary: grids, radial profiles, mass functions, the concentration order."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

REGIME_TOL = 1e-12


@dataclass(frozen=True)
class Params:
    """Model parameters: diffusion exponent m > 1 and dimension d >= 3."""

    m: float
    d: int

    def __post_init__(self):
        if not self.m > 1.0:
            raise ValueError(f"diffusion exponent must satisfy m > 1, got {self.m}")
        if int(self.d) != self.d or self.d < 3:
            raise ValueError(f"dimension must be an integer >= 3, got {self.d}")
        object.__setattr__(self, "d", int(self.d))

    @property
    def sigma_d(self) -> float:
        """Surface area of the unit sphere in R^d."""
        return 2.0 * math.pi ** (self.d / 2.0) / math.gamma(self.d / 2.0)

    @property
    def c_d(self) -> float:
        """Attractive-kernel constant 1/((d-2) sigma_d)."""
        return 1.0 / ((self.d - 2) * self.sigma_d)

    @property
    def alpha(self) -> float:
        return self.d / (self.d * (self.m - 1.0) + 2.0)

    @property
    def beta(self) -> float:
        return self.alpha / self.d


class Regime(enum.Enum):
    SUPERCRITICAL = "supercritical"
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"

    @property
    def tag(self) -> str:
        return self.value


def classify_regime(p: Params, tol: float = REGIME_TOL) -> Regime:
    """Trichotomy of m against 2 - 2/d, with exact-boundary inputs classified critical."""
    gap = p.m - (2.0 - 2.0 / p.d)
    if abs(gap) <= tol:
        return Regime.CRITICAL
    return Regime.SUBCRITICAL if gap > 0 else Regime.SUPERCRITICAL


@dataclass(frozen=True)
class RadialGrid:
    """Uniform cell-centered finite-volume grid on [0, n*dr].

    Cell volumes are the exact polynomial shell volumes, so discrete mass is
    exact for piecewise-constant densities.
    """

    dr: float
    n: int
    d: int = 3

    def __post_init__(self):
        if self.dr <= 0 or self.n < 1:
            raise ValueError("grid needs dr > 0 and n >= 1")

    @cached_property
    def centers(self) -> np.ndarray:
        c = (np.arange(self.n) + 0.5) * self.dr
        c.flags.writeable = False
        return c

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.arange(self.n + 1) * self.dr
        e.flags.writeable = False
        return e

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        sigma_d = 2.0 * math.pi ** (self.d / 2.0) / math.gamma(self.d / 2.0)
        i = np.arange(self.n, dtype=float)
        v = sigma_d * ((i + 1.0) ** self.d - i ** self.d) * self.dr ** self.d / self.d
        v.flags.writeable = False
        return v

    @cached_property
    def face_areas(self) -> np.ndarray:
        sigma_d = 2.0 * math.pi ** (self.d / 2.0) / math.gamma(self.d / 2.0)
        a = sigma_d * self.edges ** (self.d - 1)
        a.flags.writeable = False
        return a

    @property
    def radius(self) -> float:
        return self.n * self.dr

    def ball_volume(self, r: float | np.ndarray) -> float | np.ndarray:
        sigma_d = 2.0 * math.pi ** (self.d / 2.0) / math.gamma(self.d / 2.0)
        return sigma_d * np.asarray(r, dtype=float) ** self.d / self.d


def _frozen_array(values, n: int) -> np.ndarray:
    a = np.array(values, dtype=float)
    if a.shape != (n,):
        raise ValueError(f"expected shape ({n},), got {a.shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RadialProfile:
    """Density sampled as cell averages on a RadialGrid."""

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} cell values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite")
        scale = float(np.max(np.abs(vals))) if vals.size else 0.0
        if np.any(vals < -1e-12 * max(scale, 1.0)):
            raise ValueError("density values must be nonnegative")
        np.clip(vals, 0.0, None, out=vals)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def mass(self) -> float:
        return float(self.values @ self.grid.cell_volumes)

    @property
    def sup(self) -> float:
        return float(self.values.max()) if self.grid.n else 0.0

    def support_radius(self) -> float:
        """Outer edge of the last strictly positive cell (0 for the zero profile)."""
        pos = np.nonzero(self.values > 0.0)[0]
        if pos.size == 0:
            return 0.0
        return float(self.grid.edges[pos[-1] + 1])


@dataclass(frozen=True)
class MassFunction:
    """Cumulative mass M(r) at the n+1 cell edges (M(0) = 0)."""

    grid: RadialGrid
    cumulative: np.ndarray = field(repr=False)

    def __post_init__(self):
        cum = np.array(self.cumulative, dtype=float)
        if cum.shape != (self.grid.n + 1,):
            raise ValueError("cumulative must live on the grid edges")
        cum.flags.writeable = False
        object.__setattr__(self, "cumulative", cum)

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])

    def __call__(self, r: float | np.ndarray) -> float | np.ndarray:
        """Piecewise-linear in the ball-volume variable r^d (exact for cellwise
        constant densities, monotone, order-safe); constant beyond the grid."""
        d = self.grid.d
        return np.interp(np.asarray(r, dtype=float) ** d, self.grid.edges ** d,
                         self.cumulative)


def mass_function(rho: RadialProfile) -> MassFunction:
    """Cumulative sums of cell masses; rejects negative densities."""
    cum = np.concatenate(([0.0], np.cumsum(rho.values * rho.grid.cell_volumes)))
    return MassFunction(rho.grid, cum)


class PrecedesResult(NamedTuple):
    holds: bool
    margin: float

    def __bool__(self) -> bool:  # allow `if precedes(...)`
        return self.holds


def precedes(m1: MassFunction, m2: MassFunction, tol: float = 0.0) -> PrecedesResult:
    """Concentration order: does M1(r) <= M2(r) + tol hold at every edge?

    Mass functions on different grids are compared after piecewise-linear
    interpolation on the union of both edge sets (exact for PL functions).
    margin = max(M1 - M2); the order holds iff margin <= tol.
    """
    if m1.grid is m2.grid or (
        m1.grid.dr == m2.grid.dr and m1.grid.n == m2.grid.n and m1.grid.d == m2.grid.d
    ):
        diff = m1.cumulative - m2.cumulative
    else:
        edges = np.union1d(m1.grid.edges, m2.grid.edges)
        diff = m1(edges) - m2(edges)
        # beyond both grids the difference is the (constant) total gap
        diff = np.append(diff, m1.total - m2.total)
    margin = float(diff.max())
    return PrecedesResult(bool(margin <= tol), margin)


def pressure(rho: RadialProfile, p: Params) -> RadialProfile:
    """Pointwise transform u = (m/(m-1)) rho^(m-1)."""
    u = (p.m / (p.m - 1.0)) * rho.values ** (p.m - 1.0)
    return RadialProfile(rho.grid, u)


def pressure_inverse(u: RadialProfile, p: Params) -> RadialProfile:
    """Inverse of `pressure`; round-trips to 1e-12."""
    rho = ((p.m - 1.0) / p.m * u.values) ** (1.0 / (p.m - 1.0))
    return RadialProfile(u.grid, rho)


def dilate(rho: RadialProfile, k: float, grid: RadialGrid | None = None) -> RadialProfile:
    """Mass-preserving dilation x -> k^d rho(k x), built from exact cell masses.

    The dilated mass function is M(k r) by construction, so for 0 < k < 1 the
    result precedes rho exactly (nested cumulative integrals). The target grid
    (default: rho's) must contain the dilated support, support(rho)/k.
    """
    if k <= 0:
        raise ValueError("dilation factor must be positive")
    grid = grid or rho.grid
    if rho.support_radius() / k > grid.radius * (1.0 + 1e-12):
        raise ValueError("dilated support does not fit in the target grid")
    mf = mass_function(rho)
    cum = mf(np.minimum(k * grid.edges, rho.grid.radius))
    vals = np.diff(cum) / grid.cell_volumes
    return RadialProfile(grid, vals)


def profile_from_density(grid: RadialGrid, fn) -> RadialProfile:
    """Sample a density function of r at cell centers (cheap pointwise projection)."""
    return RadialProfile(grid, np.asarray(fn(grid.centers), dtype=float))


def profile_from_mass(grid: RadialGrid, mass_fn) -> RadialProfile:
    """Exact cell averages from a cumulative-mass function of r."""
    cum = np.asarray(mass_fn(grid.edges), dtype=float)
    return RadialProfile(grid, np.diff(cum) / grid.cell_volumes)


# -- profile snapshot files: CSV with header r,rho,M, one row per cell ----------

def write_profile_csv(path: str | Path, rho: RadialProfile) -> None:
    mf = mass_function(rho)
    lines = ["r,rho,M"]
    for r, v, m in zip(rho.grid.centers, rho.values, mf.cumulative[1:]):
        lines.append(f"{r:.17g},{v:.17g},{m:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_profile_csv(path: str | Path, d: int = 3) -> RadialProfile:
    rows = Path(path).read_text().strip().splitlines()
    if not rows or rows[0].strip() != "r,rho,M":
        raise ValueError(f"{path}: expected header 'r,rho,M'")
    data = np.array([[float(x) for x in row.split(",")] for row in rows[1:]])
    r, rho = data[:, 0], data[:, 1]
    if r.size < 1 or np.any(np.diff(r) <= 0):
        raise ValueError(f"{path}: radii must be strictly increasing")
    dr = 2.0 * r[0]
    if not np.allclose(r, (np.arange(r.size) + 0.5) * dr, rtol=1e-9, atol=1e-12 * dr):
        raise ValueError(f"{path}: radii are not cell centers of a uniform grid")
    return RadialProfile(RadialGrid(dr=dr, n=r.size, d=d), rho)
