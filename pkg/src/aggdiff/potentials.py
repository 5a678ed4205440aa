"""Interaction kernels, radial convolutions, aggregation drift, and the free energy.

The attractive potential is either the bare -c_d/|x|^(d-2) well (whose Laplacian
is the unit point mass at the origin) or its mollification with a nonnegative,
radially decreasing bump h, in which case the Laplacian of the potential is h
itself. A third kind carries an arbitrary nonnegative Laplacian for the
monotonicity counterexample experiment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import MassFunction, Params, RadialGrid, RadialProfile, mass_function

NEWTONIAN = "newtonian"
MOLLIFIED = "mollified"
CUSTOM = "custom"


@dataclass(frozen=True)
class Kernel:
    """Interaction potential descriptor, identified by the Laplacian of the potential.

    kind "newtonian": the Laplacian is the unit point mass, never gridded.
    kind "mollified": the Laplacian is the bump h (nonnegative, radially decreasing).
    kind "custom": an arbitrary nonnegative gridded Laplacian.
    """

    kind: str
    laplacian: RadialProfile | None
    laplacian_l1: float

    @property
    def is_newtonian(self) -> bool:
        return self.kind == NEWTONIAN


def newtonian_kernel() -> Kernel:
    return Kernel(NEWTONIAN, None, 1.0)


def mollified_kernel(h: RadialProfile) -> Kernel:
    """Kernel with Laplacian h; h must be nonnegative and radially nonincreasing."""
    scale = h.sup
    if np.any(np.diff(h.values) > 1e-12 * max(scale, 1.0)):
        raise ValueError("mollifier must be radially nonincreasing")
    if h.mass <= 0:
        raise ValueError("mollifier must have positive mass")
    return Kernel(MOLLIFIED, h, h.mass)


def custom_kernel(g: RadialProfile) -> Kernel:
    if g.mass <= 0:
        raise ValueError("custom Laplacian must have positive mass")
    return Kernel(CUSTOM, g, g.mass)


def mollifier_profile(shape: str, width: float, d: int = 3,
                      cells_per_width: int = 32) -> RadialProfile:
    """Gridded unit-mass mollifier: 'gaussian' (truncated at 5 widths) or 'ball'."""
    if width <= 0:
        raise ValueError("mollifier width must be positive")
    if shape == "gaussian":
        extent = 5.0 * width
        n = 5 * cells_per_width
        grid = RadialGrid(dr=extent / n, n=n, d=d)
        vals = np.exp(-0.5 * (grid.centers / width) ** 2)
    elif shape == "ball":
        n = cells_per_width
        grid = RadialGrid(dr=width / n, n=n, d=d)
        vals = np.ones(n)
    else:
        raise ValueError(f"unknown mollifier shape {shape!r}")
    prof = RadialProfile(grid, vals)
    return RadialProfile(grid, vals / prof.mass)  # exact unit mass on the grid


def read_table_profile(path: str | Path, d: int = 3) -> RadialProfile:
    """CSV `r,value` table on a uniform cell-centered grid."""
    rows = Path(path).read_text().strip().splitlines()
    if not rows or rows[0].strip() != "r,value":
        raise ValueError(f"{path}: expected header 'r,value'")
    data = np.array([[float(x) for x in row.split(",")] for row in rows[1:]])
    r, v = data[:, 0], data[:, 1]
    dr = 2.0 * r[0]
    if not np.allclose(r, (np.arange(r.size) + 0.5) * dr, rtol=1e-9, atol=1e-12 * dr):
        raise ValueError(f"{path}: radii are not cell centers of a uniform grid")
    return RadialProfile(RadialGrid(dr=dr, n=r.size, d=d), v)


def kernel_from_config(cfg: dict, base_dir: str | Path = ".") -> Kernel:
    """Build a kernel from dotted config keys (kernel.kind, kernel.h.*, kernel.table.path)."""
    kind = cfg.get("kernel.kind", NEWTONIAN)
    if kind == NEWTONIAN:
        return newtonian_kernel()
    if kind in (MOLLIFIED, CUSTOM):
        shape = cfg.get("kernel.h.shape", "gaussian")
        if shape == "table":
            path = Path(base_dir) / cfg["kernel.table.path"]
            prof = read_table_profile(path)
        else:
            width = float(cfg.get("kernel.h.width", 0.5))
            prof = mollifier_profile(shape, width)
        return mollified_kernel(prof) if kind == MOLLIFIED else custom_kernel(prof)
    raise ValueError(f"unknown kernel.kind {kind!r}")


# -- radial convolution -----------------------------------------------------------

def _pair_cumulative_3d(f: RadialProfile, g: RadialProfile,
                        edges: np.ndarray) -> np.ndarray:
    """Exact ball masses of f*g at the given radii (d=3).

    Integrating the angular reduction of the convolution over a ball shows that
    a pair of sphere shells at radii s and t spreads its product mass uniformly
    in |x|^2 over [(s-t)^2, (s+t)^2]. Cell masses are placed at cell centers;
    the total is exact, pointwise values are second order in the cell width
    away from the origin (the first cell or two can dip a few percent, a known
    limitation of the pair quadrature at r ~ dr).
    """
    mf = f.values * f.grid.cell_volumes
    mg = g.values * g.grid.cell_volumes
    jf = np.nonzero(mf > 0)[0]
    jg = np.nonzero(mg > 0)[0]
    if jf.size == 0 or jg.size == 0:
        return np.zeros(edges.size)
    s = f.grid.centers[jf][:, None]
    t = g.grid.centers[jg][None, :]
    m = (mf[jf][:, None] * mg[jg][None, :]).ravel()
    a = ((s - t) ** 2).ravel()
    b = ((s + t) ** 2).ravel()
    c = m / (b - a)
    # sum of c*(x-a)_+ - c*(x-b)_+ over pairs, via sorted prefix sums
    x = edges ** 2

    def hinge_sum(z: np.ndarray, w: np.ndarray) -> np.ndarray:
        order = np.argsort(z)
        z_srt, w_srt = z[order], w[order]
        w_cum = np.concatenate(([0.0], np.cumsum(w_srt)))
        wz_cum = np.concatenate(([0.0], np.cumsum(w_srt * z_srt)))
        idx = np.searchsorted(z_srt, x, side="right")
        return x * w_cum[idx] - wz_cum[idx]

    cum = hinge_sum(a, c) - hinge_sum(b, c)
    # outside the reach of any pair the hinges cancel exactly in theory; pin the
    # values there so cancellation noise cannot fake a support tail
    total = float(m.sum())
    reach2 = float(b.max())
    cum[x >= reach2] = total
    cum[x <= float(a.min())] = 0.0
    return cum


def _convolve_angular(f: RadialProfile, g: RadialProfile, d: int,
                      n_theta: int = 48) -> np.ndarray:
    """Pointwise radial convolution for d > 3 by Gauss-Legendre in the polar angle.

    Sources are f's cell masses on spherical shells; each shell contributes the
    spherical average of g at distance sqrt(r^2 + s^2 - 2 r s u), u = cos(theta).
    """
    u, wu = np.polynomial.legendre.leggauss(n_theta)
    ang_w = wu * (1.0 - u ** 2) ** ((d - 3) / 2.0)
    sigma_dm1 = 2.0 * math.pi ** ((d - 1) / 2.0) / math.gamma((d - 1) / 2.0)
    sigma_d = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    r = f.grid.centers
    s = f.grid.centers
    shell_mass = f.values * f.grid.cell_volumes
    g_edges = g.grid.edges
    out = np.zeros(r.size)
    for q in range(n_theta):
        dist = np.sqrt(np.maximum(r[:, None] ** 2 + s[None, :] ** 2
                                  - 2.0 * r[:, None] * s[None, :] * u[q], 0.0))
        idx = np.clip(np.searchsorted(g_edges, dist, side="right") - 1, 0, g.grid.n - 1)
        gv = np.where(dist < g_edges[-1], g.values[idx], 0.0)
        out += ang_w[q] * (gv @ shell_mass)
    return out * sigma_dm1 / sigma_d


def radial_convolve(f: RadialProfile, g: RadialProfile, p: Params) -> RadialProfile:
    """Radial convolution f*g sampled on f's grid.

    d=3 uses the closed-form angular reduction integrated over cells, so the
    result is a set of exact cell averages and the product-of-masses identity
    holds to roundoff (provided the supports fit inside the grid). d>3 falls
    back to Gauss-Legendre quadrature of the angular integral (pointwise,
    second order).
    """
    if p.d == 3:
        cum = _pair_cumulative_3d(f, g, f.grid.edges)
        np.maximum.accumulate(cum, out=cum)
        vals = np.diff(cum) / f.grid.cell_volumes
        return RadialProfile(f.grid, vals)
    return RadialProfile(f.grid, _convolve_angular(f, g, p.d))


def convolve_at_zero(f: RadialProfile, g: RadialProfile) -> float:
    """The r -> 0 limit of the radial convolution: int f g over space (the
    integrand is symmetric, no division by r)."""
    idx = np.clip(np.searchsorted(g.grid.edges, f.grid.centers, side="right") - 1,
                  0, g.grid.n - 1)
    gv = np.where(f.grid.centers < g.grid.edges[-1], g.values[idx], 0.0)
    return float((f.values * gv) @ f.grid.cell_volumes)


class ConvolutionOperator:
    """Precomputed matrix form of rho -> rho * h on a fixed grid (d = 3).

    Implements the angular reduction with the inner t-integral done exactly for
    piecewise-constant h and a two-point Gauss rule over source cells. Meant for
    repeated per-step evaluation inside solvers.
    """

    def __init__(self, grid: RadialGrid, h: RadialProfile, block: int = 512):
        if grid.d != 3:
            raise ValueError("convolution operator is implemented for d = 3")
        self.grid = grid
        n = grid.n
        dr = grid.dr
        e_h = h.grid.edges
        hv = h.values
        t_edges = np.concatenate(([0.0], np.cumsum(hv * np.diff(e_h ** 2) / 2.0)))
        t_total = t_edges[-1]

        def t_eval(x: np.ndarray) -> np.ndarray:
            idx = np.clip(np.searchsorted(e_h, x, side="right") - 1, 0, h.grid.n - 1)
            inside = x < e_h[-1]
            val = t_edges[idx] + hv[idx] * (x ** 2 - e_h[idx] ** 2) / 2.0
            return np.where(inside, val, t_total)

        off = 0.5 / math.sqrt(3.0)
        nodes = np.stack([grid.edges[:-1] + dr * (0.5 - off),
                          grid.edges[:-1] + dr * (0.5 + off)])  # (2, n)
        w = np.empty((n, n))
        r = grid.centers
        for lo in range(0, n, block):
            hi = min(lo + block, n)
            rb = r[lo:hi][:, None, None]
            tp = t_eval(rb + nodes[None, :, :].transpose(0, 2, 1))
            tm = t_eval(np.abs(rb - nodes[None, :, :].transpose(0, 2, 1)))
            contrib = nodes.T[None, :, :] * (tp - tm)  # (block, n, 2)
            w[lo:hi] = (2.0 * math.pi / r[lo:hi])[:, None] * contrib.sum(axis=2) * (dr / 2.0)
        self.matrix = w

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ values


# -- aggregation drift and potential values ---------------------------------------

def m_tilde(rho: RadialProfile, k: Kernel) -> MassFunction:
    """Ball masses of rho*DeltaV; identical to the mass function for the bare kernel."""
    if k.is_newtonian:
        return mass_function(rho)
    if rho.grid.d == 3:
        cum = _pair_cumulative_3d(rho, k.laplacian, rho.grid.edges)
    else:
        conv = _convolve_angular(rho, k.laplacian, rho.grid.d)
        cum = np.concatenate(([0.0], np.cumsum(conv * rho.grid.cell_volumes)))
    np.maximum.accumulate(cum, out=cum)
    return MassFunction(rho.grid, cum)


def drift_derivative(rho: RadialProfile, k: Kernel, p: Params) -> np.ndarray:
    """d_r(rho*V) = Mtilde(r)/(sigma_d r^(d-1)) at the grid edges; 0 at r = 0."""
    mt = m_tilde(rho, k)
    areas = rho.grid.face_areas
    out = np.zeros(rho.grid.n + 1)
    out[1:] = mt.cumulative[1:] / areas[1:]
    return out


def potential_value(rho: RadialProfile, k: Kernel, p: Params) -> np.ndarray:
    """rho*V at the grid edges: -int_r^inf Mtilde(s)/(sigma_d s^(d-1)) ds.

    The tail beyond the grid is integrated in closed form with Mtilde frozen at
    its final value, giving the -c_d A / r^(d-2) far field.
    """
    grid = rho.grid
    integrand = drift_derivative(rho, k, p)
    total = m_tilde(rho, k).total
    tail = -p.c_d * total / grid.radius ** (p.d - 2)
    phi = np.empty(grid.n + 1)
    phi[-1] = tail
    steps = 0.5 * grid.dr * (integrand[1:] + integrand[:-1])
    phi[:-1] = tail - np.cumsum(steps[::-1])[::-1]
    return phi


def potential_at_centers(rho: RadialProfile, k: Kernel, p: Params) -> np.ndarray:
    """rho*V averaged to cell centers (midpoint of the edge values)."""
    phi = potential_value(rho, k, p)
    return 0.5 * (phi[:-1] + phi[1:])


def internal_energy(rho: RadialProfile, p: Params) -> float:
    """Diffusion part of the free energy, int rho^m/(m-1)."""
    return float((rho.values ** p.m) @ rho.grid.cell_volumes) / (p.m - 1.0)


def interaction_energy(rho: RadialProfile, k: Kernel, p: Params) -> float:
    """Aggregation part, (1/2) int rho (rho*V)."""
    phi_c = potential_at_centers(rho, k, p)
    return 0.5 * float((rho.values * phi_c) @ rho.grid.cell_volumes)


def energy(rho: RadialProfile, k: Kernel, p: Params) -> float:
    """Free energy F = int rho^m/(m-1) + (1/2) int rho (rho*V)."""
    return internal_energy(rho, p) + interaction_energy(rho, k, p)


# -- gap inequality for the convolution term --------------------------------------

@dataclass(frozen=True)
class GapCheck:
    holds: bool
    vacuous: bool
    witness: tuple[float, float] | None  # radii (a1, b1) with |a1| < |b1|
    lhs: float
    rhs: float


def bump_gap_inequality_check(u: RadialProfile, k: Kernel, tol: float = 1e-10) -> GapCheck:
    """Check (u*DeltaV)(b1) - (u*DeltaV)(a1) <= |DeltaV|_1 (u(b1) - u(a1)) at the
    pair maximizing the monotonicity gap; vacuous for radially decreasing u."""
    if k.kind != MOLLIFIED:
        raise ValueError("gap inequality requires a radially decreasing gridded Laplacian")
    vals = u.values
    run_min = np.minimum.accumulate(vals)
    gaps = vals[1:] - run_min[:-1]
    if gaps.size == 0 or gaps.max() <= 0:
        return GapCheck(True, True, None, 0.0, 0.0)
    b_idx = int(np.argmax(gaps)) + 1
    a_idx = int(np.argmin(vals[:b_idx]))
    gap = float(vals[b_idx] - vals[a_idx])
    if u.grid.d == 3:
        cum = _pair_cumulative_3d(u, k.laplacian, u.grid.edges)
        np.maximum.accumulate(cum, out=cum)
        conv_vals = np.diff(cum) / u.grid.cell_volumes
    else:
        conv_vals = _convolve_angular(u, k.laplacian, u.grid.d)
    lhs = float(conv_vals[b_idx] - conv_vals[a_idx])
    rhs = k.laplacian_l1 * gap
    r = u.grid.centers
    return GapCheck(lhs <= rhs + tol, False, (float(r[a_idx]), float(r[b_idx])), lhs, rhs)
