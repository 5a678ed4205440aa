"""Initial-data spec strings for the radial solver and experiment runner.

Forms: uniform-ball:R | stationary-dilation:k | barenblatt:t0 | tall-bump:eps |
annulus:r0,w | file:<csv>. All are normalized to the requested total mass
(file data is used as stored when no mass is given).
"""
from __future__ import annotations

import numpy as np

from .core import (Params, RadialGrid, RadialProfile, dilate, mass_function,
                   profile_from_mass, read_profile_csv)
from .potentials import Kernel
from .stationary import barenblatt, solve_stationary


def bump_shape(u: np.ndarray) -> np.ndarray:
    """Smooth compact bump (1-u^2)^2 on |u|<1 (not normalized)."""
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, (1.0 - u ** 2) ** 2, 0.0)


def make_initial_profile(spec: str, grid: RadialGrid, p: Params, kernel: Kernel | None,
                         mass: float = 1.0) -> RadialProfile:
    """Build the initial profile named by the spec string on the given grid."""
    name, _, arg = spec.partition(":")
    if name == "uniform-ball":
        radius = float(arg)
        if radius <= 0 or radius > grid.radius:
            raise ValueError(f"ball radius {radius} outside the grid")
        prof = profile_from_mass(
            grid, lambda r: mass * np.minimum(r / radius, 1.0) ** p.d)
        return prof
    if name == "stationary-dilation":
        k = float(arg)
        base = solve_stationary(p, kernel, mass, n=grid.n,
                                domain_radius=grid.radius)
        return dilate(base.profile, k, grid)
    if name == "barenblatt":
        t0 = float(arg)
        return barenblatt(p, mass, t0, grid=grid)
    if name == "tall-bump":
        eps = float(arg)
        if eps <= 0:
            raise ValueError("bump width must be positive")
        vals = bump_shape(grid.centers / eps)
        prof = RadialProfile(grid, vals)
        if prof.mass <= 0:
            raise ValueError(f"bump width {eps} is unresolved on this grid")
        return RadialProfile(grid, vals * (mass / prof.mass))
    if name == "annulus":
        r0, width = (float(x) for x in arg.split(","))
        r1 = r0 + width
        if r1 > grid.radius:
            raise ValueError("annulus sticks out of the grid")

        def cum(r):
            outer = np.clip(grid.ball_volume(np.minimum(r, r1)), 0.0, None)
            inner = grid.ball_volume(np.minimum(r, r0))
            shell = grid.ball_volume(r1) - grid.ball_volume(r0)
            return mass * (outer - inner) / shell

        return profile_from_mass(grid, cum)
    if name == "file":
        stored = read_profile_csv(arg, d=p.d)
        cum = mass_function(stored)
        vals = np.diff(cum(grid.edges)) / grid.cell_volumes
        return RadialProfile(grid, vals)
    raise ValueError(f"unknown initial-data spec {spec!r}")
