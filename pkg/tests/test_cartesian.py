import math

import numpy as np
import pytest

from aggdiff.core import Params, mass_function, precedes
from aggdiff.errors import GuardShellError
from aggdiff import cartesian as cart
from aggdiff import potentials as pot
from aggdiff import radial_solver as rs
from aggdiff.analysis import lp_norm
from aggdiff.initdata import bump_shape

P = Params(2.0, 3)


def centered_bump(n, h, height=0.8, radius=1.5):
    return cart.field_from_function(
        n, h, lambda x, y, z: height * bump_shape(np.sqrt(x * x + y * y + z * z) / radius))


def test_field_validation():
    with pytest.raises(ValueError):
        cart.CartesianField(0.25, np.ones((8, 8, 8)))  # guard shell occupied
    with pytest.raises(ValueError):
        cart.CartesianField(0.25, np.zeros((70, 70, 70)))  # too many cells
    vals = np.zeros((8, 8, 8))
    vals[3:5, 3:5, 3:5] = -1.0
    with pytest.raises(ValueError):
        cart.CartesianField(0.25, vals)


def test_zero_field_stays_zero():
    f0 = cart.CartesianField(0.25, np.zeros((16, 16, 16)))
    traj = cart.evolve_3d(f0, pot.newtonian_kernel(), P, rs.SolverOptions(t_end=0.2))
    assert traj.final.sup == 0.0
    assert traj.status == "completed"


def test_symmetry_preserved_and_mass_conserved():
    n, h = 24, 8.0 / 24
    f0 = centered_bump(n, h)
    traj = cart.evolve_3d(f0, pot.newtonian_kernel(), P,
                          rs.SolverOptions(t_end=0.25, diag_samples=6))
    assert abs(traj.mass[-1] - traj.mass[0]) <= 1e-8 * traj.mass[0]
    final = traj.final.values
    for axes in ((0, 1), (0, 2), (1, 2)):
        assert np.max(np.abs(np.rot90(final, axes=axes) - final)) < 1e-6 * traj.final.sup


def test_rearrange_3d_oracles(rng):
    n, h = 32, 8.0 / 32
    # decreasing ball data: the rearrangement matches its own radial sampling
    f = centered_bump(n, h, height=1.0, radius=2.0)
    prof = cart.rearrange_3d(f)
    assert prof.mass == pytest.approx(f.mass, rel=1e-12)
    r = prof.grid.centers
    exact = bump_shape(r / 2.0)
    inside = r < 1.8
    assert np.max(np.abs(prof.values[inside] - exact[inside])) < 0.08  # O(h)

    # translation invariance
    f_shift = cart.field_from_function(
        n, h, lambda x, y, z: bump_shape(np.sqrt((x - 0.5) ** 2 + (y + 0.25) ** 2 + z ** 2) / 2.0))
    prof_shift = cart.rearrange_3d(f_shift)
    m = min(prof.grid.n, prof_shift.grid.n)
    assert np.max(np.abs(prof.values[:m] - prof_shift.values[:m])) < 1e-12

    # L^p preservation at fine radial resolution
    vals = np.zeros((n, n, n))
    vals[6:-6, 6:-6, 6:-6] = rng.uniform(0.0, 1.0, (n - 12,) * 3)
    f_rand = cart.CartesianField(h, vals)
    fine = cart.rearrange_3d(f_rand, dr=h / 64.0)
    for pe in (2.0, math.inf):
        assert lp_norm(fine, pe) == pytest.approx(lp_norm(f_rand, pe), rel=1e-6)


def test_rearranged_mass_function_exact_totals(rng):
    n, h = 16, 0.5
    vals = np.zeros((n, n, n))
    vals[5:-5, 5:-5, 5:-5] = rng.uniform(0.0, 2.0, (n - 10,) * 3)
    f = cart.CartesianField(h, vals)
    prof = cart.rearrange_3d(f)
    assert mass_function(prof).total == pytest.approx(f.mass, rel=1e-12)


def test_radial_crosscheck_first_order():
    errs = []
    for n in (16, 32):
        h = 8.0 / n
        f0 = centered_bump(n, h)
        opts = rs.SolverOptions(t_end=0.2, snapshot_times=(0.2,), diag_samples=5)
        rep = cart.symmetrized_comparison_run(f0, pot.newtonian_kernel(), P, opts)
        m3 = mass_function(cart.rearrange_3d(dict(rep.cartesian_trajectory.snapshots)[0.2]))
        mr = mass_function(dict(rep.radial_trajectory.snapshots)[0.2])
        edges = m3.grid.edges
        errs.append(float(np.max(np.abs(m3.cumulative - mr(edges)))))
    assert errs[1] < 0.7 * errs[0]  # O(h) between the two solvers
    assert errs[1] < 0.05


def test_comparison_run_two_balls_smoke():
    n, h = 24, 10.0 / 24
    f0 = cart.field_from_function(n, h, lambda x, y, z: 0.5 * (
        bump_shape(np.sqrt((x - 1.0) ** 2 + y ** 2 + z ** 2))
        + bump_shape(np.sqrt((x + 1.0) ** 2 + y ** 2 + z ** 2))))
    opts = rs.SolverOptions(t_end=0.3, snapshot_times=(0.15, 0.3), diag_samples=6)
    rep = cart.symmetrized_comparison_run(f0, pot.newtonian_kernel(), P, opts)
    assert rep.passed
    for pe in (2.0, 4.0, math.inf):
        assert np.all(rep.lp_margins[pe] <= rep.tolerances)


def test_guard_shell_abort():
    n, h = 16, 0.25  # box radius 2: a radius-1.5 bump grows into the shell fast
    f0 = centered_bump(n, h, height=3.0, radius=1.5)
    with pytest.raises(GuardShellError):
        cart.evolve_3d(f0, pot.newtonian_kernel(), P,
                       rs.SolverOptions(t_end=2.0, diag_samples=40))


def test_field_csv_round_trip(tmp_path):
    n, h = 12, 0.5
    f = centered_bump(n, h, height=0.5, radius=1.2)
    path = tmp_path / "field.csv"
    cart.write_field_csv(path, f)
    back = cart.read_field_csv(path)
    assert back.spacing == f.spacing
    assert np.array_equal(back.values, f.values)
