import math

import numpy as np
import pytest

from aggdiff.core import Params, RadialGrid, mass_function, precedes, profile_from_mass
from aggdiff import envelopes as env
from aggdiff import potentials as pot
from aggdiff import stationary as st


def test_envelope_constants(stationary_m2, p23):
    k = pot.newtonian_kernel()
    c1, c2 = env.envelope_constants(stationary_m2, k, p23)
    assert c1 <= c2
    # max of the ball average of the steady state is its center value
    assert c2 == pytest.approx(stationary_m2.center_density, rel=1e-2)
    assert c2 == pytest.approx(1.0 / (8 * math.sqrt(2) * math.pi ** 2), rel=1e-2)
    # min is attained at the support edge: d*A/(sigma_d R^d)
    c1_exact = p23.d * stationary_m2.mass / (p23.sigma_d * stationary_m2.support_radius ** 3)
    assert c1 == pytest.approx(c1_exact, rel=5e-3)


def test_scaling_ode_fixed_point_and_rate(p23):
    t, k, diverged, _ = env.integrate_scaling_ode(env.SUBSOLUTION, env.ORIGINAL,
                                                  1.0, 1.0, p23, t_end=5.0)
    assert not diverged and np.max(np.abs(k - 1.0)) == 0.0

    t, k, diverged, _ = env.integrate_scaling_ode(env.SUBSOLUTION, env.ORIGINAL,
                                                  0.5, 1.0, p23)
    rate = env.fit_scaling_rate(t, k)
    assert rate == pytest.approx(2.0, rel=0.02)  # C1 d (m-2+2/d) at C1=1, m=2, d=3

    # supersolution comes down to 1 from above
    t, k, diverged, _ = env.integrate_scaling_ode(env.SUPERSOLUTION, env.ORIGINAL,
                                                  1.7, 1.0, p23)
    assert not diverged and np.all(np.diff(k) <= 1e-9) and abs(k[-1] - 1.0) < 1e-8


def test_basin_threshold_and_rate_values():
    delta = env.forced_scaling_basin_threshold(1.0, 1.0, 1.0, 1.0, 3)
    assert delta == pytest.approx(1.0 / 1024.0, rel=1e-12)
    assert env.forced_scaling_rate(1.0, 1.0, 1.0, 1.0) == 0.5


def test_forced_ode_basin_convergence():
    delta = env.forced_scaling_basin_threshold(1.0, 1.0, 1.0, 1.0, 3)
    t, k, diverged, _ = env.integrate_forced_scaling_ode(delta / 2.0, 1, 1, 1, 1, 3,
                                                         t_end=60.0)
    assert not diverged
    assert abs(k[-1] - 1.0) < 1e-8
    eps = env.forced_scaling_rate(1, 1, 1, 1)
    gap = np.abs(k - 1.0)
    i1 = np.searchsorted(t, 25.0)
    i2 = np.searchsorted(t, 28.0)
    c_anchor = np.max(gap[i1:i2] * np.exp(eps * t[i1:i2]))
    bound = c_anchor * np.exp(-eps * t[i1:])
    usable = bound > 3e-10
    assert np.all(gap[i1:][usable] <= bound[usable] * (1 + 1e-6))


def test_rescaled_supersolution_escape_and_capture():
    p = Params(1.2, 3)  # supercritical: 1.2 < 2 - 2/3
    t, k, diverged, t_esc = env.integrate_scaling_ode(
        env.SUPERSOLUTION, env.RESCALED, 0.9, 1.0, p, t_end=80.0)
    assert diverged and t_esc is not None  # outside the basin: finite-time escape

    t, k, diverged, _ = env.integrate_scaling_ode(
        env.SUPERSOLUTION, env.RESCALED, 1e-4, 1.0, p, t_end=300.0)
    assert not diverged and abs(k[-1] - 1.0) < 1e-6

    # subsolution in the rescaled frame has no aggregation forcing
    t, k, diverged, _ = env.integrate_scaling_ode(
        env.SUBSOLUTION, env.RESCALED, 0.5, 1.0, p, t_end=80.0)
    assert not diverged and abs(k[-1] - 1.0) < 1e-8


def test_envelope_profile_mass_and_identity(stationary_m2, p23):
    k = pot.newtonian_kernel()
    coeffs = env.ode_coefficients(env.envelope_constants(stationary_m2, k, p23), p23)
    traj = env.integrate_envelope(env.SUBSOLUTION, env.ORIGINAL, 1.0, coeffs, p23,
                                  stationary_m2, t_end=10.0)
    prof = env.envelope_profile(traj, 0.0)
    assert np.allclose(prof.values, stationary_m2.profile.values, rtol=1e-12)
    traj2 = env.integrate_envelope(env.SUBSOLUTION, env.ORIGINAL, 0.9, coeffs, p23,
                                   stationary_m2, t_end=2000.0)
    for tc in (13.0, 517.0, 1990.0):
        prof = env.envelope_profile(traj2, tc)
        assert prof.mass == pytest.approx(stationary_m2.mass, abs=1e-10)
    with pytest.raises(ValueError):
        env.envelope_profile(traj2, 2001.0)


def test_envelope_mass_gap_decays_at_fitted_rate(stationary_m2, p23):
    k = pot.newtonian_kernel()
    coeffs = env.ode_coefficients(env.envelope_constants(stationary_m2, k, p23), p23)
    traj = env.integrate_envelope(env.SUBSOLUTION, env.ORIGINAL, 0.9, coeffs, p23,
                                  stationary_m2, t_end=6000.0)
    m_base = mass_function(stationary_m2.profile)
    times = np.linspace(200.0, 3500.0, 12)
    gaps = []
    for tc in times:
        m_t = mass_function(env.envelope_profile(traj, tc))
        gaps.append(np.max(np.abs(m_t.cumulative - m_base.cumulative)))
    from aggdiff.analysis import fit_decay
    fit = fit_decay(times, np.array(gaps), window=(times[0], times[-1]))
    assert fit.rate == pytest.approx(traj.rate_fit, rel=0.1)


def test_subsolution_discrete_mass_inequality(stationary_m2, p23):
    """The dilation family's mass function satisfies the discrete flow inequality
    up to O(dr): d/dt M_phi <= transport terms evaluated on the grid."""
    k = pot.newtonian_kernel()
    coeffs = env.ode_coefficients(env.envelope_constants(stationary_m2, k, p23), p23)
    traj = env.integrate_envelope(env.SUBSOLUTION, env.ORIGINAL, 0.9, coeffs, p23,
                                  stationary_m2, t_end=500.0)
    grid = stationary_m2.grid
    q = p23.d * (p23.m - 2.0 + 2.0 / p23.d)
    for tc in (50.0, 250.0):
        kf = traj.k_at(tc)
        prof = env.envelope_profile(traj, tc)
        vals = prof.values
        mt = mass_function(prof)
        re = grid.edges[1:-1]
        # d/dt M_phi at the edges: sigma_d r^d phi(r) c1 k^d (1 - k^q)
        phi_e = 0.5 * (vals[1:] + vals[:-1])
        lhs = p23.sigma_d * re ** p23.d * phi_e * coeffs[0] * kf ** p23.d * (1 - kf ** q)
        w = vals ** p23.m
        rhs = p23.sigma_d * re ** (p23.d - 1) * (w[1:] - w[:-1]) / grid.dr \
            + phi_e * mt.cumulative[1:-1]
        inside = re < 0.95 * stationary_m2.support_radius / kf
        resid = (lhs - rhs)[inside]
        scale = np.max(np.abs(rhs[inside]))
        assert np.max(resid) <= 20.0 * grid.dr * scale


def test_bracketing_dilations_bounds(stationary_m2):
    grid = stationary_m2.grid
    ball = profile_from_mass(grid, lambda r: np.minimum(r / 3.0, 1.0) ** 3)
    k_sub, k_super = env.bracketing_dilations(ball, stationary_m2)
    assert 0 < k_sub <= 1.0 <= k_super
    tol = 1e-13
    gs = RadialGrid(dr=grid.dr / k_sub, n=grid.n, d=3)
    from aggdiff.core import dilate
    assert precedes(mass_function(dilate(stationary_m2.profile, k_sub, gs)),
                    mass_function(ball), tol=tol).holds
    gsup = RadialGrid(dr=grid.dr / k_super, n=grid.n, d=3)
    assert precedes(mass_function(ball),
                    mass_function(dilate(stationary_m2.profile, k_super, gsup)),
                    tol=tol).holds


def test_envelope_csv(tmp_path, stationary_m2, p23):
    coeffs = (0.001, 0.003)
    traj = env.integrate_envelope(env.SUBSOLUTION, env.ORIGINAL, 0.8, coeffs, p23,
                                  stationary_m2, t_end=100.0, n_samples=50)
    path = tmp_path / "envelope.csv"
    traj.write_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "t,k,rate_fit"
    assert len(rows) == 51
