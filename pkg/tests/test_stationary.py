import math

import numpy as np
import pytest
from scipy import integrate

from aggdiff.core import Params, RadialGrid, dilate, mass_function
from aggdiff.errors import ConvergenceError
from aggdiff import potentials as pot
from aggdiff import stationary as st


def test_m2_closed_form_oracle(stationary_m2, p23):
    dens, support, center = st.m2_newtonian_closed_form(1.0)
    assert support == pytest.approx(math.sqrt(2.0) * math.pi, rel=1e-15)
    sol = stationary_m2
    assert sol.support_radius == pytest.approx(support, rel=5e-3)
    assert sol.center_density == pytest.approx(center, rel=5e-3)
    assert sol.mass == pytest.approx(1.0, abs=1e-12)
    # pointwise agreement with B sin(r/sqrt 2)/r away from the free boundary
    r = sol.grid.centers
    inside = r < 0.9 * support
    assert np.max(np.abs(sol.profile.values[inside] - dens(r[inside]))) < 2e-5 * center


def test_stationary_is_decreasing_and_compact(stationary_m2):
    vals = stationary_m2.profile.values
    assert np.all(np.diff(vals) <= 1e-15)
    assert stationary_m2.support_radius < stationary_m2.grid.radius


def test_equation_residual_shrinks_under_refinement():
    p = Params(2.0, 3)
    k = pot.newtonian_kernel()
    res = [st.solve_stationary(p, k, 1.0, n=n, domain_radius=6.0).equation_residual
           for n in (250, 500)]
    assert res[1] <= 0.5 * res[0]
    p18 = Params(1.8, 3)
    res18 = [st.solve_stationary(p18, k, 1.0, n=n, domain_radius=14.0).equation_residual
             for n in (250, 500)]
    assert res18[1] <= 0.55 * res18[0]


def test_shooting_monotone_in_mass():
    p = Params(2.0, 3)
    k = pot.newtonian_kernel()
    centers = [st.solve_stationary(p, k, a, n=300, domain_radius=6.0).center_density
               for a in (0.5, 1.0, 2.0, 4.0)]
    assert np.all(np.diff(centers) > 0)


def test_supercritical_rejected():
    with pytest.raises(ValueError):
        st.solve_stationary(Params(1.2, 3), pot.newtonian_kernel(), 1.0, n=100)


def test_m2_support_independent_of_mass():
    p = Params(2.0, 3)
    k = pot.newtonian_kernel()
    r1 = st.solve_stationary(p, k, 1.0, n=500, domain_radius=6.0).support_radius
    r4 = st.solve_stationary(p, k, 4.0, n=500, domain_radius=6.0).support_radius
    assert abs(r4 - r1) <= 5e-3 * r1


def test_rescale_identity_and_dichotomy(stationary_m2, p23):
    same = st.rescale_stationary(stationary_m2, 1.0, p23)
    assert np.allclose(same.profile.values, stationary_m2.profile.values, rtol=1e-14)

    p3 = Params(3.0, 3)
    base3 = st.solve_stationary(p3, pot.newtonian_kernel(), 1.0, n=400)
    up3 = st.rescale_stationary(base3, 8.0, p3)
    assert up3.mass == pytest.approx(8.0, abs=1e-10)
    assert up3.support_radius > base3.support_radius

    p18 = Params(1.8, 3)
    base18 = st.solve_stationary(p18, pot.newtonian_kernel(), 1.0, n=400)
    up18 = st.rescale_stationary(base18, 8.0, p18)
    assert up18.mass == pytest.approx(8.0, abs=1e-10)
    assert up18.support_radius < base18.support_radius

    # direct solves agree with the scaling law
    direct = st.solve_stationary(p3, pot.newtonian_kernel(), 8.0, n=400)
    assert up3.support_radius == pytest.approx(direct.support_radius, rel=2e-3)


def test_rescale_rejects_mollified():
    p = Params(2.0, 3)
    km = pot.mollified_kernel(pot.mollifier_profile("gaussian", 0.4))
    sol = st.solve_stationary(p, km, 1.0, n=300)
    with pytest.raises(ValueError):
        st.rescale_stationary(sol, 2.0, p)


def test_mollified_fixed_point(p23):
    km = pot.mollified_kernel(pot.mollifier_profile("gaussian", 0.4))
    sol = st.solve_stationary(p23, km, 1.0, n=400)
    assert sol.mass == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(sol.profile.values) <= 1e-15)
    # the relation (m/(m-1)) rho^(m-1) + rho*V = const holds on the solution
    assert sol.equation_residual < 5e-6
    # mollification spreads the steady state a little
    bare = st.solve_stationary(p23, pot.newtonian_kernel(), 1.0, n=400)
    assert sol.support_radius > bare.support_radius


def test_barenblatt_mass_quadrature_oracle():
    for m in (2.0, 1.5):
        p = Params(m, 3)
        c = st.barenblatt_constant(p, 1.0)
        kappa = (m - 1.0) * p.beta / (2.0 * m)
        val, _ = integrate.quad(
            lambda r: (c - kappa * r * r) ** (1.0 / (m - 1.0)) * p.sigma_d * r ** 2,
            0.0, math.sqrt(c / kappa))
        assert val == pytest.approx(1.0, abs=1e-8)
        prof = st.barenblatt(p, 1.0, 1.0)
        assert prof.mass == pytest.approx(1.0, abs=1e-8)


def test_barenblatt_self_similarity():
    p = Params(2.0, 3)
    assert p.alpha == pytest.approx(3.0 / 5.0)
    assert p.beta == pytest.approx(1.0 / 5.0)
    t = 4.0
    g1 = RadialGrid(dr=0.01, n=300, d=3)
    gt = RadialGrid(dr=0.01 * t ** p.beta, n=300, d=3)
    u1 = st.barenblatt(p, 1.0, 1.0, grid=g1)
    ut = st.barenblatt(p, 1.0, t, grid=gt)
    assert np.max(np.abs(ut.values - t ** (-p.alpha) * u1.values)) < 1e-10


def test_fokker_planck_stationary():
    p = Params(1.5, 3)
    mu = st.fokker_planck_stationary(p, 1.0)
    assert mu.mass == pytest.approx(1.0, abs=1e-8)
    assert np.all(np.diff(mu.profile.values) <= 1e-15)
    assert mu.support_radius == pytest.approx(
        math.sqrt(2.0 * mu.lagrange_constant / p.beta), rel=1e-12)


def test_stationary_minimizes_energy_among_dilations(stationary_m2, p23):
    k = pot.newtonian_kernel()
    base_e = pot.energy(stationary_m2.profile, k, p23)
    for factor in (0.8, 1.25):
        grid = RadialGrid(dr=stationary_m2.grid.dr / min(factor, 1.0),
                          n=stationary_m2.grid.n, d=3)
        rival = dilate(stationary_m2.profile, factor, grid)
        assert pot.energy(rival, k, p23) > base_e


def test_domain_too_small_raises():
    with pytest.raises(ConvergenceError):
        st.solve_stationary(Params(2.0, 3), pot.newtonian_kernel(), 1.0, n=200,
                            domain_radius=3.0)
