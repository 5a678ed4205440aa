"""Jitted inner loop for the explicit conservative finite-volume update."""
from __future__ import annotations

import numpy as np
from numba import njit

# drift modes
DRIFT_NONE = 0
DRIFT_POINT_MASS = 1  # Laplacian of the potential is the unit point mass: Mtilde = M
DRIFT_MATVEC = 2      # Mtilde from a precomputed convolution matrix
DRIFT_FROZEN = 3      # a priori drift derivative at the edges, possibly signed

STATUS_DONE = 0
STATUS_BLOWUP = 1
STATUS_MAXSTEPS = 2


@njit(cache=True, fastmath=True)
def advance(rho, t, t_stop, max_steps,
            dr, vol, area, redges, d, m,
            drift_mode, conv_w, frozen_drift,
            rescaled, beta, one_minus_alpha, agg_scale,
            cfl_d, cfl_a, blowup_threshold):
    """Advance rho in place with the flux-form explicit scheme until t_stop.

    Face flux: area * [(rho^m difference)/dr + upwinded rho * drift]; zero flux
    at r=0 and the outer boundary, so cell masses telescope exactly. The time
    step is the dual CFL bound min(cfl_d dr^2/(2 d m max rho^(m-1)),
    cfl_a dr / max |drift|). Returns (t, steps, dt_last, status).
    """
    n = rho.size
    w = np.empty(n)
    drift = np.zeros(n + 1)
    mtil = np.zeros(n)
    flux = np.zeros(n + 1)
    inv_vol = 1.0 / vol
    inv_dr = 1.0 / dr
    steps = 0
    dt = 0.0

    while t < t_stop and steps < max_steps:
        # aggregation drift at interior edges
        if drift_mode == DRIFT_POINT_MASS:
            acc = 0.0
            for i in range(n):
                acc += rho[i] * vol[i]
                mtil[i] = acc
        elif drift_mode == DRIFT_MATVEC:
            conv = np.dot(conv_w, rho)
            acc = 0.0
            for i in range(n):
                acc += conv[i] * vol[i]
                mtil[i] = acc

        if rescaled:
            agg_coef = agg_scale * np.exp(one_minus_alpha * t)
            conf = beta
        else:
            agg_coef = agg_scale
            conf = 0.0

        max_drift = 0.0
        if drift_mode != DRIFT_NONE or rescaled:
            for e in range(1, n):
                if drift_mode == DRIFT_POINT_MASS or drift_mode == DRIFT_MATVEC:
                    ag = mtil[e - 1] / area[e]
                elif drift_mode == DRIFT_FROZEN:
                    ag = frozen_drift[e]
                else:
                    ag = 0.0
                val = agg_coef * ag + conf * redges[e]
                drift[e] = val
                if abs(val) > max_drift:
                    max_drift = abs(val)

        rmax = 0.0
        if m == 2.0:
            for i in range(n):
                ri = rho[i]
                w[i] = ri * ri
                if ri > rmax:
                    rmax = ri
        elif m == 1.5:
            for i in range(n):
                ri = rho[i]
                w[i] = ri * np.sqrt(ri)
                if ri > rmax:
                    rmax = ri
        else:
            for i in range(n):
                ri = rho[i]
                w[i] = ri ** m
                if ri > rmax:
                    rmax = ri

        dt = t_stop - t
        if rmax > 0.0:
            dt_diff = cfl_d * dr * dr / (2.0 * d * m * rmax ** (m - 1.0))
            if dt_diff < dt:
                dt = dt_diff
        if max_drift > 0.0:
            dt_adv = cfl_a * dr / max_drift
            if dt_adv < dt:
                dt = dt_adv
        if rmax == 0.0 and max_drift == 0.0:
            t = t_stop
            steps += 1
            break

        flux[0] = 0.0
        flux[n] = 0.0
        for e in range(1, n):
            de = drift[e]
            up = rho[e] if de >= 0.0 else rho[e - 1]
            flux[e] = area[e] * ((w[e] - w[e - 1]) * inv_dr + up * de)
        blow = False
        for i in range(n):
            rho[i] += dt * inv_vol[i] * (flux[i + 1] - flux[i])
            if rho[i] > blowup_threshold:
                blow = True

        t += dt
        steps += 1
        if blow:
            return t, steps, dt, STATUS_BLOWUP

    status = STATUS_DONE if t >= t_stop else STATUS_MAXSTEPS
    return t, steps, dt, status


_EMPTY_MATRIX = np.zeros((1, 1))
_EMPTY_EDGES = np.zeros(1)
