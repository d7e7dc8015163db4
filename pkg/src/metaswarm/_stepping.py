"""Numba-compiled inner loops for the particle and PDE time steppers.

These functions are deliberately free of Python objects: they take plain
arrays plus the dense power-coefficient representation of the force and
advance many steps per call.  Status codes (instead of exceptions) cross
the JIT boundary; callers translate them.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Status codes returned by the steppers.
OK = 0
NONFINITE = 1
NEGATIVE = 2


# reassociation-only fastmath: the nnan/ninf assumptions of full fastmath
# would let the compiler drop the isfinite divergence guards
_FASTMATH = {"contract", "reassoc", "nsz", "arcp"}


@njit(cache=True, fastmath=_FASTMATH)
def pairwise_force(x, cpow, out):
    """Mean pairwise force (1/n) * sum_k f(x_j - x_k) for every particle j."""
    n = x.shape[0]
    npow = cpow.shape[0]
    for j in range(n):
        acc = 0.0
        xj = x[j]
        for k in range(n):
            d = xj - x[k]
            # Horner over all powers; even coefficients are zero.
            f = cpow[npow - 1]
            for p in range(npow - 2, -1, -1):
                f = f * d + cpow[p]
            acc += f
        out[j] = acc / n
    return out


@njit(cache=True, fastmath=_FASTMATH, nogil=True)
def advance_particles(x, cpow, dt, noise_amp, noise, nsteps):
    """Forward Euler / Euler-Maruyama over ``nsteps`` steps, in place.

    ``noise`` has shape (nsteps, n); it is ignored when noise_amp == 0 so
    the zero-noise path is bit-identical to the deterministic stepper.
    Returns (status, bad_index).
    """
    n = x.shape[0]
    force = np.empty(n)
    for s in range(nsteps):
        pairwise_force(x, cpow, force)
        if noise_amp == 0.0:
            for j in range(n):
                x[j] = x[j] + dt * force[j]
        else:
            for j in range(n):
                x[j] = x[j] + dt * force[j] + noise_amp * noise[s, j]
        for j in range(n):
            if not np.isfinite(x[j]):
                return NONFINITE, j
    return OK, -1


@njit(cache=True)
def velocity_direct(xc, rho, dx, cpow, out):
    """Midpoint quadrature of the convolution v = f * rho, direct O(N^2)."""
    n = xc.shape[0]
    npow = cpow.shape[0]
    for i in range(n):
        acc = 0.0
        xi = xc[i]
        for j in range(n):
            d = xi - xc[j]
            f = cpow[npow - 1]
            for p in range(npow - 2, -1, -1):
                f = f * d + cpow[p]
            acc += f * rho[j]
        out[i] = acc * dx
    return out


@njit(cache=True)
def _binom_table(pmax):
    t = np.zeros((pmax + 1, pmax + 1))
    for p in range(pmax + 1):
        t[p, 0] = 1.0
        for m in range(1, p + 1):
            t[p, m] = t[p - 1, m - 1] + (t[p - 1, m] if m <= p - 1 else 0.0)
    return t


@njit(cache=True)
def velocity_poly(xc, rho, dx, cpow, out):
    """Moment-based evaluation of v = f * rho for polynomial forces, O(N).

    Expands (x - y)^p binomially so the convolution reduces to the first
    few moments of rho.  Exact up to roundoff; validated against
    velocity_direct in the test suite.
    """
    n = xc.shape[0]
    pmax = cpow.shape[0] - 1
    binom = _binom_table(pmax)
    # moments S_m = sum_j x_j^m rho_j dx
    S = np.zeros(pmax + 1)
    for j in range(n):
        w = rho[j] * dx
        xp = 1.0
        for m in range(pmax + 1):
            S[m] += xp * w
            xp *= xc[j]
    # coefficients of the resulting polynomial in x_i
    a = np.zeros(pmax + 1)
    for p in range(pmax + 1):
        if cpow[p] == 0.0:
            continue
        sign = 1.0
        for m in range(p + 1):
            a[p - m] += cpow[p] * binom[p, m] * sign * S[m]
            sign = -sign
    for i in range(n):
        acc = a[pmax]
        for q in range(pmax - 1, -1, -1):
            acc = acc * xc[i] + a[q]
        out[i] = acc
    return out


@njit(cache=True, nogil=True)
def advance_pde(rho, xc, dx, dt, eps2, cpow, nsteps, neg_tol):
    """Semi-implicit steps: explicit upwind advection, implicit diffusion.

    The advective flux is built from the explicit velocity at the current
    time; diffusion is backward Euler solved by the Thomas algorithm with
    zero-flux ends.  Returns (status, bad_index, max_abs_velocity).
    """
    n = rho.shape[0]
    al = dt * eps2 / (dx * dx)
    v = np.empty(n)
    flux = np.zeros(n + 1)
    cp = np.empty(n)
    dp = np.empty(n)
    vmax = 0.0
    for s in range(nsteps):
        velocity_poly(xc, rho, dx, cpow, v)
        for i in range(n):
            av = abs(v[i])
            if av > vmax:
                vmax = av
        flux[0] = 0.0
        flux[n] = 0.0
        for i in range(1, n):
            u = 0.5 * (v[i - 1] + v[i])
            flux[i] = u * rho[i - 1] if u > 0.0 else u * rho[i]
        for i in range(n):
            rho[i] = rho[i] - (dt / dx) * (flux[i + 1] - flux[i])
        # backward-Euler diffusion in increment form: solve
        # (I - al*L) delta = al*L*rho_star, rho_new = rho_star + delta.
        # The increment is small next to rho, so the float mass error per
        # step scales with |delta|, not |rho|.
        flux[0] = 0.0
        flux[n] = 0.0
        for i in range(1, n):
            flux[i] = rho[i] - rho[i - 1]
        b = 1.0 + al
        r = al * (flux[1] - flux[0])
        cp[0] = -al / b
        dp[0] = r / b
        for i in range(1, n):
            b = 1.0 + al if i == n - 1 else 1.0 + 2.0 * al
            r = al * (flux[i + 1] - flux[i])
            m = b + al * cp[i - 1]
            cp[i] = -al / m
            dp[i] = (r + al * dp[i - 1]) / m
        delta = dp[n - 1]
        rho[n - 1] = rho[n - 1] + delta
        for i in range(n - 2, -1, -1):
            delta = dp[i] - cp[i] * delta
            rho[i] = rho[i] + delta
        for i in range(n):
            if not np.isfinite(rho[i]):
                return NONFINITE, i, vmax
            if rho[i] < -neg_tol:
                return NEGATIVE, i, vmax
    return OK, -1, vmax
