"""Slow mass-exchange machinery: separatrix location, action integrals,
the general two-spike exchange ODE, its cubic closed forms, and the
log-time asymptotics of the mass gap d = M2 - M1."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import AdmissibilityError, ConvergenceError, DiagnosticError
from .kernels import Kernel
from .quasisteady import admissible, spike_widths

_SCAN_POINTS = 1000
_BISECT_TOL = 1e-14


@dataclass(frozen=True)
class Separatrix:
    """Interior zero of the two-spike velocity, dividing mass ownership."""

    xhat: float
    vprime_at_xhat: float
    unique: bool


@dataclass(frozen=True)
class ActionIntegrals:
    """I_j = integral of v from the separatrix to spike center j."""

    I1: float
    I2: float


@dataclass
class MassTrajectory:
    """Time series (t, M1, M2) with the gap d = M2 - M1 derived."""

    t: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    floor_reached: bool = False

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.M1 = np.asarray(self.M1, dtype=float)
        self.M2 = np.asarray(self.M2, dtype=float)

    @property
    def d(self) -> np.ndarray:
        return self.M2 - self.M1

    def __len__(self) -> int:
        return self.t.size


def two_spike_velocity(x, M1: float, M2: float, k: Kernel):
    """v(x) = M1 f(x) + M2 f(x - a) in the gauge x1 = 0, x2 = a."""
    a = k.require_root()
    return M1 * k.eval(x) + M2 * k.eval(np.asarray(x, dtype=float) - a)


def find_xhat(M1: float, M2: float, k: Kernel) -> Separatrix:
    """Locate the ascending interior zero of the two-spike velocity.

    Sign-change scan over 1000 subintervals of (0, a), then bisection to
    1e-14.  ``unique`` is true iff exactly one minus-to-plus crossing is
    seen.
    """
    if not admissible(M1, M2, k):
        raise AdmissibilityError(
            f"masses ({M1}, {M2}) outside the admissible window; "
            "no separatrix exists"
        )
    a = k.require_root()
    xs = np.linspace(0.0, a, _SCAN_POINTS + 1)
    vs = M1 * k.eval(xs) + M2 * k.eval(xs - a)
    ascending = []  # entries: (index, exact_root_or_None)
    for i in range(1, _SCAN_POINTS):
        if vs[i] < 0.0 < vs[i + 1]:
            ascending.append((i, None))
        elif vs[i] == 0.0 and vs[i - 1] < 0.0 < vs[i + 1]:
            # scan point sits exactly on the root
            ascending.append((i, xs[i]))
    if not ascending:
        raise AdmissibilityError(
            "no ascending interior zero of the velocity found; "
            "admissibility violated"
        )
    i, exact = ascending[0]
    if exact is not None:
        xhat = exact
    else:
        lo, hi = xs[i], xs[i + 1]
        flo = vs[i]
        while hi - lo > _BISECT_TOL:
            mid = 0.5 * (lo + hi)
            fm = M1 * k.eval(mid) + M2 * k.eval(mid - a)
            if fm == 0.0:
                lo = hi = mid
                break
            if flo * fm < 0.0:
                hi = mid
            else:
                lo, flo = mid, fm
        xhat = 0.5 * (lo + hi)
    vp = M1 * k.deriv(xhat) + M2 * k.deriv(xhat - a)
    return Separatrix(xhat=float(xhat), vprime_at_xhat=float(vp),
                      unique=(len(ascending) == 1))


def action_integrals(M1: float, M2: float, k: Kernel,
                     sep: Separatrix | None = None) -> ActionIntegrals:
    """Adaptive quadrature of v from the separatrix to each spike center."""
    a = k.require_root()
    if sep is None:
        sep = find_xhat(M1, M2, k)

    def v(x):
        return M1 * k.eval(x) + M2 * k.eval(x - a)

    I1, _ = quad(v, sep.xhat, 0.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    I2, _ = quad(v, sep.xhat, a, epsabs=1e-14, epsrel=1e-13, limit=200)
    return ActionIntegrals(I1=float(I1), I2=float(I2))


def mass_exchange_rhs(M1: float, M2: float, k: Kernel, eps: float) -> float:
    """dM1/dt of the exponentially slow exchange between the two spikes.

    Computed in the canonical orientation M1 < M2 and mirrored by
    oddness, so antisymmetry under mass swap holds exactly in floating
    point.
    """
    if M1 == M2:
        return 0.0
    if M1 > M2:
        return -mass_exchange_rhs(M2, M1, k, eps)
    if not admissible(M1, M2, k):
        raise AdmissibilityError(
            f"masses ({M1}, {M2}) outside the admissible window"
        )
    sep = find_xhat(M1, M2, k)
    acts = action_integrals(M1, M2, k, sep)
    c1, c2 = spike_widths(M1, M2, k)
    eps2 = eps * eps
    pref = np.sqrt(sep.vprime_at_xhat) / np.pi
    gain = 0.5 * M2 * pref * np.sqrt(c2) * np.exp(-acts.I2 / eps2)
    loss = 0.5 * M1 * pref * np.sqrt(c1) * np.exp(-acts.I1 / eps2)
    return float(gain - loss)


# ---------------------------------------------------------------------------
# Closed forms for the cubic force f(x) = x - x^3 (total mass M = M1 + M2).
# Used as independent oracles for the quadrature/bisection path.

def cubic_separatrix(M1: float, M2: float) -> float:
    return (2.0 * M2 - M1) / (M1 + M2)


def cubic_separatrix_slope(M1: float, M2: float) -> float:
    M = M1 + M2
    return (2.0 * M2 - M1) * (2.0 * M1 - M2) / M


def cubic_action_integrals(M1: float, M2: float) -> ActionIntegrals:
    M = M1 + M2
    I1 = M1 * (2.0 * M2 - M1) ** 3 / (4.0 * M ** 3)
    I2 = M2 * (2.0 * M1 - M2) ** 3 / (4.0 * M ** 3)
    return ActionIntegrals(I1=I1, I2=I2)


def cubic_exchange_term(M1: float, M2: float, eps: float) -> float:
    """One directed flow term of the cubic exchange ODE; the full right
    side is cubic_exchange_term(M1, M2) - cubic_exchange_term(M2, M1)."""
    M = M1 + M2
    eps2 = eps * eps
    return (M2 / (2.0 * np.pi) * np.sqrt((2.0 * M2 - M1) / M)
            * (2.0 * M1 - M2)
            * np.exp(-M2 * (2.0 * M1 - M2) ** 3 / (4.0 * M ** 3 * eps2)))


def cubic_exchange_rhs(M1: float, M2: float, eps: float) -> float:
    return cubic_exchange_term(M1, M2, eps) - cubic_exchange_term(M2, M1, eps)


# ---------------------------------------------------------------------------

def integrate_masses(M1_0: float, M: float, k: Kernel, eps: float,
                     t_end: float, max_rel_step: float = 0.01) -> MassTrajectory:
    """Integrate the exchange ODE adaptively from M1(0) = M1_0.

    Step size is controlled so |d| changes by at most ``max_rel_step``
    relative per step (the right side spans many orders of magnitude).
    Integration stops early, flagged, once |d| < eps^2 where the
    one-sided asymptotics loses validity.
    """
    M2_0 = M - M1_0
    if not admissible(M1_0, M2_0, k):
        raise AdmissibilityError(
            f"initial masses ({M1_0}, {M2_0}) outside the admissible window"
        )
    eps2 = eps * eps
    t, m1 = 0.0, M1_0
    ts, m1s = [t], [m1]
    floor = False

    def rhs(m):
        return mass_exchange_rhs(m, M - m, k, eps)

    d = M - 2.0 * m1
    if abs(d) < eps2:
        floor = True
    f = rhs(m1)
    while t < t_end and not floor:
        d = M - 2.0 * m1
        if f == 0.0:
            # equilibrium: nothing will ever change
            t = t_end
            break
        dt = max_rel_step * abs(d) / (2.0 * abs(f))
        dt = min(dt, t_end - t)
        if dt <= 0.0 or not np.isfinite(dt):
            raise ConvergenceError(f"step-size underflow at t={t}, d={d}")
        # Heun (explicit trapezoid) step
        pred = m1 + dt * f
        f_pred = rhs(pred)
        m1_new = m1 + 0.5 * dt * (f + f_pred)
        t += dt
        m1 = m1_new
        f = rhs(m1)
        ts.append(t)
        m1s.append(m1)
        if abs(M - 2.0 * m1) < eps2:
            floor = True

    m1s = np.array(m1s)
    return MassTrajectory(t=np.array(ts), M1=m1s, M2=M - m1s,
                          floor_reached=floor)


def log_time_axis(t, M: float, eps: float):
    """Stretched horizontal axis 64 M^3 eps^2 log(t / (eps^2 64 M^3))."""
    scale = 64.0 * M ** 3 * eps * eps
    t = np.asarray(t, dtype=float)
    out = scale * np.log(t / scale)
    return out if out.ndim else float(out)


def gap_from_axis(value, M: float, tol: float = 1e-14) -> float:
    """Invert (M+d)(M-3d)^3 = value for d in [0, M/3) by bisection.

    The left side decreases from M^4 at d = 0 to 0 at d = M/3, so a root
    exists iff 0 < value <= M^4.
    """
    value = float(value)
    if not 0.0 < value <= M ** 4:
        raise ValueError(
            f"axis value {value:.6g} outside (0, M^4]; "
            "out of asymptotic range"
        )

    def g(d):
        return (M + d) * (M - 3.0 * d) ** 3 - value

    lo, hi = 0.0, M / 3.0
    if g(lo) <= 0.0:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def d_of_logt(t: float, M: float, eps: float) -> float:
    """Leading-order mass gap at (large) time t from the separable ODE."""
    return gap_from_axis(log_time_axis(t, M, eps), M)


def slope_diagnostic(traj: MassTrajectory, eps: float, M: float):
    """Pairs (d, eps^2 log|d'|, -(M+d)(M-3d)^3 / (64 M^3)) per sample.

    d' is estimated with a centered difference in log t on the (log-
    spaced) samples; endpoints are dropped.
    """
    if len(traj) < 3:
        raise DiagnosticError("need at least 3 trajectory samples")
    t = traj.t
    d = traj.d
    if np.any(t <= 0):
        raise DiagnosticError("samples must have strictly positive times")
    logt = np.log(t)
    dd_dlogt = (d[2:] - d[:-2]) / (logt[2:] - logt[:-2])
    dprime = dd_dlogt / t[1:-1]
    if np.all(dprime == 0.0):
        raise DiagnosticError("d'(t) vanishes everywhere; diagnostic undefined")
    with np.errstate(divide="ignore"):
        lhs = eps * eps * np.log(np.abs(dprime))
    dmid = d[1:-1]
    rhs = -(M + dmid) * (M - 3.0 * dmid) ** 3 / (64.0 * M ** 3)
    return dmid, lhs, rhs
