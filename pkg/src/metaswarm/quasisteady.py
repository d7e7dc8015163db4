"""Multi-spike Gaussian quasi-equilibria: admissibility window, spike
widths, grid sampling of the two-spike profile, and the n-spike center
solve."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, ConvergenceError, GridCoverageError
from .kernels import Kernel
from .pde import DensityField, Grid

# Relative mass allowed to fall outside the grid when sampling a profile.
_TAIL_TOL = 1e-8


@dataclass
class SpikeState:
    masses: np.ndarray
    centers: np.ndarray
    widths_c: np.ndarray
    eps: float

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        self.centers = np.asarray(self.centers, dtype=float)
        self.widths_c = np.asarray(self.widths_c, dtype=float)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def admissible(self) -> bool:
        return bool(np.all(self.widths_c > 0.0))

    def to_json(self) -> str:
        return json.dumps({
            "masses": self.masses.tolist(),
            "centers": self.centers.tolist(),
            "widths": self.widths_c.tolist(),
            "eps": self.eps,
        })

    @classmethod
    def from_json(cls, text: str) -> "SpikeState":
        d = json.loads(text)
        return cls(d["masses"], d["centers"], d["widths"], d["eps"])


def admissible(M1: float, M2: float, k: Kernel) -> bool:
    """Mass ratios for which both spike widths are positive:
    -f'(0)/f'(a) < M1/M2 < -f'(a)/f'(0)."""
    if M1 <= 0 or M2 <= 0:
        raise ValueError("masses must be positive")
    a = k.require_root()
    fp0 = k.deriv(0.0)
    fpa = k.deriv(a)
    ratio = M1 / M2
    return bool(-fp0 / fpa < ratio < -fpa / fp0)


def spike_widths(M1: float, M2: float, k: Kernel):
    """Gaussian curvature parameters (c1, c2) of the two spikes."""
    a = k.require_root()
    fp0 = k.deriv(0.0)
    fpa = k.deriv(a)
    c1 = -(M1 * fp0 + M2 * fpa)
    c2 = -(M2 * fp0 + M1 * fpa)
    if c1 <= 0 or c2 <= 0:
        raise AdmissibilityError(
            f"non-positive spike width (c1={c1:.3g}, c2={c2:.3g}) "
            f"for masses ({M1}, {M2})"
        )
    return c1, c2


def two_spike_profile(x, M1, M2, x1, k: Kernel, eps: float):
    """Pointwise two-Gaussian quasi-steady profile (no renormalization)."""
    a = k.require_root()
    c1, c2 = spike_widths(M1, M2, k)
    x = np.asarray(x, dtype=float)
    rho = np.zeros_like(x)
    for M, xc, c in ((M1, x1, c1), (M2, x1 + a, c2)):
        y = (x - xc) / eps
        rho += (M / eps) * np.sqrt(c / (2.0 * np.pi)) * np.exp(-0.5 * c * y * y)
    return rho


def build_two_spike(M1: float, M2: float, x1: float, k: Kernel, eps: float,
                    grid: Grid) -> DensityField:
    """Sample the two-spike profile on a grid and normalize to exact mass.

    The grid must cover both spikes out to 8 standard deviations;
    truncated tails beyond 1e-8 relative mass are an error.
    """
    if not admissible(M1, M2, k):
        raise AdmissibilityError(
            f"masses ({M1}, {M2}) outside the admissible ratio window"
        )
    a = k.require_root()
    c1, c2 = spike_widths(M1, M2, k)
    lo = x1 - 8.0 * eps / np.sqrt(c1)
    hi = x1 + a + 8.0 * eps / np.sqrt(c2)
    if grid.x_left > lo or grid.x_right < hi:
        raise GridCoverageError(
            f"grid [{grid.x_left}, {grid.x_right}] does not cover "
            f"the spike support [{lo:.4g}, {hi:.4g}]"
        )
    values = two_spike_profile(grid.centers(), M1, M2, x1, k, eps)
    M = M1 + M2
    discrete = values.sum() * grid.dx
    if abs(discrete - M) > _TAIL_TOL * M:
        raise GridCoverageError(
            f"sampled mass {discrete:.12g} deviates from {M} beyond the "
            "tail-truncation tolerance; enlarge the grid or refine dx"
        )
    values *= M / discrete
    return DensityField(grid=grid, values=values, time=0.0)


def _centers_residual(centers, masses, k: Kernel):
    diff = centers[:, None] - centers[None, :]
    return k.eval(diff) @ masses


def n_spike_state(masses, k: Kernel, eps: float, check: bool = True,
                  max_iter: int = 100, tol: float = 1e-13) -> SpikeState:
    """Solve for spike centers (gauge x1 = 0) by damped Newton iteration.

    With ``check`` the widths must all be positive, otherwise the state is
    returned with its ``admissible`` flag left to the caller.
    """
    masses = np.asarray(masses, dtype=float)
    n = masses.size
    if n < 2:
        raise ValueError("need at least two spikes")
    a = k.require_root()
    centers = a * np.arange(n, dtype=float)

    def reduced_residual(c):
        return _centers_residual(c, masses, k)[1:]

    res = reduced_residual(centers)
    for _ in range(max_iter):
        if np.max(np.abs(res)) < tol:
            break
        # Jacobian of residual j (j>=1) w.r.t. centers i (i>=1)
        diff = centers[:, None] - centers[None, :]
        fp = k.deriv(diff)
        J = np.zeros((n - 1, n - 1))
        for j in range(1, n):
            row = -masses * fp[j]
            row[j] = np.sum(masses * fp[j]) - masses[j] * fp[j, j]
            J[j - 1] = row[1:]
        try:
            delta = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Newton system: {exc}") from exc
        step = 1.0
        norm0 = np.max(np.abs(res))
        for _ in range(30):
            trial = centers.copy()
            trial[1:] += step * delta
            trial_res = reduced_residual(trial)
            if np.max(np.abs(trial_res)) < norm0:
                centers, res = trial, trial_res
                break
            step *= 0.5
        else:
            raise ConvergenceError("Newton damping failed to reduce residual")
    else:
        raise ConvergenceError(
            f"spike-center solve did not converge in {max_iter} iterations"
        )

    diff = centers[:, None] - centers[None, :]
    widths = -(k.deriv(diff) @ masses)
    if check and np.any(widths <= 0.0):
        raise AdmissibilityError(
            f"n-spike state has non-positive widths: {widths}"
        )
    return SpikeState(masses=masses, centers=centers, widths_c=widths, eps=eps)
