"""Interacting-particle simulation: deterministic gradient flow and its
noisy Euler-Maruyama counterpart, plus density and cluster diagnostics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _stepping
from .errors import DivergenceError, EmptyWindowError
from .kernels import Kernel

# PRNG backing all stochastic runs; recorded in run metadata.
PRNG_ALGORITHM = "PCG64"

# Noise chunks are drawn in blocks of this many steps to keep memory flat.
_CHUNK_STEPS = 8192


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 1:
            raise ValueError("positions must be a 1D array")

    @property
    def n(self) -> int:
        return self.positions.size

    def mean(self) -> float:
        return float(self.positions.mean())


@dataclass
class SdeConfig:
    sigma: float
    dt: float
    steps: int
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps <= 0:
            raise ValueError("steps must be positive")

    @property
    def t_total(self) -> float:
        return self.dt * self.steps

    def make_rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray  # density values: sum(counts * widths) == normalization
    normalization: float

    @property
    def bin_widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def _check_stability(k: Kernel, ens: ParticleEnsemble, dt: float) -> None:
    # Explicit Euler needs dt < 2/max|v'|; estimate v' from the particle cloud.
    span = np.max(np.abs(ens.positions - ens.mean())) + 1.0
    vp = abs(k.deriv(0.0)) + abs(k.deriv(span))
    if vp > 0 and dt >= 2.0 / vp:
        warnings.warn(
            f"dt={dt} may be unstable for this force (need dt < {2.0 / vp:.3g})",
            RuntimeWarning,
        )


def _advance(ens: ParticleEnsemble, k: Kernel, dt: float, noise_amp: float,
             noise: np.ndarray, nsteps: int) -> ParticleEnsemble:
    x = ens.positions.copy()
    status, bad = _stepping.advance_particles(
        x, k.full_power_coefficients, dt, noise_amp, noise, nsteps
    )
    if status == _stepping.NONFINITE:
        raise DivergenceError(
            f"particle {bad} diverged (non-finite position) at t~{ens.time}",
            index=bad,
        )
    return ParticleEnsemble(positions=x, time=ens.time + nsteps * dt)


def step_deterministic(ens: ParticleEnsemble, k: Kernel, dt: float) -> ParticleEnsemble:
    """One forward-Euler step of the zero-noise gradient flow."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    empty = np.empty((1, ens.n))
    return _advance(ens, k, dt, 0.0, empty, 1)


def step_stochastic(ens: ParticleEnsemble, k: Kernel, cfg: SdeConfig,
                    rng: np.random.Generator) -> ParticleEnsemble:
    """One Euler-Maruyama step; bit-identical to the deterministic step
    when cfg.sigma == 0."""
    if cfg.sigma == 0.0:
        return step_deterministic(ens, k, cfg.dt)
    noise = rng.standard_normal((1, ens.n))
    amp = cfg.sigma * np.sqrt(cfg.dt)
    return _advance(ens, k, cfg.dt, amp, noise, 1)


def simulate(ens: ParticleEnsemble, k: Kernel, cfg: SdeConfig,
             record_every: int = 0, rng: np.random.Generator | None = None):
    """Advance cfg.steps steps; returns (final ensemble, snapshots).

    ``record_every`` > 0 records a snapshot every that many steps (the
    initial state is not recorded; the final state always is).
    """
    if rng is None:
        rng = cfg.make_rng()
    _check_stability(k, ens, cfg.dt)
    amp = cfg.sigma * np.sqrt(cfg.dt)
    snapshots: list[ParticleEnsemble] = []
    done = 0
    empty = np.empty((1, ens.n))
    while done < cfg.steps:
        if record_every > 0:
            block = min(record_every, cfg.steps - done)
        else:
            block = min(_CHUNK_STEPS, cfg.steps - done)
        if amp == 0.0:
            noise = empty
        else:
            noise = rng.standard_normal((block, ens.n))
        ens = _advance(ens, k, cfg.dt, amp, noise, block)
        done += block
        if record_every > 0:
            snapshots.append(ens)
    return ens, snapshots


def energy(ens: ParticleEnsemble, potential) -> float:
    """Pairwise interaction energy sum_{k,j} P(|x_j - x_k|), diagonal included."""
    x = ens.positions
    sep = np.abs(x[:, None] - x[None, :])
    return float(np.sum(potential(sep)))


def cubic_potential(r):
    """Double-well potential paired with the cubic force: P(r) = -r^2/2 + r^4/4."""
    r = np.asarray(r, dtype=float)
    return -0.5 * r * r + 0.25 * r ** 4


def density_estimate(snapshots, bins: int, window) -> Histogram:
    """Pooled, mass-normalized histogram over snapshots.

    Each particle carries mass 1/n; the result integrates to total mass 1.
    """
    if not snapshots:
        raise ValueError("snapshots must be nonempty")
    lo, hi = float(window[0]), float(window[1])
    pooled = np.concatenate([s.positions for s in snapshots])
    inside = pooled[(pooled >= lo) & (pooled <= hi)]
    if inside.size == 0:
        raise EmptyWindowError(f"no particles in window [{lo}, {hi}]")
    counts, edges = np.histogram(pooled, bins=bins, range=(lo, hi))
    widths = np.diff(edges)
    # Normalize over the particles inside the window so the discrete
    # integral equals the ensemble mass exactly.
    density = counts / (inside.size * widths)
    return Histogram(bin_edges=edges, counts=density, normalization=1.0)


def cluster_masses(ens: ParticleEnsemble, split_point: float, total_mass: float = 1.0):
    """(mass strictly left of split, mass at or right of split)."""
    left = int(np.count_nonzero(ens.positions < split_point))
    m1 = total_mass * left / ens.n
    return m1, total_mass - m1
