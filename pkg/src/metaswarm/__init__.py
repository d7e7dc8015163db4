"""metaswarm: 1D aggregation-with-noise toolkit.

Simulates the interacting-particle system and its nonlocal PDE limit,
constructs multi-spike quasi-steady states, and integrates and validates
the exponentially slow mass exchange between spikes.
"""

from .kernels import (
    ConditionReport,
    Kernel,
    KernelSpec,
    check_conditions,
    make_cubic,
    make_linear,
    make_odd_polynomial,
)
from .metadyn import (
    ActionIntegrals,
    MassTrajectory,
    Separatrix,
    action_integrals,
    d_of_logt,
    find_xhat,
    integrate_masses,
    mass_exchange_rhs,
    slope_diagnostic,
)
from .particles import (
    Histogram,
    ParticleEnsemble,
    SdeConfig,
    cluster_masses,
    density_estimate,
    energy,
    step_deterministic,
    step_stochastic,
)
from .pde import (
    DensityField,
    Grid,
    PdeConfig,
    mass_split,
    run_to,
    semi_implicit_step,
    velocity_field,
)
from .quasisteady import (
    SpikeState,
    admissible,
    build_two_spike,
    n_spike_state,
    spike_widths,
)

__version__ = "0.1.0"

__all__ = [
    "ActionIntegrals", "ConditionReport", "DensityField", "Grid",
    "Histogram", "Kernel", "KernelSpec", "MassTrajectory", "ParticleEnsemble",
    "PdeConfig", "SdeConfig", "Separatrix", "SpikeState",
    "action_integrals", "admissible", "build_two_spike", "check_conditions",
    "cluster_masses", "d_of_logt", "density_estimate", "energy", "find_xhat",
    "integrate_masses", "make_cubic", "make_linear", "make_odd_polynomial",
    "mass_exchange_rhs", "mass_split", "n_spike_state", "run_to",
    "semi_implicit_step", "slope_diagnostic", "spike_widths",
    "step_deterministic", "step_stochastic", "velocity_field",
]
