"""Simulation toolkit for a continuously monitored driven Duffing oscillator.

The package covers the full ladder from classical to quantum descriptions of
the same damped, driven double-well system: deterministic classical dynamics,
a Gaussian (semiclassical) moment closure, diffusive quantum trajectories for
an arbitrary fixed unraveling of the damping channel, and a dense Lindblad
reference. Analysis tools compute twin-trajectory Lyapunov exponents, Wigner
functions with their negativity, and detection-phase sweeps tying all of it
together.
"""

from .fock import (
    DensityMatrix,
    OperatorSet,
    SimParams,
    StateVector,
    auto_basis_size,
    build_operators,
    cat_state,
    coherent_state,
    expectation,
    fock_state,
    hamiltonian_at,
)
from .noise import NoisePath, UnravelingSpec, sample_increment, unraveling_from_optics

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix",
    "NoisePath",
    "OperatorSet",
    "SimParams",
    "StateVector",
    "UnravelingSpec",
    "auto_basis_size",
    "build_operators",
    "cat_state",
    "coherent_state",
    "expectation",
    "fock_state",
    "hamiltonian_at",
    "sample_increment",
    "unraveling_from_optics",
]
