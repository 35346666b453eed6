"""Dense master-equation reference evolution.

Unraveling-independent ensemble dynamics

    dρ/dt = -i[H(t), ρ] + L ρ L† - (1/2){L†L, ρ},

integrated with fixed-step RK4. This module exists as the correctness anchor
for the stochastic trajectory layer: averaging trajectories over any valid
unraveling must reproduce this evolution. Dense O(N²) storage caps the basis
at N ≤ 80; larger bases belong to the trajectory layer.
"""

from __future__ import annotations

import math

import numpy as np

from .fock import DensityMatrix, OperatorSet, SimParams

__all__ = ["lindblad_rhs", "evolve_density", "trace_distance", "MAX_DENSITY_LEVELS"]

MAX_DENSITY_LEVELS = 80

#: default RK4 step as a fraction of the drive period; chosen so the
#: commutator spectral radius times dt stays inside the RK4 stability region
#: for every supported basis size
RHO_PERIOD_FRACTION = 5.0e-4


def lindblad_rhs(rho: np.ndarray, ops: OperatorSet, params: SimParams, t: float) -> np.ndarray:
    """Right-hand side of the master equation at time t (raw matrices)."""
    h = ops.h_static + math.cos(params.omega * t) * ops.h_drive
    l_op = ops.l_op
    lrho = l_op @ rho
    # L†L = 2Γ·n̂ is diagonal; keep the product explicit for clarity
    ldl_rho = l_op.conj().T @ lrho
    out = -1j * (h @ rho - rho @ h)
    out += lrho @ l_op.conj().T
    out -= 0.5 * (ldl_rho + ldl_rho.conj().T)
    return out


def evolve_density(
    params: SimParams,
    rho0: DensityMatrix,
    duration: float,
    ops: OperatorSet | None = None,
    dt: float | None = None,
    t0: float = 0.0,
    sample_times: np.ndarray | None = None,
) -> DensityMatrix | list[tuple[float, DensityMatrix]]:
    """Integrate the master equation for `duration`.

    Parameters
    ----------
    params, rho0 : model parameters and initial state.
    ops : optional prebuilt OperatorSet (must match params).
    dt : RK4 step; default 5e-4 drive periods.
    sample_times : optional increasing times (relative to t0) at which
        snapshots are returned; otherwise only the final state is returned.

    Raises
    ------
    ValueError
        If the basis exceeds MAX_DENSITY_LEVELS or shapes disagree.
    """
    n = rho0.n_levels
    if n > MAX_DENSITY_LEVELS:
        raise ValueError(
            f"dense density evolution capped at {MAX_DENSITY_LEVELS} levels, got {n}"
        )
    if params.n_levels != n:
        raise ValueError("params.n_levels does not match the density matrix")
    if ops is None:
        ops = build_ops_cached(params)

    h = dt if dt is not None else RHO_PERIOD_FRACTION * params.period
    steps = max(1, round(duration / h))
    h = duration / steps

    want = None
    if sample_times is not None:
        want = [max(0, min(steps, round(s / h))) for s in sample_times]
    snapshots: list[tuple[float, DensityMatrix]] = []

    rho = rho0.elems.copy()
    for k in range(steps):
        t = t0 + k * h
        k1 = lindblad_rhs(rho, ops, params, t)
        k2 = lindblad_rhs(rho + 0.5 * h * k1, ops, params, t + 0.5 * h)
        k3 = lindblad_rhs(rho + 0.5 * h * k2, ops, params, t + 0.5 * h)
        k4 = lindblad_rhs(rho + h * k3, ops, params, t + h)
        rho += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if want is not None and (k + 1) in want:
            snapshots.append((t0 + (k + 1) * h, DensityMatrix(rho.copy())))

    if want is not None:
        return snapshots
    return DensityMatrix(rho)


def build_ops_cached(params: SimParams) -> OperatorSet:
    # local import keeps the module graph acyclic
    from .fock import build_operators

    return build_operators(params)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """T(a, b) = (1/2)·Σ|eig(a - b)| for Hermitian difference."""
    diff = a.elems - b.elems
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
