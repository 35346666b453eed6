"""Master-equation reference checks, including an exponential-map oracle."""

from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg

from qduff.fock import DensityMatrix, SimParams, build_operators, coherent_state, fock_state
from qduff.lindblad import evolve_density, lindblad_rhs, trace_distance


def density_from_state(sv) -> DensityMatrix:
    return DensityMatrix(np.outer(sv.amps, sv.amps.conj()))


def test_rhs_is_traceless_and_hermiticity_preserving():
    p = SimParams(beta=1.0, basis_size=20)
    ops = build_operators(p)
    rng = np.random.default_rng(3)
    m = rng.normal(size=(20, 20)) + 1j * rng.normal(size=(20, 20))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    out = lindblad_rhs(rho, ops, p, t=0.37)
    assert abs(np.trace(out)) < 1e-12
    assert np.max(np.abs(out - out.conj().T)) < 1e-12


def test_rhs_mean_field_identities():
    # the damping Hamiltonian term and the dissipator must combine to give
    #   d<Q>/dt = <P>
    #   d<P>/dt = -beta^2<Q^3> + <Q> - 2*Gamma*<P> + (g/beta)cos(Omega t)
    # needs a state with negligible top-of-basis population: the identities
    # inherit the truncation error of [Q, P] = i
    p = SimParams(gamma=0.17, g=0.4, beta=0.6, basis_size=25)
    ops = build_operators(p)
    a1 = coherent_state(1.1 + 0.3j, 25)
    a2 = coherent_state(-0.8 + 0.9j, 25)
    rho = 0.6 * np.outer(a1.amps, a1.amps.conj()) + 0.4 * np.outer(a2.amps, a2.amps.conj())
    t = 1.31
    rhs = lindblad_rhs(rho, ops, p, t)

    def mean(op, mat=rho):
        return np.trace(op @ mat).real

    q, pq = ops.q_op, ops.p_op
    assert np.trace(q @ rhs).real == pytest.approx(mean(pq), abs=1e-8)
    q3 = q @ q @ q
    want_dp = (
        -p.beta**2 * mean(q3)
        + mean(q)
        - 2 * p.gamma * mean(pq)
        + p.drive_amplitude * math.cos(p.omega * t)
    )
    assert np.trace(pq @ rhs).real == pytest.approx(want_dp, abs=1e-8)


def test_against_dense_liouvillian_exponential():
    # g = 0 makes the generator time-independent, so the full evolution is
    # expm(S t) acting on vec(rho): an independent oracle for the RK4 path
    p = SimParams(gamma=0.12, g=0.0, beta=1.0, basis_size=10)
    ops = build_operators(p)
    n = 10
    h = ops.h_static
    l_op = ops.l_op
    ldl = l_op.conj().T @ l_op
    eye = np.eye(n)
    s = (
        -1j * (np.kron(h, eye) - np.kron(eye, h.T))
        + np.kron(l_op, l_op.conj())
        - 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T))
    )
    rho0 = density_from_state(coherent_state(1.2 + 0.4j, n))
    t_end = 2.0
    vec_final = scipy.linalg.expm(s * t_end) @ rho0.elems.reshape(-1)
    want = vec_final.reshape(n, n)

    got = evolve_density(p, rho0, duration=t_end, dt=5e-4)
    assert np.max(np.abs(got.elems - want)) < 1e-8


def test_positivity_trace_and_hermiticity_along_evolution():
    p = SimParams(gamma=0.1, g=0.3, beta=0.3, basis_size=40)
    rho0 = density_from_state(coherent_state(1.0 - 0.5j, 40))
    snaps = evolve_density(p, rho0, duration=3.0, sample_times=np.array([1.0, 2.0, 3.0]))
    assert len(snaps) == 3
    for _, dm in snaps:
        dm.validate(tol=1e-7)


def test_step_halving_convergence():
    p = SimParams(gamma=0.1, g=0.3, beta=1.0, basis_size=20)
    rho0 = density_from_state(fock_state(2, 20))
    base = evolve_density(p, rho0, duration=1.0, dt=4e-3).elems
    half = evolve_density(p, rho0, duration=1.0, dt=2e-3).elems
    fine = evolve_density(p, rho0, duration=1.0, dt=1e-3).elems
    e1 = np.max(np.abs(base - fine))
    e2 = np.max(np.abs(half - fine))
    # fourth-order: error ratio ~ 16x per halving (reference shares the
    # asymptotic constant, so compare conservatively)
    assert e1 > 5.0 * e2
    assert e2 < 2e-6


def test_basis_guard():
    p = SimParams(beta=0.1, basis_size=120)
    rho0 = DensityMatrix(np.diag([1.0] + [0.0] * 119))
    with pytest.raises(ValueError):
        evolve_density(p, rho0, duration=0.1)


def test_trace_distance_basics():
    a = density_from_state(fock_state(0, 5))
    b = density_from_state(fock_state(1, 5))
    assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-14)
    assert trace_distance(a, b) == pytest.approx(1.0, abs=1e-12)
