"""Operator algebra and state-builder checks against hand-derived values."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qduff.fock import (
    SimParams,
    auto_basis_size,
    build_operators,
    cat_state,
    coherent_state,
    expectation,
    fock_state,
    hamiltonian_at,
    quadrature_means,
)


def small_params(**kw) -> SimParams:
    defaults = dict(gamma=0.10, g=0.3, omega=1.0, beta=1.0, basis_size=20)
    defaults.update(kw)
    return SimParams(**defaults)


# ---------------------------------------------------------------- parameters


def test_auto_basis_anchors():
    assert auto_basis_size(1.0) == 65
    assert auto_basis_size(0.3) == 67
    assert auto_basis_size(0.1) == 200


def test_params_validation():
    with pytest.raises(ValueError):
        SimParams(gamma=-0.1)
    with pytest.raises(ValueError):
        SimParams(omega=0.0)
    with pytest.raises(ValueError):
        SimParams(beta=0.0)
    with pytest.raises(ValueError):
        SimParams(beta=1.5)
    with pytest.raises(ValueError):
        SimParams(u_abs=1.2)
    with pytest.raises(ValueError):
        SimParams(basis_size=1)
    with pytest.raises(ValueError):
        SimParams(dt=0.0)
    # monitoring off is allowed for unitary reductions
    SimParams(gamma=0.0)


def test_params_derived_quantities():
    p = SimParams(omega=2.0, beta=0.5, phi=0.25, u_abs=0.5)
    assert p.period == pytest.approx(math.pi)
    assert p.step == pytest.approx(1e-4 * math.pi)
    assert p.n_levels == 65
    assert p.u == pytest.approx(0.5 * np.exp(-0.5j))
    assert p.drive_amplitude == pytest.approx(p.g / 0.5)


# ----------------------------------------------------------------- operators


def test_ladder_action_on_fock_states():
    ops = build_operators(small_params())
    for n in range(1, 6):
        e_n = fock_state(n, 20).amps
        lowered = ops.a_op @ e_n
        expect = math.sqrt(n) * fock_state(n - 1, 20).amps
        np.testing.assert_allclose(lowered, expect, atol=1e-14)
    # annihilation of the vacuum
    assert np.linalg.norm(ops.a_op @ fock_state(0, 20).amps) == 0.0


def test_commutator_truncation_pattern():
    # [Q, P] = i everywhere except the bottom-right corner, where the
    # truncated ladder product leaves i(1 - N)
    n = 20
    ops = build_operators(small_params(basis_size=n))
    comm = ops.q_op @ ops.p_op - ops.p_op @ ops.q_op
    dev = comm - 1j * np.eye(n)
    corner = dev[n - 1, n - 1]
    assert corner == pytest.approx(-1j * n, abs=1e-12)
    dev[n - 1, n - 1] = 0.0
    assert np.max(np.abs(dev)) < 1e-12


def test_monitoring_operator_is_scaled_ladder():
    p = small_params(gamma=0.25)
    ops = build_operators(p)
    np.testing.assert_allclose(ops.l_op, math.sqrt(0.5) * ops.a_op, atol=1e-15)
    # L†L reduces to 2Γ·n̂ exactly
    ldl = ops.l_op.conj().T @ ops.l_op
    np.testing.assert_allclose(ldl, 2 * 0.25 * ops.number_op, atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(
    n=st.integers(min_value=2, max_value=60),
    t=st.floats(min_value=-50.0, max_value=50.0, allow_nan=False),
)
def test_hamiltonian_hermitian_for_all_sizes_and_times(n, t):
    p = small_params(basis_size=n)
    ops = build_operators(p)
    h = hamiltonian_at(ops, p, t)
    assert np.max(np.abs(h - h.conj().T)) < 1e-12


def test_hamiltonian_drive_phase():
    p = small_params()
    ops = build_operators(p)
    # cos(Ω·T/4) = 0: the drive term drops out a quarter period in
    np.testing.assert_allclose(
        hamiltonian_at(ops, p, p.period / 4.0), ops.h_static, atol=1e-12
    )
    np.testing.assert_allclose(
        hamiltonian_at(ops, p, 0.0), ops.h_static + ops.h_drive, atol=1e-14
    )
    np.testing.assert_allclose(
        hamiltonian_at(ops, p, p.period), hamiltonian_at(ops, p, 0.0), atol=1e-12
    )


def test_static_hamiltonian_matrix_elements():
    # vacuum expectation assembled by hand:
    #   <0|P²/2|0> = 1/4,  <0|Q⁴|0> = 3/4,  <0|Q²|0> = 1/2,  <0|QP+PQ|0> = 0
    p = small_params(gamma=0.1, beta=0.5)
    ops = build_operators(p)
    e0 = fock_state(0, p.n_levels)
    want = 0.25 + 0.25 * p.beta**2 * 0.75 - 0.25
    assert expectation(e0, ops.h_static) == pytest.approx(want, abs=1e-12)


# -------------------------------------------------------------------- states


def test_coherent_state_moments():
    alpha = 1.2 - 0.7j
    p = small_params(basis_size=35)
    ops = build_operators(p)
    st_ = coherent_state(alpha, 35)
    assert st_.norm == pytest.approx(1.0, abs=1e-12)
    assert expectation(st_, ops.number_op) == pytest.approx(abs(alpha) ** 2, rel=1e-8)
    q, pm = quadrature_means(st_.amps)
    assert q == pytest.approx(math.sqrt(2) * alpha.real, abs=1e-8)
    assert pm == pytest.approx(math.sqrt(2) * alpha.imag, abs=1e-8)
    # photon-number variance equals the mean (Poisson)
    n2 = expectation(st_, ops.number_op @ ops.number_op)
    assert n2 - abs(alpha) ** 4 == pytest.approx(abs(alpha) ** 2, rel=1e-6)


def test_coherent_state_is_ladder_eigenstate():
    alpha = 0.8 + 0.3j
    ops = build_operators(small_params(basis_size=30))
    st_ = coherent_state(alpha, 30)
    resid = ops.a_op @ st_.amps - alpha * st_.amps
    # only the top level carries truncation error
    assert np.linalg.norm(resid[:-1]) < 1e-10


def test_coherent_tail_guard():
    with pytest.raises(ValueError):
        coherent_state(3.0, 20)  # needs 9 + 15 = 24 levels
    coherent_state(3.0, 25)


def test_cat_state_structure():
    alpha = 2.0
    n = 30
    cat = cat_state(alpha, n)
    assert cat.norm == pytest.approx(1.0, abs=1e-12)
    # even cat: odd Fock amplitudes vanish
    assert np.max(np.abs(cat.amps[1::2])) < 1e-14
    q, pm = quadrature_means(cat.amps)
    assert abs(q) < 1e-10 and abs(pm) < 1e-10
    # overlap bookkeeping: <cat|alpha> = (1 + e^{-2|alpha|^2}) / norm
    plus = coherent_state(alpha, n)
    want = (1 + math.exp(-2 * alpha**2)) / math.sqrt(2 * (1 + math.exp(-2 * alpha**2)))
    assert abs(np.vdot(cat.amps, plus.amps)) == pytest.approx(want, rel=1e-9)


def test_expectation_rejects_nonhermitian_result():
    ops = build_operators(small_params())
    st_ = coherent_state(1.0 + 0.6j, 20)
    with pytest.raises(ValueError):
        expectation(st_, ops.a_op)  # non-Hermitian operator, complex mean
