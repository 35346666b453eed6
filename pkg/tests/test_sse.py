"""Trajectory integrator tests.

The strongest oracles here are analytic: under pure monitored damping a
coherent state is an eigenstate of the jump operator, so the stochastic
term vanishes identically and the state must follow |α e^{-Γt}⟩
deterministically for EVERY noise path; and with Γ = g = 0 the split step
reduces to the exact static propagator.
"""

import math

import numpy as np
import pytest

from qduff.fock import (
    DensityMatrix,
    SimParams,
    StateVector,
    build_operators,
    coherent_state,
    fock_state,
)
from qduff.lindblad import evolve_density, trace_distance
from qduff.noise import (
    NoisePath,
    UnravelingSpec,
    increments_from_wiener,
    make_noise_path,
    sample_wiener,
    trajectory_rng,
)
from qduff.sse import (
    BasisOverflowError,
    QuantumTwinPair,
    displacement_matrix,
    ensemble_density,
    evolve_ensemble,
    evolve_trajectory,
    poincare_section,
    sse_step,
)


def test_reduces_to_exact_unitary_when_closed():
    # gamma=0, g=0: every stochastic and dissipative coefficient is zero and
    # the step is exactly expm(-i h_static dt); k steps must equal the exact
    # propagator at k*dt to rounding.
    p = SimParams(gamma=0.0, g=0.0, beta=1.0, u_abs=1.0, phi=0.3,
                  basis_size=65, seed=5)
    psi0 = coherent_state(0.9 + 0.2j, 65)
    rec = evolve_trajectory(p, psi0, 2.0, snapshot_times=[2.0])
    _, snap = rec.snapshots[-1]

    ops = build_operators(p)
    evals, evecs = np.linalg.eigh(ops.h_static)
    n_steps = round(2.0 / p.step)
    exact = evecs @ (np.exp(-1j * evals * n_steps * p.step) * (evecs.conj().T @ psi0.amps))
    assert np.max(np.abs(snap.amps - exact)) < 1e-10


def test_vacuum_is_dark_under_pure_monitoring():
    p = SimParams(gamma=0.2, g=0.3, beta=1.0, u_abs=1.0, phi=1.1,
                  basis_size=20, seed=9)
    rec = evolve_trajectory(p, fock_state(0, 20), 3.0, monitoring_only=True,
                            snapshot_times=[3.0])
    _, snap = rec.snapshots[-1]
    expect = np.zeros(20, dtype=complex)
    expect[0] = 1.0
    assert np.max(np.abs(snap.amps - expect)) < 1e-12


@pytest.mark.parametrize("phi,u_abs", [(0.7, 1.0), (2.0, 0.4), (0.0, 0.0)])
def test_monitored_coherent_state_decays_deterministically(phi, u_abs):
    # a|alpha> = alpha|alpha>: the noise term cancels exactly, for any
    # unraveling, and <Q>,<P> decay at rate gamma.
    p = SimParams(gamma=0.1, beta=1.0, u_abs=u_abs, phi=phi, basis_size=35, seed=3)
    alpha0 = 1.0 + 0.5j
    rec = evolve_trajectory(p, coherent_state(alpha0, 35), 5.0,
                            monitoring_only=True, snapshot_times=[5.0])
    a_t = alpha0 * math.exp(-0.1 * 5.0)
    assert abs(rec.q_mean[-1] - math.sqrt(2) * a_t.real) < 2e-4
    assert abs(rec.p_mean[-1] - math.sqrt(2) * a_t.imag) < 2e-4
    _, snap = rec.snapshots[-1]
    fid = abs(np.vdot(coherent_state(a_t, 35).amps, snap.amps))
    assert 1.0 - fid < 1e-8


def test_homodyne_record_matches_closed_form():
    # on the deterministic coherent solution the record must equal
    # 2*sqrt(2*gamma)*Re(e^{-i phi} alpha(t)) plus the known dW1 increments,
    # window-averaged.
    phi = 0.7
    p = SimParams(gamma=0.1, beta=1.0, u_abs=1.0, phi=phi, basis_size=35, seed=3)
    alpha0 = 1.0 + 0.5j
    n_steps = round(5.0 / p.step)
    path = make_noise_path(UnravelingSpec(1.0, phi), p.step, n_steps, 3, 0)
    rec = evolve_trajectory(p, coherent_state(alpha0, 35), 5.0, noise=path,
                            monitoring_only=True)
    assert rec.signal is not None

    stride = max(1, round((p.period / 16) / p.step))
    rot = np.exp(-1j * phi)
    k = 0
    worst = 0.0
    for i in range(1, len(rec.times)):
        block = min(stride, n_steps - k)
        ks = np.arange(k, k + block)
        alpha = alpha0 * np.exp(-p.gamma * ks * p.step)
        det = 2 * math.sqrt(2 * p.gamma) * np.real(rot * alpha) * p.step
        noise_part = np.real(np.conj(rot) * path.increments[k:k + block])
        predicted = (det.sum() + noise_part.sum()) / (block * p.step)
        worst = max(worst, abs(predicted - rec.signal[i]))
        k += block
    assert worst < 1e-4


def test_isotropic_unraveling_has_no_signal():
    p = SimParams(gamma=0.1, g=0.3, beta=1.0, u_abs=0.0, phi=0.0,
                  basis_size=35, seed=1)
    rec = evolve_trajectory(p, fock_state(0, 35), 1.0)
    assert rec.signal is None


def _run_at_resolution(dt_divisor, seed=11):
    # shared Brownian path, coarsened by pairwise summation
    base = SimParams(gamma=0.1, g=0.3, beta=1.0, u_abs=1.0, phi=math.pi / 2,
                     basis_size=35, seed=seed)
    base_dt = base.step
    n0 = round(2 * base.period / base_dt)
    rng = trajectory_rng(seed, 0)
    w_fine = sample_wiener(n0 * 4, base_dt / 4, rng)
    fac = 4 // dt_divisor
    w = w_fine.reshape(n0 * dt_divisor, fac, 2).sum(axis=1)
    spec = UnravelingSpec(1.0, math.pi / 2)
    path = NoisePath(dt=base_dt / dt_divisor,
                     increments=increments_from_wiener(w, spec),
                     wiener=w, spec=spec, seed_key=(seed, 0))
    p = SimParams(gamma=0.1, g=0.3, beta=1.0, u_abs=1.0, phi=math.pi / 2,
                  basis_size=35, seed=seed, dt=base_dt / dt_divisor)
    return evolve_trajectory(p, coherent_state(0.5, 35), 2 * base.period,
                             noise=path, sample_interval=base.period / 8)


def test_step_refinement_converges_on_shared_path():
    r1 = _run_at_resolution(1)
    r2 = _run_at_resolution(2)
    r4 = _run_at_resolution(4)
    e1 = max(np.max(np.abs(r1.q_mean - r2.q_mean)),
             np.max(np.abs(r1.p_mean - r2.p_mean)))
    e2 = max(np.max(np.abs(r2.q_mean - r4.q_mean)),
             np.max(np.abs(r2.p_mean - r4.p_mean)))
    # multiplicative noise: strong order 1/2, so successive gaps shrink ~sqrt(2)
    assert e1 < 5e-3
    assert e2 < e1
    assert np.max(r1.norm_drift) < 1e-3


def test_truncation_guard_aborts_runaway():
    p = SimParams(gamma=0.0, g=2.0, beta=1.0, u_abs=1.0, phi=0.0,
                  basis_size=12, seed=0)
    with pytest.raises(BasisOverflowError):
        evolve_trajectory(p, coherent_state(0.8, 12), 2 * p.period)


def test_noise_path_validation():
    p = SimParams(gamma=0.1, beta=1.0, basis_size=20, seed=0)
    short = make_noise_path(UnravelingSpec(1.0, math.pi), p.step, 10, 0, 0)
    with pytest.raises(ValueError):
        evolve_trajectory(p, fock_state(0, 20), 1.0, noise=short)
    wrong_dt = make_noise_path(UnravelingSpec(1.0, math.pi), p.step * 2,
                               100000, 0, 0)
    with pytest.raises(ValueError):
        evolve_trajectory(p, fock_state(0, 20), 1.0, noise=wrong_dt)
    with pytest.raises(ValueError):
        evolve_trajectory(p, fock_state(0, 21), 1.0)


def test_same_path_reproduces_record():
    p = SimParams(gamma=0.1, g=0.3, beta=1.0, u_abs=1.0, phi=math.pi,
                  basis_size=35, seed=42)
    a = evolve_trajectory(p, fock_state(0, 35), 2.0)
    b = evolve_trajectory(p, fock_state(0, 35), 2.0)
    assert np.array_equal(a.q_mean, b.q_mean)
    assert np.array_equal(a.signal, b.signal)
    c = evolve_trajectory(p, fock_state(0, 35), 2.0, trajectory_index=1)
    assert not np.allclose(a.q_mean[1:], c.q_mean[1:])


def test_ensemble_columns_match_single_runs():
    p = SimParams(gamma=0.1, g=0.3, beta=1.0, u_abs=1.0, phi=math.pi,
                  basis_size=35, seed=7)
    psi0 = fock_state(0, 35)
    batch, snaps = evolve_ensemble(p, psi0, 2.0, 3, master_seed=7,
                                   snapshot_times=[1.0, 2.0])
    assert len(snaps) == 2
    for (t_snap, _), t_want in zip(snaps, [1.0, 2.0]):
        assert abs(t_snap - t_want) <= 0.5 * p.step + 1e-12
    for j in range(3):
        rec = evolve_trajectory(p, psi0, 2.0, trajectory_index=j,
                                snapshot_times=[2.0])
        _, snap = rec.snapshots[-1]
        assert np.max(np.abs(batch[:, j] - snap.amps)) < 1e-12


def test_ensemble_mean_matches_master_equation():
    # the defining property of an unraveling, at reduced scale
    p = SimParams(gamma=0.1, g=0.3, beta=1.0, u_abs=1.0, phi=math.pi,
                  basis_size=35, seed=7)
    psi0 = fock_state(0, 35)
    batch, _ = evolve_ensemble(p, psi0, 2.0, 150, master_seed=7)
    rho_tr = DensityMatrix(ensemble_density(batch))
    rho_tr.validate(tol=1e-8)
    ops = build_operators(p)
    rho_me = evolve_density(
        p, DensityMatrix(np.outer(psi0.amps, psi0.amps.conj())), 2.0, ops=ops)
    assert trace_distance(rho_tr, rho_me) < 0.03


def test_single_step_wrapper_consistency():
    p = SimParams(gamma=0.1, g=0.3, beta=1.0, u_abs=1.0, phi=0.5,
                  basis_size=20, seed=0)
    ops = build_operators(p)
    psi = coherent_state(0.4, 20)
    out = sse_step(psi, ops, p, 0.0, 0.01 + 0.02j)
    assert abs(out.norm - 1.0) < 1e-12
    again = sse_step(psi, ops, p, 0.0, 0.01 + 0.02j)
    assert np.array_equal(out.amps, again.amps)


def test_poincare_section_picks_period_multiples():
    times = np.linspace(0.0, 40.0, 801)  # spacing 0.05
    rec_q = np.cos(times)
    rec_p = np.sin(times)
    from qduff.sse import TrajectoryRecord

    rec = TrajectoryRecord(times=times, q_mean=rec_q, p_mean=rec_p,
                           norm_drift=np.zeros_like(times))
    period = 2 * math.pi
    pts = poincare_section(rec, period, transient_periods=2)
    assert len(pts) == 5  # k = 2..6 within t <= 40
    assert np.max(np.abs(pts[:, 0] - 1.0)) < 1e-3  # cos at multiples of 2 pi


def test_displacement_matrix_is_exact_shift():
    n = 35
    d = displacement_matrix(n, 0.3, -0.2)
    assert np.max(np.abs(d @ d.conj().T - np.eye(n))) < 1e-12
    psi = coherent_state(0.5 + 0.1j, n)
    shifted = StateVector(d @ psi.amps)
    from qduff.fock import quadrature_means

    q0, p0 = quadrature_means(psi.amps)
    q1, p1 = quadrature_means(shifted.amps)
    assert abs((q1 - q0) - 0.3) < 1e-10
    assert abs((p1 - p0) + 0.2) < 1e-10
    # displacing vacuum prepares the matching coherent state
    vac = fock_state(0, n)
    target = coherent_state((0.3 - 0.2j) / math.sqrt(2), n)
    assert np.max(np.abs(d @ vac.amps - target.amps)) < 1e-10


class TestQuantumTwinPair:
    def _pair(self):
        p = SimParams(gamma=0.1, g=0.3, beta=1.0, u_abs=1.0, phi=math.pi,
                      basis_size=35, seed=13)
        return p, QuantumTwinPair(p, coherent_state(0.4, 35))

    def test_separate_offsets_position(self):
        _, pair = self._pair()
        assert pair.uses_noise
        pair.separate(1e-3)
        dq, dp = pair.separation()
        assert abs(dq - 1e-3) < 1e-9
        assert abs(dp) < 1e-9

    def test_shared_noise_advance_and_pull_back(self):
        p, pair = self._pair()
        pair.separate(1e-3)
        path = make_noise_path(UnravelingSpec(1.0, math.pi), p.step, 400, 13, 0)
        pair.advance_block(0.0, 400, path.increments[:400])
        dq, dp = pair.separation()
        d = math.hypot(dq, dp)
        assert 0.0 < d < 0.1
        pair.pull_back(1e-3 / d)
        dq2, dp2 = pair.separation()
        assert abs(math.hypot(dq2, dp2) - 1e-3) < 1e-8
        # direction preserved
        assert abs(dq2 * dp - dp2 * dq) < 1e-8 * d

    def test_zero_noise_identical_columns_stay_identical(self):
        p = SimParams(gamma=0.1, g=0.3, beta=1.0, u_abs=1.0, phi=0.0,
                      basis_size=35, seed=0)
        pair = QuantumTwinPair(p, coherent_state(0.4, 35))
        pair.advance_block(0.0, 200, np.zeros(200, dtype=complex))
        dq, dp = pair.separation()
        assert abs(dq) < 1e-13 and abs(dp) < 1e-13
