"""Truncated-oscillator representation of the monitored Duffing model.

Everything downstream works in dimensionless quadratures with [Q, P] = i and
vacuum variance 1/2, so Q = (a + a†)/√2 and P = -i(a - a†)/√2 for the usual
ladder operators. The system is a driven double well with linear friction,

    H(t) = P²/2 + (β²/4) Q⁴ - Q²/2 + (Γ/2)(QP + PQ) - (g/β) Q cos(Ωt),

monitored through the zero-temperature damping channel L = √(2Γ) a. The
(Γ/2)(QP+PQ) counterterm combines with the dissipator so that ⟨Q⟩ obeys the
classical equation  q̈ + 2Γ q̇ + β² q³ - q = (g/β) cos(Ωt)  in the mean-field
limit; β sets the effective quantum scale (β → 0 is the classical limit, at
the price of a larger basis).

All operators are dense complex matrices on the first `basis_size` Fock
levels. Truncation is exact for the bidiagonal ladder structure and shows up
only in the last rows/columns of products such as [Q, P].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "SimParams",
    "StateVector",
    "DensityMatrix",
    "OperatorSet",
    "auto_basis_size",
    "build_operators",
    "hamiltonian_at",
    "coherent_state",
    "cat_state",
    "fock_state",
    "expectation",
    "quadrature_means",
]

#: fraction of a drive period used as the default stochastic time step
DT_PERIOD_FRACTION = 1.0e-4

#: top-of-basis levels inspected by the truncation guard
TAIL_LEVELS = 5


def auto_basis_size(beta: float) -> int:
    """Default Fock-space size for a given quantumness parameter.

    Grows like 1/β so the double-well attractor (extent ~ a few 1/β in Q)
    stays inside the basis: 65 at β=1 up to 200 at β=0.1. The floor of 65
    is what monitored trajectories launched on the attractor need to keep
    the top-of-basis population under the truncation guard; historically
    smaller bases (down to 35) work for states near the origin and can be
    requested explicitly.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return max(65, math.ceil(20.0 / beta))


@dataclass(frozen=True)
class SimParams:
    """Model and integration parameters shared by every simulation layer.

    Parameters
    ----------
    gamma : float
        Friction/monitoring rate Γ ≥ 0. Γ = 0 turns monitoring off (useful
        for unitary checks only).
    g : float
        Drive strength in the classical equation; the Hamiltonian drive
        amplitude is g/β.
    omega : float
        Drive angular frequency Ω > 0.
    beta : float
        Quantumness scale, 0 < β ≤ 1.
    u_abs, phi : float
        Unraveling choice: the complex noise correlation is
        u = u_abs·exp(-2iφ), u_abs ∈ [0, 1]. u_abs = 1 is homodyne detection
        at local-oscillator phase φ, u_abs = 0 is phase-insensitive
        (heterodyne-like) diffusion.
    basis_size : int, optional
        Fock levels kept; defaults to `auto_basis_size(beta)`.
    dt : float, optional
        Stochastic step; defaults to 1e-4 drive periods.
    seed : int
        Master seed from which trajectory streams are derived.
    """

    gamma: float = 0.10
    g: float = 0.3
    omega: float = 1.0
    beta: float = 0.3
    u_abs: float = 1.0
    phi: float = math.pi
    basis_size: int | None = None
    dt: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.g < 0:
            raise ValueError(f"g must be >= 0, got {self.g}")
        if self.omega <= 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not 0 <= self.u_abs <= 1:
            raise ValueError(f"u_abs must be in [0, 1], got {self.u_abs}")
        if self.basis_size is not None and self.basis_size < 2:
            raise ValueError(f"basis_size must be >= 2, got {self.basis_size}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    @property
    def n_levels(self) -> int:
        return self.basis_size if self.basis_size is not None else auto_basis_size(self.beta)

    @property
    def step(self) -> float:
        return self.dt if self.dt is not None else DT_PERIOD_FRACTION * self.period

    @property
    def u(self) -> complex:
        return self.u_abs * complex(math.cos(2.0 * self.phi), -math.sin(2.0 * self.phi))

    @property
    def drive_amplitude(self) -> float:
        return self.g / self.beta

    def with_(self, **changes) -> "SimParams":
        return replace(self, **changes)


@dataclass
class StateVector:
    """Pure state as Fock amplitudes c_n, kept unit-norm by construction."""

    amps: np.ndarray

    def __post_init__(self) -> None:
        self.amps = np.asarray(self.amps, dtype=np.complex128)
        if self.amps.ndim != 1:
            raise ValueError("StateVector amplitudes must be one-dimensional")

    @property
    def n_levels(self) -> int:
        return self.amps.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "StateVector":
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.amps / n)

    def tail_population(self, levels: int = TAIL_LEVELS) -> float:
        """Population in the top `levels` basis states (truncation health)."""
        k = min(levels, self.n_levels)
        return float(np.sum(np.abs(self.amps[-k:]) ** 2))

    def copy(self) -> "StateVector":
        return StateVector(self.amps.copy())


@dataclass
class DensityMatrix:
    """Mixed state in the same truncated basis; validation is explicit."""

    elems: np.ndarray

    def __post_init__(self) -> None:
        self.elems = np.asarray(self.elems, dtype=np.complex128)
        if self.elems.ndim != 2 or self.elems.shape[0] != self.elems.shape[1]:
            raise ValueError("DensityMatrix must be square")

    @property
    def n_levels(self) -> int:
        return self.elems.shape[0]

    def trace_error(self) -> float:
        return abs(float(np.trace(self.elems).real) - 1.0) + abs(float(np.trace(self.elems).imag))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.elems - self.elems.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.elems + self.elems.conj().T)).min())

    def validate(self, tol: float = 1e-8) -> None:
        if self.trace_error() > tol:
            raise ValueError(f"trace deviates from 1 by {self.trace_error():.3e}")
        if self.hermiticity_error() > tol:
            raise ValueError(f"not Hermitian within {tol:.1e}")
        if self.min_eigenvalue() < -tol:
            raise ValueError(f"negative eigenvalue {self.min_eigenvalue():.3e}")


@dataclass(frozen=True)
class OperatorSet:
    """Dense operator matrices for one (basis_size, params) combination.

    `cache` holds lazily built integrator artifacts (eigendecomposition of
    h_static, per-dt propagators); it never participates in equality.
    """

    n_levels: int
    a_op: np.ndarray
    q_op: np.ndarray
    p_op: np.ndarray
    l_op: np.ndarray
    number_op: np.ndarray
    h_static: np.ndarray
    h_drive: np.ndarray
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def ladder_weights(self) -> np.ndarray:
        """√(n+1) factors so that (a ψ)_n = w_n ψ_{n+1} without a matmul."""
        return np.sqrt(np.arange(1, self.n_levels, dtype=np.float64))


def build_operators(params: SimParams) -> OperatorSet:
    """Construct ladder, quadrature, monitoring, and Hamiltonian matrices.

    Returns
    -------
    OperatorSet
        All matrices are complex128, shape (N, N) with N = params.n_levels.
        h_static is exactly Hermitian (symmetrized after assembly);
        h_drive = -(g/β)·Q multiplies cos(Ωt) in `hamiltonian_at`.
    """
    n = params.n_levels
    w = np.sqrt(np.arange(1, n, dtype=np.float64))
    a = np.zeros((n, n), dtype=np.complex128)
    a[np.arange(n - 1), np.arange(1, n)] = w

    adag = a.conj().T
    q = (a + adag) / math.sqrt(2.0)
    p = -1j * (a - adag) / math.sqrt(2.0)
    l_op = math.sqrt(2.0 * params.gamma) * a
    number = np.diag(np.arange(n, dtype=np.float64)).astype(np.complex128)

    q2 = q @ q
    q4 = q2 @ q2
    h = (
        0.5 * (p @ p)
        + 0.25 * params.beta**2 * q4
        - 0.5 * q2
        + 0.5 * params.gamma * (q @ p + p @ q)
    )
    h = 0.5 * (h + h.conj().T)  # kill rounding-level asymmetry
    h_drive = -(params.drive_amplitude) * q

    return OperatorSet(
        n_levels=n,
        a_op=a,
        q_op=q,
        p_op=p,
        l_op=l_op,
        number_op=number,
        h_static=h,
        h_drive=h_drive,
    )


def hamiltonian_at(ops: OperatorSet, params: SimParams, t: float) -> np.ndarray:
    """Full Hamiltonian matrix H(t) = h_static + cos(Ωt)·h_drive."""
    return ops.h_static + math.cos(params.omega * t) * ops.h_drive


def _check_coherent_fits(alpha: complex, n: int) -> None:
    # mean + 5 sigma of the Poisson photon distribution must sit inside the basis
    need = abs(alpha) ** 2 + 5.0 * abs(alpha)
    if need >= n:
        raise ValueError(
            f"coherent amplitude |alpha|={abs(alpha):.3f} needs more than "
            f"{n} levels (|alpha|^2 + 5|alpha| = {need:.1f})"
        )


def coherent_state(alpha: complex, n_levels: int) -> StateVector:
    """Truncated coherent state |α⟩ with ⟨Q⟩ = √2·Re α, ⟨P⟩ = √2·Im α.

    Raises ValueError unless |α|² + 5|α| < n_levels so the truncated tail
    mass is negligible; the result is re-normalized to exactly unit norm.
    """
    _check_coherent_fits(alpha, n_levels)
    amps = np.zeros(n_levels, dtype=np.complex128)
    amps[0] = 1.0
    for k in range(1, n_levels):
        amps[k] = amps[k - 1] * alpha / math.sqrt(k)
    amps *= math.exp(-0.5 * abs(alpha) ** 2)
    return StateVector(amps).normalized()


def cat_state(alpha: complex, n_levels: int) -> StateVector:
    """Even superposition (|α⟩ + |-α⟩)/norm, interference fringes at the origin."""
    _check_coherent_fits(alpha, n_levels)
    plus = coherent_state(alpha, n_levels)
    minus = coherent_state(-alpha, n_levels)
    return StateVector(plus.amps + minus.amps).normalized()


def fock_state(n: int, n_levels: int) -> StateVector:
    if not 0 <= n < n_levels:
        raise ValueError(f"level {n} outside basis of size {n_levels}")
    amps = np.zeros(n_levels, dtype=np.complex128)
    amps[n] = 1.0
    return StateVector(amps)


def expectation(state: StateVector, operator: np.ndarray, imag_tol: float = 1e-9) -> float:
    """⟨ψ|A|ψ⟩ for Hermitian A; raises if the imaginary residue is large."""
    val = complex(np.vdot(state.amps, operator @ state.amps))
    if abs(val.imag) > imag_tol * max(1.0, abs(val.real)):
        raise ValueError(f"operator expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def quadrature_means(amps: np.ndarray) -> tuple[float, float]:
    """(⟨Q⟩, ⟨P⟩) from amplitudes using the bidiagonal ladder structure."""
    w = np.sqrt(np.arange(1, amps.shape[0], dtype=np.float64))
    a_mean = complex(np.sum(np.conj(amps[:-1]) * w * amps[1:]))
    return math.sqrt(2.0) * a_mean.real, math.sqrt(2.0) * a_mean.imag


def quadrature_moments(amps: np.ndarray) -> tuple[float, float, float, float, float]:
    """Means and symmetrized central second moments (q, p, vqq, vpp, vqp).

    The top Fock level contributes to Q|psi> and P|psi> only through the
    truncated level above it, so tailed states carry a small bias.
    """
    n = amps.shape[0]
    w = np.sqrt(np.arange(1, n, dtype=np.float64))
    lower = w * amps[1:]          # a|psi> support on 0..n-2
    raise_ = w * amps[:-1]        # a^dag|psi> support on 1..n-1
    q_psi = np.zeros(n, dtype=np.complex128)
    p_psi = np.zeros(n, dtype=np.complex128)
    q_psi[:-1] = lower
    q_psi[1:] += raise_
    q_psi /= math.sqrt(2.0)
    p_psi[:-1] = lower
    p_psi[1:] -= raise_
    p_psi *= -1j / math.sqrt(2.0)
    q = float(np.vdot(amps, q_psi).real)
    p = float(np.vdot(amps, p_psi).real)
    vqq = float(np.vdot(q_psi, q_psi).real) - q * q
    vpp = float(np.vdot(p_psi, p_psi).real) - p * p
    vqp = float(np.vdot(q_psi, p_psi).real) - q * p
    return q, p, vqq, vpp, vqp
