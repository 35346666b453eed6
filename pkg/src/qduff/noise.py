"""Complex Wiener increments for diffusive unravelings of the damping channel.

A single monitored channel needs one complex noise increment dξ per step with

    E[dξ] = 0,      E[dξ dξ*] = dt,      E[dξ dξ] = u·dt,

where the correlation u = |u|·exp(-2iφ), |u| ≤ 1, selects the measurement:
|u| = 1 is homodyne detection at local-oscillator phase φ, |u| = 0 is the
phase-symmetric diffusion limit. Increments are built from two independent
real Wiener increments dW₁, dW₂ (each of variance dt) via

    dξ = e^{-iφ} ( √((1+|u|)/2)·dW₁ + i·√((1-|u|)/2)·dW₂ ),

which realizes the moments above exactly, not just asymptotically.

The same channel can be specified optically: splitting the output on a beam
splitter of transmission η toward two local oscillators at phases φ₁, φ₂
gives u* = η·e^{2iφ₁} + (1-η)·e^{2iφ₂} and the increment

    dξ = √η·e^{-iφ₁}·dW₁ + √(1-η)·e^{-iφ₂}·dW₂.

Every stochastic run in the package derives its Wiener stream from a
counter-based Philox generator keyed by (master_seed, trajectory index), so
results are reproducible independently of execution order or batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnravelingSpec",
    "NoisePath",
    "sample_increment",
    "sample_wiener",
    "increments_from_wiener",
    "unraveling_from_optics",
    "optics_noise_increment",
    "trajectory_rng",
    "make_noise_path",
]


@dataclass(frozen=True)
class UnravelingSpec:
    """Noise correlation u = u_abs·exp(-2i·phi) defining the measurement."""

    u_abs: float
    phi: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.u_abs <= 1.0:
            raise ValueError(f"u_abs must be in [0, 1], got {self.u_abs}")

    @property
    def u(self) -> complex:
        return self.u_abs * complex(math.cos(2.0 * self.phi), -math.sin(2.0 * self.phi))

    @property
    def weights(self) -> tuple[float, float]:
        """Quadrature mixing amplitudes (√((1+|u|)/2), √((1-|u|)/2))."""
        return (
            math.sqrt(0.5 * (1.0 + self.u_abs)),
            math.sqrt(0.5 * (1.0 - self.u_abs)),
        )


@dataclass
class NoisePath:
    """Materialized increment sequence for one trajectory.

    Attributes
    ----------
    dt : float
        Step size every increment corresponds to.
    increments : np.ndarray
        Complex dξ_k, shape (n,).
    wiener : np.ndarray
        The underlying real increments (dW₁, dW₂), shape (n, 2). Kept so the
        homodyne record and optics-form dumps can be reconstructed exactly.
    spec : UnravelingSpec
    seed_key : tuple
        Key the generating stream was derived from, for provenance.
    """

    dt: float
    increments: np.ndarray
    wiener: np.ndarray
    spec: UnravelingSpec
    seed_key: tuple = ()

    def __len__(self) -> int:
        return self.increments.shape[0]


def trajectory_rng(master_seed: int, trajectory_index: int = 0) -> np.random.Generator:
    """Counter-based generator for one trajectory, stable across call order."""
    ss = np.random.SeedSequence((int(master_seed), int(trajectory_index)))
    return np.random.Generator(np.random.Philox(ss))


def sample_wiener(n_steps: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """(n, 2) array of real Wiener increments, each N(0, dt)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return rng.standard_normal((n_steps, 2)) * math.sqrt(dt)


def increments_from_wiener(wiener: np.ndarray, spec: UnravelingSpec) -> np.ndarray:
    """Deterministic map from raw (dW₁, dW₂) to complex dξ for a given u."""
    c1, c2 = spec.weights
    rot = complex(math.cos(spec.phi), -math.sin(spec.phi))
    return rot * (c1 * wiener[..., 0] + 1j * c2 * wiener[..., 1])


def sample_increment(spec: UnravelingSpec, dt: float, rng: np.random.Generator) -> complex:
    """One dξ draw; bulk code should use sample_wiener + increments_from_wiener."""
    dw = sample_wiener(1, dt, rng)
    return complex(increments_from_wiener(dw, spec)[0])


def make_noise_path(
    spec: UnravelingSpec,
    dt: float,
    n_steps: int,
    master_seed: int,
    trajectory_index: int = 0,
) -> NoisePath:
    """Generate the full increment sequence for one trajectory.

    Regenerating with identical arguments is bit-identical: the stream is
    keyed by (master_seed, trajectory_index) alone and consumed in one block.
    """
    rng = trajectory_rng(master_seed, trajectory_index)
    wiener = sample_wiener(n_steps, dt, rng)
    return NoisePath(
        dt=dt,
        increments=increments_from_wiener(wiener, spec),
        wiener=wiener,
        spec=spec,
        seed_key=(master_seed, trajectory_index),
    )


def unraveling_from_optics(eta: float, phi1: float, phi2: float = 0.0) -> UnravelingSpec:
    """Translate a beam-splitter detection layout into an UnravelingSpec.

    Parameters
    ----------
    eta : float
        Transmission toward the first local oscillator, in [0, 1]. At
        eta = 1 the second oscillator is never illuminated and phi2 is
        irrelevant.
    phi1, phi2 : float
        Local-oscillator phases of the two output ports.

    Returns
    -------
    UnravelingSpec
        With u = eta·e^{-2i·phi1} + (1-eta)·e^{-2i·phi2}. The returned phase
        is canonicalized to [0, pi): u determines phi only mod pi, and the
        two representatives generate statistically identical increments.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    u = eta * np.exp(-2j * phi1) + (1.0 - eta) * np.exp(-2j * phi2)
    u_abs = float(abs(u))
    if u_abs < 1e-15:
        return UnravelingSpec(u_abs=0.0, phi=0.0)
    phi = (-0.5 * math.atan2(u.imag, u.real)) % math.pi
    return UnravelingSpec(u_abs=min(u_abs, 1.0), phi=phi)


def optics_noise_increment(
    eta: float,
    phi1: float,
    phi2: float,
    dt: float,
    rng: np.random.Generator,
) -> complex:
    """Draw dξ directly in the optics form (two ports, two real noises).

    Statistically equivalent to `sample_increment(unraveling_from_optics(...))`;
    kept separate so the two constructions can be cross-validated.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    dw = sample_wiener(1, dt, rng)[0]
    return complex(
        math.sqrt(eta) * np.exp(-1j * phi1) * dw[0]
        + math.sqrt(1.0 - eta) * np.exp(-1j * phi2) * dw[1]
    )
