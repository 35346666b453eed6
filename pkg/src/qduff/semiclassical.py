"""Gaussian (second-cumulant) approximation of the monitored oscillator.

Closing the conditioned moment hierarchy at second cumulants gives an Ito
system for (q, p, vqq, vpp, vqp). Means feel the classical force evaluated
on closed moments plus measurement back action proportional to the
covariances; the covariance flow is deterministic because every stochastic
term carries a third central moment, which the closure sets to zero:

    dq   = p dt + 2 sqrt(G) (Aq re - Bq im)
    dp   = [-b^2 (q^3 + 3 q vqq) + q - 2 G p + (g/b) cos(W t)] dt
           + 2 sqrt(G) (Ap re - Bp im)
    dvqq = [2 vqp + G - 4 G (Aq^2 Rrr - 2 Aq Bq Rri + Bq^2 Rii)] dt
    dvpp = [(2 - 6 b^2 (q^2+vqq)) vqp - 4 G vpp + G
           - 4 G (Ap^2 Rrr - 2 Ap Bp Rri + Bp^2 Rii)] dt
    dvqp = [vpp + vqq - 3 b^2 vqq (q^2+vqq) - 2 G vqp
           - 4 G (Aq Ap Rrr - (Aq Bp + Ap Bq) Rri + Bq Bp Rii)] dt

with Aq = vqq - 1/2, Bq = vqp, Ap = vqp, Bp = vpp - 1/2, (re, im) the real
and imaginary parts of the noise increment, and Rrr = (1+Re u)/2,
Rii = (1-Re u)/2, Rri = Im(u)/2 its quadratic variations.

The exact conditioned Gaussian flow preserves purity, det V = 1/4, for
every unraveling (the state vector stays pure along a single record).
Integrating (vqq, vpp, vqp) directly is numerically knife-edged during
saddle crossings, where the squeezed covariance legitimately stretches to
v ~ 1e3 and purity hides in a cancellation of huge products. The stepper
therefore uses the global chart of the pure manifold

    u1 = vqq - vpp,   u2 = 2 vqp,   vqq + vpp = sqrt(1 + u1^2 + u2^2)

in which det V = 1/4 and positivity hold identically for every (u1, u2),
the trace is recovered from a sum of squares (no cancellation), and the
step rates stay of order the covariance flow itself. Irreducibly failing
steps abort instead of being papered over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import SimParams
from .noise import UnravelingSpec, increments_from_wiener, make_noise_path, sample_wiener

__all__ = [
    "GaussianState",
    "CovarianceError",
    "gaussian_moment_rhs",
    "gaussian_step",
    "evolve_gaussian",
    "GaussianTwinPair",
    "semiclassical_process",
    "ResidenceSummary",
    "regime_residence",
    "DET_TARGET",
]

#: purity value of det V for a pure Gaussian state
DET_TARGET = 0.25

#: per-step chart motion accepted on the fast path, relative to the trace;
#: larger moves redo the step with substeps
CHART_SOFT = 0.2

#: substep counts tried before giving up on a stiff step
SUBSTEP_LADDER = (16, 256)


class CovarianceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussianState:
    """Mean vector and symmetrized second central moments at time t."""

    q: float
    p: float
    vqq: float = 0.5
    vpp: float = 0.5
    vqp: float = 0.0
    t: float = 0.0

    @property
    def det(self) -> float:
        return self.vqq * self.vpp - self.vqp**2

    def validate(self, tol: float = 1e-6) -> None:
        vals = (self.q, self.p, self.vqq, self.vpp, self.vqp)
        if not all(math.isfinite(v) for v in vals):
            raise CovarianceError(f"non-finite state {vals}")
        if self.vqq <= 0 or self.vpp <= 0 or self.det < 0:
            raise CovarianceError(
                f"covariance not positive: vqq={self.vqq:.3e} vpp={self.vpp:.3e} "
                f"det={self.det:.3e}")
        if self.det < DET_TARGET - tol:
            raise CovarianceError(f"Heisenberg floor violated: det={self.det:.6f}")


def _noise_quadratics(params: SimParams) -> tuple[float, float, float]:
    u = params.u
    return (1.0 + u.real) / 2.0, (1.0 - u.real) / 2.0, u.imag / 2.0


def gaussian_moment_rhs(state: GaussianState, params: SimParams, t: float,
                        dxi: complex) -> GaussianState:
    """One Ito increment (dt = params.step) as a GaussianState of deltas.

    Accepts any covariance values, including the zero-variance test limit
    where the mean equations must collapse onto the classical vector field;
    invariant enforcement belongs to `gaussian_step`.
    """
    dt = params.step
    gamma = params.gamma
    beta2 = params.beta**2
    rrr, rii, rri = _noise_quadratics(params)
    root_g = math.sqrt(gamma)

    aq = state.vqq - 0.5
    bq = state.vqp
    ap = state.vqp
    bp = state.vpp - 0.5
    re, im = dxi.real, dxi.imag

    q2v = state.q * state.q + state.vqq
    dq = state.p * dt + 2.0 * root_g * (aq * re - bq * im)
    dp = (
        -beta2 * state.q * (state.q * state.q + 3.0 * state.vqq)
        + state.q
        - 2.0 * gamma * state.p
        + params.drive_amplitude * math.cos(params.omega * t)
    ) * dt + 2.0 * root_g * (ap * re - bp * im)
    dvqq = (
        2.0 * state.vqp + gamma
        - 4.0 * gamma * (aq * aq * rrr - 2.0 * aq * bq * rri + bq * bq * rii)
    ) * dt
    dvpp = (
        (2.0 - 6.0 * beta2 * q2v) * state.vqp
        - 4.0 * gamma * state.vpp + gamma
        - 4.0 * gamma * (ap * ap * rrr - 2.0 * ap * bp * rri + bp * bp * rii)
    ) * dt
    dvqp = (
        state.vpp + state.vqq - 3.0 * beta2 * state.vqq * q2v
        - 2.0 * gamma * state.vqp
        - 4.0 * gamma * (aq * ap * rrr - (aq * bp + ap * bq) * rri + bq * bp * rii)
    ) * dt
    return GaussianState(q=dq, p=dp, vqq=dvqq, vpp=dvpp, vqp=dvqp, t=dt)


def _chart_of(vqq: float, vpp: float, vqp: float) -> tuple[float, float]:
    """(u1, u2) chart point for V, rescaled onto the pure manifold."""
    det = vqq * vpp - vqp * vqp
    if det <= 0:
        raise CovarianceError(f"covariance not positive definite: det={det:.3e}")
    norm = math.sqrt(DET_TARGET / det)
    return (vqq - vpp) * norm, 2.0 * vqp * norm


class _GaussianKernel:
    """Unrolled pure-float stepper shared by trajectories and twin pairs.

    State per trajectory is [q, p, u1, u2]. A step whose chart motion
    exceeds CHART_SOFT relative to the covariance trace is redone with
    substeps (the noise increment split uniformly); an irreducible
    failure raises.
    """

    def __init__(self, params: SimParams):
        self.dt = params.step
        self.gamma = params.gamma
        self.beta2 = params.beta**2
        self.amp = params.drive_amplitude
        self.omega = params.omega
        self.rrr, self.rii, self.rri = _noise_quadratics(params)
        self.two_root_g = 2.0 * math.sqrt(params.gamma)

    def _advance(self, s: tuple, t: float, rk: float, ik: float,
                 dt: float) -> tuple | None:
        """One raw Euler-Maruyama step; None when the chart moves too fast."""
        q, p, u1, u2 = s
        gamma = self.gamma
        beta2 = self.beta2
        rrr, rii, rri = self.rrr, self.rii, self.rri
        c = math.sqrt(1.0 + u1 * u1 + u2 * u2)
        vqq = 0.5 * (c + u1)
        vpp = 0.5 * (c - u1)
        vqp = 0.5 * u2
        aq = vqq - 0.5
        bq = vqp
        ap = vqp
        bp = vpp - 0.5
        q2v = q * q + vqq
        fqq = (2.0 * vqp + gamma
               - 4.0 * gamma * (aq * aq * rrr - 2.0 * aq * bq * rri
                                + bq * bq * rii))
        fpp = ((2.0 - 6.0 * beta2 * q2v) * vqp
               - 4.0 * gamma * vpp + gamma
               - 4.0 * gamma * (ap * ap * rrr - 2.0 * ap * bp * rri
                                + bp * bp * rii))
        fqp = (vpp + vqq - 3.0 * beta2 * vqq * q2v - 2.0 * gamma * vqp
               - 4.0 * gamma * (aq * ap * rrr - (aq * bp + ap * bq) * rri
                                + bq * bp * rii))
        du1 = (fqq - fpp) * dt
        du2 = 2.0 * fqp * dt
        if not (math.isfinite(du1) and math.isfinite(du2)):
            raise CovarianceError("covariance flow became non-finite")
        if abs(du1) + abs(du2) > CHART_SOFT * c:
            return None
        nq = q + p * dt + self.two_root_g * (aq * rk - bq * ik)
        np_ = (p + (-beta2 * q * (q * q + 3.0 * vqq) + q - 2.0 * gamma * p
                    + self.amp * math.cos(self.omega * t)) * dt
               + self.two_root_g * (ap * rk - bp * ik))
        if not (math.isfinite(nq) and math.isfinite(np_)):
            raise CovarianceError("mean state became non-finite")
        return nq, np_, u1 + du1, u2 + du2

    def _substepped(self, s: tuple, t: float, rk: float, ik: float) -> tuple:
        """Redo a stiff step at finer resolution."""
        for m in SUBSTEP_LADDER:
            cur = s
            h = self.dt / m
            for j in range(m):
                cur = self._advance(cur, t + j * h, rk / m, ik / m, h)
                if cur is None:
                    break
            if cur is not None:
                return cur
        raise CovarianceError(
            f"covariance step failed at t={t:.4f} even with "
            f"{SUBSTEP_LADDER[-1]} substeps (state {s})")

    def run(self, s: list, t0: float, re: np.ndarray, im: np.ndarray) -> None:
        """Advance the 4-list [q,p,u1,u2] in place over the steps."""
        cur = tuple(s)
        dt = self.dt
        for k in range(re.shape[0]):
            nxt = self._advance(cur, t0 + k * dt, re[k], im[k], dt)
            if nxt is None:
                nxt = self._substepped(cur, t0 + k * dt, re[k], im[k])
            cur = nxt
        s[:] = cur


def _moments_of(s: list) -> tuple[float, float, float, float, float]:
    """(q, p, vqq, vpp, vqp) view of a kernel 4-list."""
    q, p, u1, u2 = s
    c = math.sqrt(1.0 + u1 * u1 + u2 * u2)
    return q, p, 0.5 * (c + u1), 0.5 * (c - u1), 0.5 * u2


def gaussian_step(state: GaussianState, params: SimParams, t: float,
                  dxi: complex) -> GaussianState:
    """Advance one step and enforce the covariance invariants."""
    kern = _GaussianKernel(params)
    s = [state.q, state.p, *_chart_of(state.vqq, state.vpp, state.vqp)]
    kern.run(s, t, np.array([dxi.real]), np.array([dxi.imag]))
    q, p, vqq, vpp, vqp = _moments_of(s)
    return GaussianState(q=q, p=p, vqq=vqq, vpp=vpp, vqp=vqp,
                         t=state.t + params.step)


def evolve_gaussian(
    params: SimParams,
    initial: GaussianState | None = None,
    duration: float = 0.0,
    noise=None,
    sample_interval: float | None = None,
    trajectory_index: int = 0,
) -> np.ndarray:
    """Integrate one Gaussian trajectory; rows are (t, q, p, vqq, vpp, vqp).

    Noise defaults to the stream keyed by (params.seed, trajectory_index),
    exactly as the full quantum integrator, so both layers can share paths.
    """
    state = initial if initial is not None else GaussianState(0.0, 0.0)
    state.validate()
    dt = params.step
    n_steps = max(1, round(duration / dt))
    if noise is None:
        noise = make_noise_path(UnravelingSpec(params.u_abs, params.phi), dt,
                                n_steps, params.seed, trajectory_index)
    if len(noise) < n_steps:
        raise ValueError(f"noise path has {len(noise)} increments, need {n_steps}")
    every = sample_interval if sample_interval is not None else params.period / 16.0
    stride = max(1, round(every / dt))

    kern = _GaussianKernel(params)
    s = [state.q, state.p, *_chart_of(state.vqq, state.vpp, state.vqp)]
    re = np.real(noise.increments)
    im = np.imag(noise.increments)
    rows = [(state.t, *_moments_of(s))]
    k = 0
    while k < n_steps:
        block = min(stride, n_steps - k)
        kern.run(s, state.t + k * dt, re[k:k + block], im[k:k + block])
        k += block
        rows.append((state.t + k * dt, *_moments_of(s)))
    return np.array(rows)


def gaussian_coherent(q: float = 0.0, p: float = 0.0) -> GaussianState:
    """Minimum-uncertainty symmetric state centered at (q, p)."""
    return GaussianState(q=q, p=p, vqq=0.5, vpp=0.5, vqp=0.0)


class GaussianTwinPair:
    """Fiducial/shadow Gaussian pair sharing one noise stream."""

    uses_noise = True

    def __init__(self, params: SimParams, initial: GaussianState | None = None):
        self.params = params
        self.dt = params.step
        self.kern = _GaussianKernel(params)
        base = initial if initial is not None else gaussian_coherent()
        base.validate()
        self._f = [base.q, base.p, *_chart_of(base.vqq, base.vpp, base.vqp)]
        self._s = list(self._f)
        self._spec = UnravelingSpec(params.u_abs, params.phi)

    def make_increments(self, rng, n_steps: int) -> np.ndarray:
        return increments_from_wiener(sample_wiener(n_steps, self.dt, rng),
                                      self._spec)

    def separate(self, d0: float) -> None:
        self._s[0] += d0

    def advance_block(self, t0: float, n_steps: int, dxi: np.ndarray) -> None:
        re = np.real(dxi)
        im = np.imag(dxi)
        self.kern.run(self._f, t0, re, im)
        self.kern.run(self._s, t0, re, im)

    def separation(self) -> tuple[float, float]:
        return self._s[0] - self._f[0], self._s[1] - self._f[1]

    def pull_back(self, factor: float) -> None:
        # means only; the shadow keeps its own covariances
        dq, dp = self.separation()
        self._s[0] = self._f[0] + factor * dq
        self._s[1] = self._f[1] + factor * dp

    def fiducial_point(self) -> tuple[float, float]:
        return self._f[0], self._f[1]


def semiclassical_process(params: SimParams,
                          initial: GaussianState | None = None) -> GaussianTwinPair:
    """Twin pair adapter feeding `qduff.lyapunov.estimate_lyapunov`."""
    return GaussianTwinPair(params, initial)


@dataclass
class ResidenceSummary:
    frac_periodic: float
    frac_chaotic: float
    transitions: int
    tube_radius: float
    n_samples: int


def regime_residence(points: np.ndarray, params: SimParams,
                     orbit: np.ndarray | None = None,
                     tube_scale: float = 0.15) -> ResidenceSummary:
    """Classify (q, p) samples against the classical periodic orbit.

    A sample inside the tube (distance below tube_scale times the orbit's
    RMS radius about its centroid) counts as periodic-orbit residence.
    Raises when the classical regime is chaotic (no orbit to compare to).
    """
    from scipy.spatial import cKDTree

    from .classical import periodic_orbit

    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2 or len(points) == 0:
        raise ValueError("points must be a non-empty (n, 2) array")
    if orbit is None:
        orbit = periodic_orbit(params)  # raises RuntimeError in chaotic regime
    centroid = orbit.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum((orbit - centroid) ** 2, axis=1))))
    tube = tube_scale * rms
    dists, _ = cKDTree(orbit).query(points)
    inside = dists <= tube
    transitions = int(np.sum(inside[1:] != inside[:-1]))
    frac = float(np.mean(inside))
    return ResidenceSummary(frac_periodic=frac, frac_chaotic=1.0 - frac,
                            transitions=transitions, tube_radius=tube,
                            n_samples=len(points))
