"""Deterministic dynamics of the damped, driven double-well oscillator.

The classical limit of the monitored model is

    ẍ + 2Γ ẋ + β² x³ - x = (g/β) cos(Ωt),

written directly in the quadrature scale used by the quantum layers, i.e. a
classical state (x, v) overlays expectation values (⟨Q⟩, ⟨P⟩) with no extra
rescaling (substituting y = βx recovers the textbook unit-well form, so β
only sets the attractor's extent, never its dynamics). Integration is
fixed-step classical RK4; the default step is 1e-3 drive periods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ClassicalState",
    "duffing_rhs",
    "rk4_step",
    "integrate",
    "classical_poincare",
    "attractor_box",
    "periodic_orbit",
    "ClassicalTwinPair",
]

#: default integrator step, as a fraction of the drive period
RK4_PERIOD_FRACTION = 1.0e-3


@dataclass
class ClassicalState:
    x: float
    v: float

    def copy(self) -> "ClassicalState":
        return ClassicalState(self.x, self.v)


def duffing_rhs(x: float, v: float, t: float, params) -> tuple[float, float]:
    """Vector field (dx/dt, dv/dt) of the driven double well."""
    dv = (
        -2.0 * params.gamma * v
        - params.beta**2 * x**3
        + x
        + params.drive_amplitude * math.cos(params.omega * t)
    )
    return v, dv


def rk4_step(state: ClassicalState, t: float, dt: float, params) -> ClassicalState:
    """One classical Runge-Kutta step; allocates a fresh state."""
    x, v = _rk4_core(
        state.x,
        state.v,
        t,
        dt,
        params.gamma,
        params.beta**2,
        params.drive_amplitude,
        params.omega,
    )
    return ClassicalState(x, v)


def _rk4_core(x, v, t, dt, gamma, beta2, amp, omega):
    # unrolled RK4 on plain floats: this sits inside every classical hot loop
    two_gamma = 2.0 * gamma

    def acc(xx, vv, tt):
        return -two_gamma * vv - beta2 * xx * xx * xx + xx + amp * math.cos(omega * tt)

    half = 0.5 * dt
    k1x = v
    k1v = acc(x, v, t)
    k2x = v + half * k1v
    k2v = acc(x + half * k1x, k2x, t + half)
    k3x = v + half * k2v
    k3v = acc(x + half * k2x, k3x, t + half)
    k4x = v + dt * k3v
    k4v = acc(x + dt * k3x, k4x, t + dt)
    sixth = dt / 6.0
    return (
        x + sixth * (k1x + 2.0 * (k2x + k3x) + k4x),
        v + sixth * (k1v + 2.0 * (k2v + k3v) + k4v),
    )


def _default_dt(params) -> float:
    return RK4_PERIOD_FRACTION * params.period


def integrate(
    state: ClassicalState,
    params,
    duration: float,
    dt: float | None = None,
    t0: float = 0.0,
    sample_every: int = 1,
) -> np.ndarray:
    """Integrate for `duration`, returning rows (t, x, v) every `sample_every` steps."""
    h = dt if dt is not None else _default_dt(params)
    n = max(1, round(duration / h))
    h = duration / n
    x, v = state.x, state.v
    gamma, beta2 = params.gamma, params.beta**2
    amp, omega = params.drive_amplitude, params.omega
    out = [(t0, x, v)]
    for k in range(n):
        x, v = _rk4_core(x, v, t0 + k * h, h, gamma, beta2, amp, omega)
        if (k + 1) % sample_every == 0:
            out.append((t0 + (k + 1) * h, x, v))
    state.x, state.v = x, v
    return np.array(out)


def classical_poincare(
    params,
    n_points: int,
    transient_periods: int = 50,
    x0: float = 0.0,
    v0: float = 0.0,
    dt: float | None = None,
) -> np.ndarray:
    """Stroboscopic section sampled once per drive period at phase Ωt ≡ 0 (mod 2π).

    Returns an (n_points, 2) array of post-transient (x, v) samples. The step
    is snapped so an integer number of steps lands exactly on each period.
    """
    h = dt if dt is not None else _default_dt(params)
    steps = max(1, round(params.period / h))
    h = params.period / steps
    x, v = x0, v0
    gamma, beta2 = params.gamma, params.beta**2
    amp, omega = params.drive_amplitude, params.omega
    pts = np.empty((n_points, 2))
    t = 0.0
    for cycle in range(transient_periods + n_points):
        for k in range(steps):
            x, v = _rk4_core(x, v, t + k * h, h, gamma, beta2, amp, omega)
        t += params.period
        if cycle >= transient_periods:
            pts[cycle - transient_periods] = (x, v)
    return pts


def attractor_box(points: np.ndarray, inflate: float = 0.0) -> tuple[float, float, float, float]:
    """(x_lo, x_hi, v_lo, v_hi) bounding the samples, optionally inflated.

    `inflate` grows the box symmetrically by that fraction of each half-width.
    """
    x_lo, x_hi = float(points[:, 0].min()), float(points[:, 0].max())
    v_lo, v_hi = float(points[:, 1].min()), float(points[:, 1].max())
    cx, cv = 0.5 * (x_lo + x_hi), 0.5 * (v_lo + v_hi)
    hx, hv = 0.5 * (x_hi - x_lo), 0.5 * (v_hi - v_lo)
    hx *= 1.0 + inflate
    hv *= 1.0 + inflate
    return cx - hx, cx + hx, cv - hv, cv + hv


def periodic_orbit(
    params,
    transient_periods: int = 300,
    max_multiple: int = 8,
    cluster_tol: float = 1e-6,
    samples_per_period: int = 256,
) -> np.ndarray:
    """Locate the attracting periodic orbit and sample it densely.

    Works by settling onto the attractor, then finding the smallest k ≤
    `max_multiple` with stroboscopic return distance below `cluster_tol`
    (the orbit period is k drive periods). Returns (k·samples_per_period, 2)
    points along the closed orbit.

    Raises RuntimeError when no periodic closure is found, which is the
    expected outcome in a chaotic parameter regime.
    """
    h = _default_dt(params)
    steps = max(1, round(params.period / h))
    h = params.period / steps
    state = ClassicalState(0.0, 0.0)
    gamma, beta2 = params.gamma, params.beta**2
    amp, omega = params.drive_amplitude, params.omega
    x, v = state.x, state.v
    t = 0.0
    for _ in range(transient_periods):
        for k in range(steps):
            x, v = _rk4_core(x, v, t + k * h, h, gamma, beta2, amp, omega)
        t += params.period
    # stroboscopic returns over max_multiple periods
    strobe = [(x, v)]
    for _ in range(max_multiple):
        for k in range(steps):
            x, v = _rk4_core(x, v, t + k * h, h, gamma, beta2, amp, omega)
        t += params.period
        strobe.append((x, v))
    k_period = None
    for k in range(1, max_multiple + 1):
        if math.hypot(strobe[k][0] - strobe[0][0], strobe[k][1] - strobe[0][1]) < cluster_tol:
            k_period = k
            break
    if k_period is None:
        raise RuntimeError(
            "no periodic orbit within %d drive periods; regime appears chaotic"
            % max_multiple
        )
    # resample the closed orbit finely
    x, v = strobe[0]
    record_every = max(1, steps // samples_per_period)
    pts = []
    for cycle in range(k_period):
        for k in range(steps):
            x, v = _rk4_core(x, v, t + k * h, h, gamma, beta2, amp, omega)
            if (k + 1) % record_every == 0:
                pts.append((x, v))
        t += params.period
    return np.array(pts)


class ClassicalTwinPair:
    """Fiducial/shadow pair for twin-trajectory exponent estimation.

    Noise-free: `advance_block` ignores the increment array entirely, so the
    pair can share the Lyapunov driver with the stochastic layers.
    """

    uses_noise = False

    def __init__(self, params, x0: float = 0.0, v0: float = 0.0, dt: float | None = None):
        self.params = params
        self.dt = dt if dt is not None else _default_dt(params)
        self._s = [x0, v0, x0, v0]  # x_f, v_f, x_s, v_s

    def separate(self, d0: float) -> None:
        self._s[2] += d0

    def advance_block(self, t0: float, n_steps: int, dxi=None) -> None:
        xf, vf, xs, vs = self._s
        h = self.dt
        gamma, beta2 = self.params.gamma, self.params.beta**2
        amp, omega = self.params.drive_amplitude, self.params.omega
        for k in range(n_steps):
            t = t0 + k * h
            xf, vf = _rk4_core(xf, vf, t, h, gamma, beta2, amp, omega)
            xs, vs = _rk4_core(xs, vs, t, h, gamma, beta2, amp, omega)
        self._s = [xf, vf, xs, vs]

    def separation(self) -> tuple[float, float]:
        return self._s[2] - self._s[0], self._s[3] - self._s[1]

    def pull_back(self, factor: float) -> None:
        dq, dp = self.separation()
        self._s[2] = self._s[0] + factor * dq
        self._s[3] = self._s[1] + factor * dp

    def fiducial_point(self) -> tuple[float, float]:
        return self._s[0], self._s[1]
