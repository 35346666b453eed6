"""Twin-trajectory largest-Lyapunov-exponent estimation.

One estimator serves every dynamics layer. A "pair" object owns a fiducial
and a shadow trajectory of the same process and exposes: `separate(d0)`,
`advance_block(t0, n_steps, dxi)`, `separation()`, `pull_back(factor)`,
`fiducial_point()`, plus `dt`, `params`, and a `uses_noise` flag (noisy
pairs also provide `make_increments(rng, n)`). Both members advance under
the identical noise sequence; the estimator periodically accumulates
log(d/d0) and rescales the shadow's separation back to d0, so the pair
stays in the linear-response regime.

The exponent of one realization is the accumulated log stretch divided by
the accumulation time (resets during the initial discard window contribute
nothing). The reported estimate is the mean and standard error over
independent realizations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .noise import trajectory_rng

__all__ = [
    "PhasePoint",
    "LyapunovEstimate",
    "phase_distance",
    "estimate_lyapunov",
    "LinearTwinPair",
    "UNDERFLOW_DISTANCE",
]

#: separations below this are considered numerically lost
UNDERFLOW_DISTANCE = 1e-14


@dataclass(frozen=True)
class PhasePoint:
    q: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.p)):
            raise ValueError("phase point must be finite")


def phase_distance(a: PhasePoint, b: PhasePoint) -> float:
    """Euclidean distance in the (q, p) expectation plane."""
    return math.hypot(a.q - b.q, a.p - b.p)


@dataclass
class LyapunovEstimate:
    """Mean exponent with realization scatter and convergence history.

    `convergence` holds the running estimate after each drive cycle,
    averaged over surviving realizations; entries inside the discard window
    are NaN. `lambdas` keeps the per-realization values for export.
    """

    lambda_mean: float
    sem: float
    n_realizations: int
    n_resets: int
    convergence: np.ndarray
    lambdas: np.ndarray


def estimate_lyapunov(
    pair_factory,
    d0: float = 1e-3,
    reset_interval: float | None = None,
    total_cycles: int = 500,
    discard_cycles: int = 10,
    n_realizations: int = 20,
    master_seed: int = 0,
) -> LyapunovEstimate:
    """Benettin-style exponent over `n_realizations` independent pairs.

    Parameters
    ----------
    pair_factory : callable(realization_index) -> pair
        Builds a fresh twin pair; index 0 should be the nominal initial
        condition, higher indices may jitter it for ensemble diversity.
    d0 : initial and post-reset separation (phase-space units).
    reset_interval : time between rescalings; defaults to one drive
        period of the pair's parameters.
    total_cycles, discard_cycles : drive cycles to run / to exclude from
        the accumulator while transients die out.

    Realizations whose separation underflows are excluded with a warning;
    the estimate is over the survivors.
    """
    if d0 <= 0:
        raise ValueError("d0 must be positive")
    if total_cycles <= discard_cycles:
        raise ValueError("total_cycles must exceed discard_cycles")
    if n_realizations < 1:
        raise ValueError("need at least one realization")

    probe = pair_factory(0)
    period = probe.params.period
    interval = reset_interval if reset_interval is not None else period
    if interval <= 0:
        raise ValueError("reset_interval must be positive")

    total_time = total_cycles * period
    n_resets = max(1, round(total_time / interval))
    discard_resets = round(discard_cycles * period / interval)

    lambdas = []
    histories = []
    for r in range(n_realizations):
        pair = probe if r == 0 else pair_factory(r)
        rng = trajectory_rng(master_seed, r) if pair.uses_noise else None
        result = _run_realization(pair, rng, d0, interval, n_resets,
                                  discard_resets, period, total_cycles, r)
        if result is None:
            continue
        lam, history = result
        lambdas.append(lam)
        histories.append(history)

    if not lambdas:
        raise RuntimeError("all realizations lost their separation")

    lambdas = np.array(lambdas)
    mean = float(np.mean(lambdas))
    sem = float(np.std(lambdas, ddof=1) / math.sqrt(len(lambdas))) if len(lambdas) > 1 else 0.0
    with warnings.catch_warnings():
        # discard-window cycles are all-NaN by design
        warnings.simplefilter("ignore", RuntimeWarning)
        convergence = np.nanmean(np.array(histories), axis=0)
    return LyapunovEstimate(
        lambda_mean=mean,
        sem=sem,
        n_realizations=len(lambdas),
        n_resets=n_resets,
        convergence=convergence,
        lambdas=lambdas,
    )


def _run_realization(pair, rng, d0, interval, n_resets, discard_resets,
                     period, total_cycles, index):
    """Run one pair through all resets; None signals exclusion."""
    dt = pair.dt
    steps = max(1, round(interval / dt))
    pair.separate(d0)

    log_sum = 0.0
    acc_time = 0.0
    history = np.full(total_cycles, np.nan)
    for k in range(n_resets):
        dxi = pair.make_increments(rng, steps) if pair.uses_noise else None
        pair.advance_block(k * interval, steps, dxi)
        dq, dp = pair.separation()
        d = math.hypot(dq, dp)
        if not math.isfinite(d) or d < UNDERFLOW_DISTANCE:
            warnings.warn(
                f"realization {index}: separation {d:.3e} lost at reset {k}; excluded",
                RuntimeWarning,
            )
            return None
        if k >= discard_resets:
            log_sum += math.log(d / d0)
            acc_time += interval
        pair.pull_back(d0 / d)
        cycle = int(((k + 1) * interval) / period + 1e-9) - 1
        if 0 <= cycle < total_cycles and acc_time > 0.0:
            history[cycle] = log_sum / acc_time
    if acc_time == 0.0:
        return None
    return log_sum / acc_time, history


class LinearTwinPair:
    """Damped harmonic pair with an exact step; analytic exponent -gamma.

    Test process: both eigenvalues of x'' + 2*gamma*x' + x = 0 have real part
    -gamma (for gamma < 1), so any separation contracts at exactly that rate
    on average.
    """

    uses_noise = False

    def __init__(self, params, x0: float = 1.0, v0: float = 0.0,
                 dt: float | None = None):
        self.params = params
        self.dt = dt if dt is not None else params.period * 1e-3
        self._s = np.array([x0, v0, x0, v0], dtype=float)
        g = params.gamma
        self._a = np.array([[0.0, 1.0], [-1.0, -2.0 * g]])
        self._cache = {}

    def _step_matrix(self, n: int) -> np.ndarray:
        if n not in self._cache:
            import scipy.linalg

            self._cache[n] = scipy.linalg.expm(self._a * (n * self.dt))
        return self._cache[n]

    def separate(self, d0: float) -> None:
        self._s[2] += d0

    def advance_block(self, t0: float, n_steps: int, dxi=None) -> None:
        m = self._step_matrix(n_steps)
        self._s[:2] = m @ self._s[:2]
        self._s[2:] = m @ self._s[2:]

    def separation(self) -> tuple[float, float]:
        return self._s[2] - self._s[0], self._s[3] - self._s[1]

    def pull_back(self, factor: float) -> None:
        dq, dp = self.separation()
        self._s[2] = self._s[0] + factor * dq
        self._s[3] = self._s[1] + factor * dp

    def fiducial_point(self) -> tuple[float, float]:
        return float(self._s[0]), float(self._s[1])
