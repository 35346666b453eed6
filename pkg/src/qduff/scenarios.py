"""Named experiments wired out of the simulation layers.

Each runner sweeps a grid of detection phases or quantumness values and
reduces trajectory ensembles to a summary table: exponent sweeps, windowed
negativity, negativity time series, the cat-state fringe-alignment
experiment, and periodic-orbit residence statistics.

Orchestration design:

* every (phase, beta, realization) cell is an independent job with its own
  RNG seed derived by hashing the master seed, scenario name, and the cell
  coordinates (by value, not grid index, so re-partitioned sweeps reuse
  identical cells);
* each finished cell is persisted to its own CSV under out_dir/cells; a
  rerun skips finished cells, so interrupted sweeps resume, and disjoint
  sweep halves concatenate bit-for-bit to the full table;
* a failed cell leaves a .failed marker and the error propagates after the
  surviving cells are written;
* `jobs > 1` fans cells over a process pool; results are merged in a fixed
  order so parallel runs emit byte-identical tables.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from configparser import ConfigParser
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classical import ClassicalState, integrate, periodic_orbit
from .fock import SimParams, auto_basis_size, cat_state, coherent_state, fock_state
from .io import read_table, write_table
from .lyapunov import estimate_lyapunov
from .noise import (
    UnravelingSpec,
    increments_from_wiener,
    sample_wiener,
    trajectory_rng,
)
from .semiclassical import (
    GaussianTwinPair,
    gaussian_coherent,
    evolve_gaussian,
    regime_residence,
)
from .sse import QuantumTwinPair, evolve_trajectory
from .wigner import (
    default_grid_spec,
    negativity,
    negativity_decay_rate,
    negativity_of_states,
    wigner_transform,
)

__all__ = [
    "ExperimentConfig",
    "CatCoefficients",
    "cat_coefficient_step",
    "load_config",
    "cell_seed",
    "classical_reference_point",
    "attractor_anchors",
    "run_phi_sweep",
    "run_beta_sweep",
    "run_negativity_timeseries",
    "run_cat_fringe_experiment",
    "run_residence",
    "semiclassical_lambda",
    "CheckResult",
    "validate",
    "SMOKE_CYCLES",
    "SMOKE_REALIZATIONS",
    "SMOKE_BASIS_CAP",
]

SMOKE_CYCLES = 100
SMOKE_REALIZATIONS = 5
SMOKE_BASIS_CAP = 65


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: base parameters, sweep axes, protocol, bookkeeping."""

    scenario: str
    base: SimParams
    phi_values: tuple = ()
    beta_values: tuple = ()
    d0: float = 1e-3
    reset_interval: float | None = None
    total_cycles: int = 500
    discard_cycles: int = 10
    n_realizations: int = 20
    negativity_window: float = 2.0
    negativity_periods: float = 12.0
    residence_periods: float = 300.0
    residence_discard: float = 20.0
    cat_alpha: complex = 2.0 + 0.0j
    trajectory_periods: float = 20.0
    basis_cap: int | None = None
    out_dir: Path = field(default_factory=lambda: Path("runs"))
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "phi_values",
                           tuple(float(v) for v in self.phi_values) or
                           (float(self.base.phi),))
        object.__setattr__(self, "beta_values",
                           tuple(float(v) for v in self.beta_values) or
                           (float(self.base.beta),))
        object.__setattr__(self, "out_dir", Path(self.out_dir))

    def validate(self) -> None:
        if not self.scenario:
            raise ValueError("scenario name must be non-empty")
        if self.d0 <= 0:
            raise ValueError(f"d0 must be positive, got {self.d0}")
        if self.reset_interval is not None and self.reset_interval <= 0:
            raise ValueError("reset_interval must be positive")
        if self.total_cycles <= self.discard_cycles:
            raise ValueError("total_cycles must exceed discard_cycles")
        if self.n_realizations < 1:
            raise ValueError("need at least one realization")
        if not 0 < self.negativity_window <= self.negativity_periods:
            raise ValueError("negativity window must fit inside the run")
        if not 0 <= self.residence_discard < self.residence_periods:
            raise ValueError("residence discard must fit inside the run")
        for beta in self.beta_values:
            for phi in self.phi_values:
                self.params_for(phi=phi, beta=beta)  # SimParams invariants

    def params_for(self, phi: float | None = None,
                   beta: float | None = None) -> SimParams:
        """Sweep-point parameters; auto basis per beta unless pinned."""
        kw = {}
        if phi is not None:
            kw["phi"] = float(phi)
        if beta is not None and float(beta) != self.base.beta:
            kw["beta"] = float(beta)
            if self.base.basis_size is None:
                kw["basis_size"] = auto_basis_size(float(beta))
        p = self.base.with_(**kw) if kw else self.base
        if self.basis_cap is not None and p.n_levels > self.basis_cap:
            p = p.with_(basis_size=self.basis_cap)
        return p


def _parse_floats(raw: str) -> tuple:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def load_config(path, profile: str | None = None,
                master_seed: int | None = None,
                out_dir=None) -> ExperimentConfig:
    """Read a flat INI experiment file; `profile` rescales for CI or paper.

    The smoke profile caps cycles at 100, realizations at 5, and the
    auto-derived basis at 65; `paper` leaves the file untouched. CLI
    overrides for seed and output directory are applied last.
    """
    cp = ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")

    sys_kw = {}
    if cp.has_section("system"):
        sec = cp["system"]
        for key in ("gamma", "g", "omega", "beta", "u_abs", "phi"):
            if key in sec:
                sys_kw[key] = sec.getfloat(key)
        for key in ("basis_size",):
            if key in sec and sec.get(key).strip().lower() != "auto":
                sys_kw[key] = sec.getint(key)
        if "dt" in sec and sec.get("dt").strip().lower() != "auto":
            sys_kw["dt"] = sec.getfloat("dt")
        if "seed" in sec:
            sys_kw["seed"] = sec.getint("seed")
    base = SimParams(**sys_kw)

    exp = cp["experiment"] if cp.has_section("experiment") else {}
    sweep = cp["sweep"] if cp.has_section("sweep") else {}
    proto = cp["protocol"] if cp.has_section("protocol") else {}

    def fval(sec, key, default):
        return float(sec[key]) if key in sec else default

    def ival(sec, key, default):
        return int(sec[key]) if key in sec else default

    reset = None
    if "reset_interval" in proto and proto["reset_interval"].strip().lower() != "auto":
        reset = float(proto["reset_interval"])

    alpha = complex(fval(proto, "cat_alpha_re", 2.0),
                    fval(proto, "cat_alpha_im", 0.0))
    cfg = ExperimentConfig(
        scenario=exp.get("scenario", Path(path).stem),
        base=base,
        phi_values=_parse_floats(sweep["phi"]) if "phi" in sweep else (),
        beta_values=_parse_floats(sweep["beta"]) if "beta" in sweep else (),
        d0=fval(proto, "d0", 1e-3),
        reset_interval=reset,
        total_cycles=ival(proto, "total_cycles", 500),
        discard_cycles=ival(proto, "discard_cycles", 10),
        n_realizations=ival(proto, "n_realizations", 20),
        negativity_window=fval(proto, "negativity_window", 2.0),
        negativity_periods=fval(proto, "negativity_periods", 12.0),
        residence_periods=fval(proto, "residence_periods", 300.0),
        residence_discard=fval(proto, "residence_discard", 20.0),
        cat_alpha=alpha,
        trajectory_periods=fval(proto, "trajectory_periods", 20.0),
        out_dir=Path(exp.get("out_dir", "runs")),
        master_seed=ival(exp, "master_seed", 0),
    )

    if profile == "smoke":
        cfg = replace(
            cfg,
            total_cycles=min(cfg.total_cycles, SMOKE_CYCLES),
            n_realizations=min(cfg.n_realizations, SMOKE_REALIZATIONS),
            basis_cap=SMOKE_BASIS_CAP if cfg.base.basis_size is None else None,
        )
    elif profile not in (None, "paper"):
        raise ValueError(f"unknown profile {profile!r}")
    if master_seed is not None:
        cfg = replace(cfg, master_seed=int(master_seed))
    if out_dir is not None:
        cfg = replace(cfg, out_dir=Path(out_dir))
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- seeding

def _canonical(master_seed: int, scenario: str, kind: str,
               phi, beta, realization) -> str:
    parts = [f"seed={int(master_seed)}", f"scenario={scenario}", f"kind={kind}"]
    if phi is not None:
        parts.append("phi=" + float(phi).hex())
    if beta is not None:
        parts.append("beta=" + float(beta).hex())
    if realization is not None:
        parts.append(f"r={int(realization)}")
    return "|".join(parts)


def cell_seed(master_seed: int, scenario: str, kind: str = "cell",
              phi=None, beta=None, realization=None) -> int:
    """Deterministic 64-bit seed for one sweep cell, keyed by coordinate
    values so any re-partitioning of the sweep reproduces the same cells."""
    canon = _canonical(master_seed, scenario, kind, phi, beta, realization)
    digest = hashlib.sha256(canon.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


def _cell_path(cfg: ExperimentConfig, cell: dict) -> Path:
    canon = _canonical(cfg.master_seed, cfg.scenario, cell["kind"],
                       cell.get("phi"), cell.get("beta"), cell.get("r"))
    stem = hashlib.sha256(canon.encode("ascii")).hexdigest()[:16]
    return cfg.out_dir / "cells" / f"{cell['kind']}-{stem}.csv"


def _cell_key(cell: dict) -> tuple:
    return (cell["kind"], cell.get("phi"), cell.get("beta"), cell.get("r"))


# ------------------------------------------------- reference initial states

def classical_reference_point(params: SimParams,
                              transient_periods: int = 60) -> tuple[float, float]:
    """Post-transient classical phase-space point, used as the coherent
    launch site for quantum sweep cells (deterministic, noise-free)."""
    st = ClassicalState(1.0 / params.beta, 0.0)
    integrate(st, params, transient_periods * params.period)
    return st.x, st.v


def attractor_anchors(params: SimParams) -> np.ndarray:
    """(n, 2) launch points on the classical invariant set.

    Regular regime: the periodic orbit itself. Chaotic regime: quarter-period
    samples of a long post-transient classical run.
    """
    try:
        return periodic_orbit(params)
    except RuntimeError:
        dt = params.period / 1024.0
        st = ClassicalState(0.5, 0.0)
        integrate(st, params, 300 * params.period, dt=dt)
        rows = integrate(st, params, 64 * params.period, dt=dt, sample_every=256)
        return rows[:, 1:3]


def _coherent_at(params: SimParams, q: float, p: float):
    return coherent_state((q + 1j * p) / math.sqrt(2.0), params.n_levels)


# ------------------------------------------------------------ cell workers

def _quantum_lambda_cell(cfg: ExperimentConfig, phi: float, beta: float,
                         r: int) -> float:
    params = cfg.params_for(phi=phi, beta=beta)
    q0, p0 = classical_reference_point(params)
    initial = _coherent_at(params, q0, p0)
    seed = cell_seed(cfg.master_seed, cfg.scenario, "qlam", phi, beta, r)
    est = estimate_lyapunov(
        lambda _: QuantumTwinPair(params, initial),
        d0=cfg.d0, reset_interval=cfg.reset_interval,
        total_cycles=cfg.total_cycles, discard_cycles=cfg.discard_cycles,
        n_realizations=1, master_seed=seed)
    return est.lambda_mean


def _semiclassical_lambda_cell(cfg: ExperimentConfig, phi: float, beta: float,
                               r: int) -> float:
    params = cfg.params_for(phi=phi, beta=beta)
    anchors = attractor_anchors(params)
    q0, p0 = anchors[(r * 37) % len(anchors)]
    seed = cell_seed(cfg.master_seed, cfg.scenario, "slam", phi, beta, r)
    est = estimate_lyapunov(
        lambda _: GaussianTwinPair(params, gaussian_coherent(q0, p0)),
        d0=cfg.d0, reset_interval=cfg.reset_interval,
        total_cycles=cfg.total_cycles, discard_cycles=cfg.discard_cycles,
        n_realizations=1, master_seed=seed)
    return est.lambda_mean


def _windowed_negativity_cell(cfg: ExperimentConfig, phi: float, beta: float,
                              r: int) -> float:
    params = cfg.params_for(phi=phi, beta=beta)
    period = params.period
    duration = cfg.negativity_periods * period
    lo = duration - cfg.negativity_window * period
    n_samp = max(2, round(8 * cfg.negativity_window))
    times = [lo + (k + 1) * (duration - lo) / n_samp for k in range(n_samp)]
    seed = cell_seed(cfg.master_seed, cfg.scenario, "qdel", phi, beta, r)
    q0, p0 = classical_reference_point(params)
    rec = evolve_trajectory(params.with_(seed=seed), _coherent_at(params, q0, p0),
                            duration, snapshot_times=times)
    cols = np.stack([sv.amps for _, sv in rec.snapshots], axis=1)
    deltas = negativity_of_states(cols, default_grid_spec(params.n_levels))
    return float(np.mean(deltas))


def _timeseries_cell(cfg: ExperimentConfig, phi: float, r: int) -> np.ndarray:
    params = cfg.params_for(phi=phi)
    period = params.period
    duration = cfg.negativity_periods * period
    n_samp = round(8 * cfg.negativity_periods)
    times = [(k + 1) * duration / n_samp for k in range(n_samp)]
    seed = cell_seed(cfg.master_seed, cfg.scenario, "ntser", phi, None, r)
    q0, p0 = classical_reference_point(params)
    initial = _coherent_at(params, q0, p0)
    rec = evolve_trajectory(params.with_(seed=seed), initial, duration,
                            snapshot_times=times)
    cols = np.stack([sv.amps for _, sv in rec.snapshots], axis=1)
    deltas = negativity_of_states(cols, default_grid_spec(params.n_levels))
    ts = np.array([t for t, _ in rec.snapshots])
    delta0 = negativity(wigner_transform(initial))
    return np.column_stack([np.concatenate([[0.0], ts]),
                            np.concatenate([[delta0], deltas])])


def _residence_cell(cfg: ExperimentConfig, phi: float, r: int) -> tuple:
    # classification needs the actual periodic orbit, so no attractor fallback
    params = cfg.params_for(phi=phi)
    orbit = periodic_orbit(params)
    q0, p0 = orbit[(r * 37) % len(orbit)]
    seed = cell_seed(cfg.master_seed, cfg.scenario, "resid", phi, None, r)
    rows = evolve_gaussian(params.with_(seed=seed), gaussian_coherent(q0, p0),
                           cfg.residence_periods * params.period,
                           sample_interval=params.period / 4.0,
                           trajectory_index=0)
    skip = round(4 * cfg.residence_discard)
    res = regime_residence(rows[skip:, 1:3], params, orbit=orbit)
    return res.frac_periodic, res.frac_chaotic, res.transitions


def _cat_rate_cell(cfg: ExperimentConfig, phi: float) -> tuple:
    params = cfg.params_for()
    seed = cell_seed(cfg.master_seed, cfg.scenario, "catfit", phi, None, None)
    initial = cat_state(cfg.cat_alpha, params.n_levels)
    duration = 1.0 / params.gamma
    fit, = negativity_decay_rate(initial, params, [phi], duration,
                                 n_realizations=cfg.n_realizations,
                                 master_seed=seed)
    return fit.rate, fit.residual, fit.delta0, fit.t_window_end


def _cat_model_cell(cfg: ExperimentConfig, phi: float,
                    n_paths: int = 4000, n_steps: int = 2000,
                    dt: float = 1e-3) -> tuple:
    seed = cell_seed(cfg.master_seed, cfg.scenario, "catmodel", phi, None, None)
    rng = trajectory_rng(seed, 0)
    drift, frozen = _cat_model_stats(cfg.cat_alpha, phi, rng, n_paths, n_steps, dt)
    return drift, frozen


_CELL_HEADERS = {
    "qlam": ["phi", "beta", "r", "lambda"],
    "slam": ["phi", "beta", "r", "lambda"],
    "qdel": ["phi", "beta", "r", "delta"],
    "ntser": ["t", "delta"],
    "resid": ["phi", "r", "frac_periodic", "frac_chaotic", "transitions"],
    "catfit": ["phi", "rate", "residual", "delta0", "t_window_end"],
    "catmodel": ["phi", "weight_drift_rms", "frozen_fraction"],
}


def _dispatch_cell(cfg: ExperimentConfig, cell: dict) -> np.ndarray:
    kind = cell["kind"]
    phi, beta, r = cell.get("phi"), cell.get("beta"), cell.get("r")
    if kind == "qlam":
        lam = _quantum_lambda_cell(cfg, phi, beta, r)
        return np.array([[phi, beta, r, lam]])
    if kind == "slam":
        lam = _semiclassical_lambda_cell(cfg, phi, beta, r)
        return np.array([[phi, beta, r, lam]])
    if kind == "qdel":
        delta = _windowed_negativity_cell(cfg, phi, beta, r)
        return np.array([[phi, beta, r, delta]])
    if kind == "ntser":
        return _timeseries_cell(cfg, phi, r)
    if kind == "resid":
        fp, fc, tr = _residence_cell(cfg, phi, r)
        return np.array([[phi, r, fp, fc, tr]])
    if kind == "catfit":
        return np.array([[phi, *_cat_rate_cell(cfg, phi)]])
    if kind == "catmodel":
        return np.array([[phi, *_cat_model_cell(cfg, phi)]])
    raise ValueError(f"unknown cell kind {kind!r}")


def _pool_entry(args):
    return _dispatch_cell(*args)


def _run_cells(cfg: ExperimentConfig, cells: list[dict],
               jobs: int = 1) -> dict:
    """Execute (or reload) every cell; persist each as its own CSV.

    Finished cells are skipped, failed ones leave a .failed marker next to
    where their CSV would be, and the first error propagates once all other
    cells have been given their chance.
    """
    results: dict = {}
    pending = []
    for cell in cells:
        path = _cell_path(cfg, cell)
        marker = path.with_suffix(".failed")
        if path.exists():
            _, data = read_table(path)
            results[_cell_key(cell)] = data
            continue
        if marker.exists():
            marker.unlink()  # retry previously failed cells
        pending.append((cell, path))

    failures = []

    def finish(cell, path, outcome, error):
        if error is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.with_suffix(".failed").write_text(repr(error) + "\n",
                                                   encoding="utf-8")
            failures.append((cell, error))
            return
        write_table(path, _CELL_HEADERS[cell["kind"]], outcome)
        results[_cell_key(cell)] = np.asarray(outcome, dtype=float)

    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(cell, path, pool.submit(_pool_entry, (cfg, cell)))
                       for cell, path in pending]
            for cell, path, fut in futures:
                try:
                    finish(cell, path, fut.result(), None)
                except Exception as err:
                    finish(cell, path, None, err)
    else:
        for cell, path in pending:
            try:
                finish(cell, path, _dispatch_cell(cfg, cell), None)
            except Exception as err:
                finish(cell, path, None, err)

    if failures:
        cell, err = failures[0]
        raise RuntimeError(
            f"{len(failures)} cell(s) failed, first: {_cell_key(cell)}: {err}"
        ) from err
    return results


def _mean_sem(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    m = float(values.mean())
    sem = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return m, sem


# ----------------------------------------------------------------- runners

def run_phi_sweep(cfg: ExperimentConfig, jobs: int = 1) -> np.ndarray:
    """Quantum exponent and windowed negativity per detection phase.

    Returns rows (phi, lambda, lambda_sem, delta, delta_sem, n) ordered by
    phi; also written to out_dir/phi_sweep.csv.
    """
    cfg.validate()
    beta = cfg.beta_values[0]
    cells = [{"kind": kind, "phi": phi, "beta": beta, "r": r}
             for phi in cfg.phi_values
             for kind in ("qlam", "qdel")
             for r in range(cfg.n_realizations)]
    results = _run_cells(cfg, cells, jobs)
    rows = []
    for phi in sorted(cfg.phi_values):
        lams = [results[("qlam", phi, beta, r)][0, 3]
                for r in range(cfg.n_realizations)]
        dels = [results[("qdel", phi, beta, r)][0, 3]
                for r in range(cfg.n_realizations)]
        lam, lam_sem = _mean_sem(lams)
        dlt, dlt_sem = _mean_sem(dels)
        rows.append([phi, lam, lam_sem, dlt, dlt_sem, cfg.n_realizations])
    table = np.array(rows)
    write_table(cfg.out_dir / "phi_sweep.csv",
                ["phi", "lambda", "lambda_sem", "delta", "delta_sem", "n"],
                table)
    return table


def run_beta_sweep(cfg: ExperimentConfig, jobs: int = 1) -> np.ndarray:
    """Exponents and negativity versus beta at phi in {pi/2, pi}.

    Rows: (beta, phi, lambda_q, lambda_q_sem, lambda_semi, lambda_semi_sem,
    delta, delta_sem); basis auto-scales per beta unless pinned.
    """
    cfg.validate()
    phases = (math.pi / 2.0, math.pi)
    cells = [{"kind": kind, "phi": phi, "beta": beta, "r": r}
             for beta in cfg.beta_values
             for phi in phases
             for kind in ("qlam", "slam", "qdel")
             for r in range(cfg.n_realizations)]
    results = _run_cells(cfg, cells, jobs)
    rows = []
    for beta in sorted(cfg.beta_values):
        for phi in phases:
            ql, ql_sem = _mean_sem([results[("qlam", phi, beta, r)][0, 3]
                                    for r in range(cfg.n_realizations)])
            sl, sl_sem = _mean_sem([results[("slam", phi, beta, r)][0, 3]
                                    for r in range(cfg.n_realizations)])
            dl, dl_sem = _mean_sem([results[("qdel", phi, beta, r)][0, 3]
                                    for r in range(cfg.n_realizations)])
            rows.append([beta, phi, ql, ql_sem, sl, sl_sem, dl, dl_sem])
    table = np.array(rows)
    write_table(cfg.out_dir / "beta_sweep.csv",
                ["beta", "phi", "lambda_q", "lambda_q_sem", "lambda_semi",
                 "lambda_semi_sem", "delta", "delta_sem"],
                table)
    return table


def run_negativity_timeseries(cfg: ExperimentConfig,
                              jobs: int = 1) -> tuple[np.ndarray, dict]:
    """Ensemble-mean negativity over time per phase.

    Returns (rows, surge) where rows are (phi, t, delta_mean, delta_sem)
    and surge maps phi to the first time the mean crosses 0.05 (nan when it
    never does).
    """
    cfg.validate()
    cells = [{"kind": "ntser", "phi": phi, "r": r}
             for phi in cfg.phi_values for r in range(cfg.n_realizations)]
    results = _run_cells(cfg, cells, jobs)
    rows = []
    surge = {}
    for phi in sorted(cfg.phi_values):
        series = [results[("ntser", phi, None, r)]
                  for r in range(cfg.n_realizations)]
        ts = series[0][:, 0]
        stack = np.stack([s[:, 1] for s in series])
        mean = stack.mean(axis=0)
        sem = (stack.std(axis=0, ddof=1) / math.sqrt(len(series))
               if len(series) > 1 else np.zeros_like(mean))
        crossed = np.nonzero(mean > 0.05)[0]
        surge[phi] = float(ts[crossed[0]]) if crossed.size else math.nan
        rows.extend([phi, t, m, s] for t, m, s in zip(ts, mean, sem))
    table = np.array(rows)
    write_table(cfg.out_dir / "negativity_timeseries.csv",
                ["phi", "t", "delta_mean", "delta_sem"], table)
    return table, surge


def run_cat_fringe_experiment(cfg: ExperimentConfig, jobs: int = 1) -> np.ndarray:
    """Negativity decay rate versus phase for a cat state, monitoring only,
    next to the two-coefficient analytic model statistics.

    Rows: (phi, rate, residual, delta0, weight_drift_rms, frozen_fraction).
    """
    cfg.validate()
    cells = [{"kind": kind, "phi": phi}
             for phi in cfg.phi_values for kind in ("catfit", "catmodel")]
    results = _run_cells(cfg, cells, jobs)
    rows = []
    for phi in sorted(cfg.phi_values):
        fit = results[("catfit", phi, None, None)][0]
        model = results[("catmodel", phi, None, None)][0]
        rows.append([phi, fit[1], fit[2], fit[3], model[1], model[2]])
    table = np.array(rows)
    write_table(cfg.out_dir / "cat_fringe.csv",
                ["phi", "rate", "residual", "delta0", "weight_drift_rms",
                 "frozen_fraction"], table)
    return table


def run_residence(cfg: ExperimentConfig, jobs: int = 1) -> np.ndarray:
    """Periodic-orbit residence statistics of the Gaussian layer per phase.

    Rows: (phi, frac_periodic, frac_sem, frac_chaotic, transitions_mean, n).
    """
    cfg.validate()
    cells = [{"kind": "resid", "phi": phi, "r": r}
             for phi in cfg.phi_values for r in range(cfg.n_realizations)]
    results = _run_cells(cfg, cells, jobs)
    rows = []
    for phi in sorted(cfg.phi_values):
        data = np.vstack([results[("resid", phi, None, r)]
                          for r in range(cfg.n_realizations)])
        frac, frac_sem = _mean_sem(data[:, 2])
        rows.append([phi, frac, frac_sem, 1.0 - frac,
                     float(data[:, 4].mean()), cfg.n_realizations])
    table = np.array(rows)
    write_table(cfg.out_dir / "residence.csv",
                ["phi", "frac_periodic", "frac_sem", "frac_chaotic",
                 "transitions_mean", "n"], table)
    return table


def semiclassical_lambda(cfg: ExperimentConfig, phi: float,
                         beta: float | None = None, jobs: int = 1):
    """Mean and SEM of the Gaussian-layer exponent at one sweep point,
    using the same per-realization cells as `run_beta_sweep`."""
    cfg.validate()
    beta = cfg.beta_values[0] if beta is None else float(beta)
    cells = [{"kind": "slam", "phi": float(phi), "beta": beta, "r": r}
             for r in range(cfg.n_realizations)]
    results = _run_cells(cfg, cells, jobs)
    lams = [results[("slam", float(phi), beta, r)][0, 3]
            for r in range(cfg.n_realizations)]
    return _mean_sem(lams)


# ------------------------------------------------- analytic two-level model

@dataclass(frozen=True)
class CatCoefficients:
    """Amplitudes of the two coherent branches of a cat state.

    `varphi` is the fringe angle, the argument of alpha. Construction
    normalizes the weights under the large-alpha orthogonal approximation.
    """

    c_plus: complex
    c_minus: complex
    alpha: complex

    def __post_init__(self):
        norm = math.sqrt(abs(self.c_plus) ** 2 + abs(self.c_minus) ** 2)
        if norm == 0 or not math.isfinite(norm):
            raise ValueError("cat coefficients must have finite nonzero norm")
        object.__setattr__(self, "c_plus", self.c_plus / norm)
        object.__setattr__(self, "c_minus", self.c_minus / norm)

    @property
    def varphi(self) -> float:
        return math.atan2(self.alpha.imag, self.alpha.real)

    @property
    def weight_plus(self) -> float:
        return abs(self.c_plus) ** 2


def cat_coefficient_step(coeffs: CatCoefficients, phi: float, dt: float,
                         dW: float) -> CatCoefficients:
    """One measurement-record increment of the branch amplitudes.

    The homodyne record pushes the two branch weights apart in proportion
    to the projection of the fringe direction onto the monitored quadrature;
    at perpendicular alignment the multiplier is purely imaginary and the
    normalized weights freeze along every path.
    """
    if dW == 0.0:
        return coeffs
    mult = abs(coeffs.alpha) * complex(math.cos(coeffs.varphi - phi),
                                       math.sin(coeffs.varphi - phi)) * dW
    return CatCoefficients(c_plus=coeffs.c_plus * (1.0 + mult),
                           c_minus=coeffs.c_minus * (1.0 - mult),
                           alpha=coeffs.alpha)


def _cat_model_stats(alpha: complex, phi: float, rng, n_paths: int,
                     n_steps: int, dt: float) -> tuple[float, float]:
    """RMS weight drift and frozen fraction over Monte Carlo paths."""
    varphi = math.atan2(alpha.imag, alpha.real)
    mult_unit = abs(alpha) * complex(math.cos(varphi - phi),
                                     math.sin(varphi - phi))
    root_dt = math.sqrt(dt)
    cp = np.full(n_paths, 1.0 / math.sqrt(2.0), dtype=np.complex128)
    cm = cp.copy()
    for _ in range(n_steps):
        dw = rng.standard_normal(n_paths) * root_dt
        m = mult_unit * dw
        cp = cp * (1.0 + m)
        cm = cm * (1.0 - m)
        norm = np.sqrt(np.abs(cp) ** 2 + np.abs(cm) ** 2)
        cp /= norm
        cm /= norm
    w = np.abs(cp) ** 2
    drift = float(np.sqrt(np.mean((w - 0.5) ** 2)))
    frozen = float(np.mean((w < 0.05) | (w > 0.95)))
    return drift, frozen


# ------------------------------------------------------------- build checks

@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: str


def validate(cfg: ExperimentConfig | None = None) -> list[CheckResult]:
    """Fast invariant suite: noise statistics, unraveling average against
    the dense master equation, Wigner oracles, classical exponent anchors.

    Runs in about a minute; every check reports its measured value so a
    failure is diagnosable from the report alone.
    """
    from .fock import DensityMatrix, build_operators
    from .lindblad import evolve_density, trace_distance
    from .classical import ClassicalTwinPair
    from .sse import evolve_ensemble, ensemble_density

    seed = cfg.master_seed if cfg is not None else 0
    checks = []

    # noise increment moments against their contract
    rng = trajectory_rng(seed, 1)
    dt = 1e-3
    worst = 0.0
    for u_abs, phi in ((1.0, math.pi), (0.3, 0.6), (0.0, 0.0)):
        spec = UnravelingSpec(u_abs, phi)
        xs = increments_from_wiener(sample_wiener(100_000, dt, rng), spec)
        u = spec.u
        for samples, target in (
            (xs.real, 0.0), (xs.imag, 0.0),
            (np.abs(xs) ** 2, dt),
            ((xs ** 2).real, u.real * dt), ((xs ** 2).imag, u.imag * dt),
        ):
            se = float(np.std(samples, ddof=1)) / math.sqrt(len(samples))
            worst = max(worst,
                        abs(float(np.mean(samples)) - target) / max(se, 1e-300))
    checks.append(CheckResult("noise-moments", worst < 4.5,
                              f"worst deviation {worst:.2f} standard errors"))

    # unraveling average vs the master equation, reduced scale
    p = SimParams(gamma=0.1, g=0.3, beta=1.0, u_abs=1.0, phi=math.pi,
                  basis_size=35, seed=seed)
    psi0 = fock_state(0, 35)
    batch, _ = evolve_ensemble(p, psi0, 2.0, 100, master_seed=seed)
    rho_tr = DensityMatrix(ensemble_density(batch))
    rho_me = evolve_density(p, DensityMatrix(np.outer(psi0.amps, psi0.amps.conj())),
                            2.0, ops=build_operators(p))
    td = trace_distance(rho_tr, rho_me)
    checks.append(CheckResult("unraveling-average", td < 0.06,
                              f"trace distance {td:.4f} over 100 trajectories"))

    # Wigner oracles: coherent is positive, first excited has a closed form
    delta_coh = negativity(wigner_transform(coherent_state(1.2 + 0.4j, 35)))
    checks.append(CheckResult("wigner-coherent", delta_coh < 1e-3,
                              f"coherent negativity {delta_coh:.2e}"))
    delta_f1 = negativity(wigner_transform(fock_state(1, 35)))
    f1_exact = 4.0 * math.exp(-0.5) - 2.0
    rel = abs(delta_f1 - f1_exact) / f1_exact
    checks.append(CheckResult("wigner-first-excited", rel < 0.01,
                              f"negativity {delta_f1:.5f} vs {f1_exact:.5f}"))

    # classical exponent anchors at reduced statistics
    for gamma, target in ((0.10, 0.16), (0.05, -0.05)):
        pc = SimParams(gamma=gamma, g=0.3, beta=0.3, seed=seed)

        def factory(r, pc=pc):
            rr = np.random.default_rng((seed, 77, r))
            st = ClassicalState(1.0 / pc.beta + rr.normal(0, 0.1),
                                rr.normal(0, 0.1))
            integrate(st, pc, 50 * pc.period)
            return ClassicalTwinPair(pc, st.x, st.v)

        est = estimate_lyapunov(factory, total_cycles=200, discard_cycles=10,
                                n_realizations=6, master_seed=seed)
        ok = abs(est.lambda_mean - target) < 0.02
        checks.append(CheckResult(f"classical-anchor-gamma-{gamma:.2f}", ok,
                                  f"lambda {est.lambda_mean:+.4f} vs {target:+.2f}"))
    return checks
