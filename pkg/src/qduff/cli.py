"""Command-line front end.

One subcommand per task: single-run utilities (classical, trajectory,
semiclassical, wigner, lyapunov) and the named sweep experiments
(sweep-phi, sweep-beta, negativity, cat-fringe, residence, validate).
Every run is reproducible from the config file plus --seed; tables land
in --out as CSV.
"""

from __future__ import annotations

import argparse
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .classical import ClassicalState, ClassicalTwinPair, classical_poincare, integrate
from .fock import cat_state, coherent_state, fock_state
from .io import write_table
from .lyapunov import estimate_lyapunov
from .semiclassical import GaussianTwinPair, evolve_gaussian, gaussian_coherent
from .sse import QuantumTwinPair, evolve_trajectory, poincare_section
from .wigner import negativity, save_grid, wigner_transform
from . import scenarios

__all__ = ["main"]


def _add_common(sub):
    sub.add_argument("--config", type=Path, required=True,
                     help="experiment config file (INI)")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the master seed")
    sub.add_argument("--out", type=Path, default=None,
                     help="override the output directory")
    sub.add_argument("--profile", choices=("smoke", "paper"), default=None,
                     help="rescale the protocol block")
    sub.add_argument("--jobs", type=int, default=1,
                     help="worker processes for sweep cells")


def _resolve_config(path: Path) -> Path:
    """Bare names without a matching file fall back to the shipped configs."""
    if path.exists() or path.parent != Path("."):
        return path
    name = path.name if path.suffix else path.name + ".ini"
    packaged = Path(str(resources.files("qduff").joinpath("configs", name)))
    return packaged if packaged.exists() else path


def _load(args) -> scenarios.ExperimentConfig:
    return scenarios.load_config(_resolve_config(args.config),
                                 profile=args.profile,
                                 master_seed=args.seed, out_dir=args.out)


def _initial_state(cfg: scenarios.ExperimentConfig, kind: str, params):
    if kind == "coherent":
        q0, p0 = scenarios.classical_reference_point(params)
        return coherent_state((q0 + 1j * p0) / math.sqrt(2.0), params.n_levels)
    if kind == "cat":
        return cat_state(cfg.cat_alpha, params.n_levels)
    if kind == "vacuum":
        return fock_state(0, params.n_levels)
    raise ValueError(f"unknown state kind {kind!r}")


# ------------------------------------------------------------- subcommands

def _cmd_classical(args) -> int:
    cfg = _load(args)
    params = cfg.params_for()
    out = cfg.out_dir
    if args.poincare:
        pts = classical_poincare(params, args.points)
        write_table(out / "classical_poincare.csv", ["x", "v"], pts)
        print(f"{len(pts)} section points -> {out / 'classical_poincare.csv'}")
    else:
        st = ClassicalState(args.x0, args.v0)
        rows = integrate(st, params, args.periods * params.period,
                         sample_every=64)
        write_table(out / "classical_trajectory.csv", ["t", "x", "v"], rows)
        print(f"{len(rows)} samples -> {out / 'classical_trajectory.csv'}")
    return 0


def _cmd_trajectory(args) -> int:
    cfg = _load(args)
    params = cfg.params_for()
    if args.seed is not None:
        params = params.with_(seed=args.seed)
    initial = _initial_state(cfg, args.state, params)
    rec = evolve_trajectory(params, initial, args.periods * params.period)
    rows = np.column_stack([rec.times, rec.q_mean, rec.p_mean])
    out = cfg.out_dir
    write_table(out / "trajectory.csv", ["t", "q", "p"], rows)
    print(f"{len(rows)} samples, final norm drift {rec.norm_drift:.2e} "
          f"-> {out / 'trajectory.csv'}")
    if args.poincare:
        pts = poincare_section(rec, params.period,
                               transient_periods=args.transient)
        write_table(out / "quantum_poincare.csv", ["q", "p"], pts)
        print(f"{len(pts)} section points -> {out / 'quantum_poincare.csv'}")
    return 0


def _cmd_semiclassical(args) -> int:
    cfg = _load(args)
    params = cfg.params_for()
    if args.seed is not None:
        params = params.with_(seed=args.seed)
    q0, p0 = scenarios.classical_reference_point(params)
    rows = evolve_gaussian(params, gaussian_coherent(q0, p0),
                           args.periods * params.period)
    out = cfg.out_dir
    write_table(out / "semiclassical_trajectory.csv",
                ["t", "q", "p", "vqq", "vpp", "vqp"], rows)
    print(f"{len(rows)} samples -> {out / 'semiclassical_trajectory.csv'}")
    return 0


def _cmd_wigner(args) -> int:
    cfg = _load(args)
    params = cfg.params_for()
    initial = _initial_state(cfg, args.state, params)
    grid = wigner_transform(initial)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    save_grid(out / "wigner_grid.txt", grid)
    print(f"negativity {negativity(grid):.6f} -> {out / 'wigner_grid.txt'}")
    return 0


def _cmd_lyapunov(args) -> int:
    cfg = _load(args)
    params = cfg.params_for()
    if args.process == "classical":
        x0, v0 = scenarios.classical_reference_point(params)

        def factory(r):
            return ClassicalTwinPair(params, x0, v0)
    elif args.process == "quantum":
        q0, p0 = scenarios.classical_reference_point(params)
        initial = coherent_state((q0 + 1j * p0) / math.sqrt(2.0),
                                 params.n_levels)

        def factory(r):
            return QuantumTwinPair(params, initial)
    else:
        anchors = scenarios.attractor_anchors(params)

        def factory(r):
            q0, p0 = anchors[(r * 37) % len(anchors)]
            return GaussianTwinPair(params, gaussian_coherent(q0, p0))

    est = estimate_lyapunov(factory, d0=cfg.d0,
                            reset_interval=cfg.reset_interval,
                            total_cycles=cfg.total_cycles,
                            discard_cycles=cfg.discard_cycles,
                            n_realizations=cfg.n_realizations,
                            master_seed=cfg.master_seed)
    out = cfg.out_dir
    write_table(out / f"lyapunov_{args.process}.csv",
                ["realization", "lambda"],
                np.column_stack([np.arange(len(est.lambdas)), est.lambdas]))
    print(f"lambda = {est.lambda_mean:+.4f} +- {est.sem:.4f} "
          f"({est.n_realizations} realizations, {est.n_resets} resets)")
    return 0


def _cmd_sweep_phi(args) -> int:
    cfg = _load(args)
    table = scenarios.run_phi_sweep(cfg, jobs=args.jobs)
    for row in table:
        print(f"phi={row[0]:.4f}  lambda={row[1]:+.4f}+-{row[2]:.4f}  "
              f"delta={row[3]:.4f}+-{row[4]:.4f}")
    return 0


def _cmd_sweep_beta(args) -> int:
    cfg = _load(args)
    table = scenarios.run_beta_sweep(cfg, jobs=args.jobs)
    for row in table:
        print(f"beta={row[0]:.3f} phi={row[1]:.4f}  "
              f"lambda_q={row[2]:+.4f}+-{row[3]:.4f}  "
              f"lambda_semi={row[4]:+.4f}+-{row[5]:.4f}  delta={row[6]:.4f}")
    return 0


def _cmd_negativity(args) -> int:
    cfg = _load(args)
    table, surge = scenarios.run_negativity_timeseries(cfg, jobs=args.jobs)
    for phi, t in sorted(surge.items()):
        label = f"{t:.3f}" if math.isfinite(t) else "never"
        print(f"phi={phi:.4f}  surge time {label}")
    print(f"{len(table)} rows -> {cfg.out_dir / 'negativity_timeseries.csv'}")
    return 0


def _cmd_cat_fringe(args) -> int:
    cfg = _load(args)
    table = scenarios.run_cat_fringe_experiment(cfg, jobs=args.jobs)
    for row in table:
        print(f"phi={row[0]:.4f}  rate={row[1]:.4f}  "
              f"weight_drift={row[4]:.4f}  frozen={row[5]:.3f}")
    return 0


def _cmd_residence(args) -> int:
    cfg = _load(args)
    table = scenarios.run_residence(cfg, jobs=args.jobs)
    for row in table:
        print(f"phi={row[0]:.4f}  frac_periodic={row[1]:.4f}+-{row[2]:.4f}  "
              f"transitions={row[4]:.1f}")
    return 0


def _cmd_validate(args) -> int:
    cfg = _load(args) if args.config is not None else None
    checks = scenarios.validate(cfg)
    failed = 0
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        failed += not c.passed
        print(f"{status}  {c.name}: {c.measured}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qduff",
        description="Monitored driven Duffing oscillator: trajectories, "
                    "exponents, negativity, and sweep experiments.")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("classical", help="classical trajectory or section")
    _add_common(sub)
    sub.add_argument("--poincare", action="store_true")
    sub.add_argument("--points", type=int, default=500)
    sub.add_argument("--periods", type=float, default=50.0)
    sub.add_argument("--x0", type=float, default=0.5)
    sub.add_argument("--v0", type=float, default=0.0)
    sub.set_defaults(func=_cmd_classical)

    sub = subs.add_parser("trajectory", help="one monitored quantum trajectory")
    _add_common(sub)
    sub.add_argument("--periods", type=float, default=20.0)
    sub.add_argument("--state", choices=("coherent", "cat", "vacuum"),
                     default="coherent")
    sub.add_argument("--poincare", action="store_true")
    sub.add_argument("--transient", type=int, default=10,
                     help="periods dropped before the section")
    sub.set_defaults(func=_cmd_trajectory)

    sub = subs.add_parser("semiclassical", help="one Gaussian-closure trajectory")
    _add_common(sub)
    sub.add_argument("--periods", type=float, default=20.0)
    sub.set_defaults(func=_cmd_semiclassical)

    sub = subs.add_parser("wigner", help="Wigner grid and negativity of a state")
    _add_common(sub)
    sub.add_argument("--state", choices=("coherent", "cat", "vacuum"),
                     default="cat")
    sub.set_defaults(func=_cmd_wigner)

    sub = subs.add_parser("lyapunov", help="one exponent estimate")
    _add_common(sub)
    sub.add_argument("--process", choices=("classical", "quantum", "semiclassical"),
                     default="quantum")
    sub.set_defaults(func=_cmd_lyapunov)

    for name, func, blurb in (
        ("sweep-phi", _cmd_sweep_phi, "exponent and negativity vs phase"),
        ("sweep-beta", _cmd_sweep_beta, "exponents vs quantumness"),
        ("negativity", _cmd_negativity, "ensemble negativity time series"),
        ("cat-fringe", _cmd_cat_fringe, "cat decay rate vs phase"),
        ("residence", _cmd_residence, "periodic-orbit residence vs phase"),
    ):
        sub = subs.add_parser(name, help=blurb)
        _add_common(sub)
        sub.set_defaults(func=func)

    sub = subs.add_parser("validate", help="fast invariant suite")
    _add_common(sub)
    # validate can run without a config; relax the shared flag
    for action in sub._actions:
        if action.dest == "config":
            action.required = False
            action.default = None
    sub.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
