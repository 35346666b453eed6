"""Experiment orchestration: config parsing, per-cell persistence and
seeding, sweep runners at micro scale, and the analytic cat model.

Oracles here are structural (determinism, concatenation, resumability)
plus the Ito properties of the two-coefficient cat model: perpendicular
alignment freezes the normalized weights, parallel alignment is a bounded
martingale that collapses to 0 or 1 with equal probability.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from qduff.fock import SimParams
from qduff.io import read_table, write_table
import qduff.scenarios as sc

CHAOTIC = SimParams(gamma=0.10, g=0.3, omega=1.0, beta=0.3, u_abs=1.0,
                    phi=math.pi, basis_size=65)
REGULAR = SimParams(gamma=0.05, g=0.3, omega=1.0, beta=0.1, u_abs=1.0,
                    phi=math.pi, basis_size=35)
PHASES = (math.pi / 2.0, math.pi)


def micro_config(out_dir, **overrides):
    kw = dict(scenario="micro", base=CHAOTIC, phi_values=PHASES,
              total_cycles=2, discard_cycles=1, n_realizations=2,
              negativity_periods=2.0, negativity_window=1.0,
              out_dir=out_dir, master_seed=11)
    kw.update(overrides)
    return sc.ExperimentConfig(**kw)


@pytest.fixture(scope="module")
def full_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("full")
    cfg = micro_config(out)
    return cfg, sc.run_phi_sweep(cfg)


# -------------------------------------------------------------------- io


def test_table_round_trip(tmp_path):
    header = ["a", "b", "flag"]
    rows = [[1.0 / 3.0, -2.5e-17, 1.0], [math.pi, 7.0, 0.0]]
    path = tmp_path / "deep" / "t.csv"
    write_table(path, header, rows)
    h2, data = read_table(path)
    assert h2 == header
    assert np.array_equal(data, np.array(rows))  # 17 digits round-trip exactly


def test_read_empty_table(tmp_path):
    path = tmp_path / "e.csv"
    write_table(path, ["x", "y"], [])
    h, data = read_table(path)
    assert h == ["x", "y"]
    assert data.shape == (0, 2)


# ---------------------------------------------------------------- config


def test_config_defaults_fill_sweeps():
    cfg = sc.ExperimentConfig(scenario="t", base=CHAOTIC)
    assert cfg.phi_values == (CHAOTIC.phi,)
    assert cfg.beta_values == (CHAOTIC.beta,)
    cfg.validate()


def test_config_validation_rejects():
    with pytest.raises(ValueError):
        micro_config(Path("x"), d0=0.0).validate()
    with pytest.raises(ValueError):
        micro_config(Path("x"), total_cycles=1, discard_cycles=1).validate()
    with pytest.raises(ValueError):
        micro_config(Path("x"), negativity_window=5.0,
                     negativity_periods=2.0).validate()


def test_params_for_applies_auto_basis_and_cap():
    cfg = sc.ExperimentConfig(scenario="t",
                              base=SimParams(beta=0.3),  # auto basis
                              beta_values=(0.1, 0.3), basis_cap=65)
    assert cfg.params_for(beta=0.1).n_levels == 65    # capped from 200
    assert cfg.params_for(beta=0.3).n_levels == 65    # capped from 67
    uncapped = sc.ExperimentConfig(scenario="t", base=SimParams(beta=0.3),
                                   beta_values=(0.1,))
    assert uncapped.params_for(beta=0.1).n_levels == 200


def test_load_config_rejects_negative_dt(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[system]\ndt = -0.1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        sc.load_config(bad)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        sc.load_config(tmp_path / "nope.ini")


def test_shipped_configs_parse_and_validate():
    configs = sorted(Path(sc.__file__).parent.glob("configs/*.ini"))
    assert len(configs) == 6
    for path in configs:
        cfg = sc.load_config(path)
        assert cfg.scenario
        smoke = sc.load_config(path, profile="smoke")
        assert smoke.total_cycles <= sc.SMOKE_CYCLES
        assert smoke.n_realizations <= sc.SMOKE_REALIZATIONS


def test_smoke_profile_caps(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text(
        "[experiment]\nscenario = s\nmaster_seed = 9\n"
        "[system]\ngamma = 0.1\nbeta = 0.2\nbasis_size = auto\n"
        "[sweep]\nphi = 0.0, 1.0\n"
        "[protocol]\ntotal_cycles = 400\nn_realizations = 12\n",
        encoding="utf-8")
    cfg = sc.load_config(ini, profile="smoke", out_dir=tmp_path)
    assert cfg.total_cycles == sc.SMOKE_CYCLES
    assert cfg.n_realizations == sc.SMOKE_REALIZATIONS
    assert cfg.params_for().n_levels == sc.SMOKE_BASIS_CAP  # auto 100 capped
    assert cfg.master_seed == 9
    with pytest.raises(ValueError):
        sc.load_config(ini, profile="fast")


# --------------------------------------------------------------- seeding


def test_cell_seed_determinism():
    a = sc.cell_seed(7, "s", "qlam", phi=math.pi, beta=0.3, realization=2)
    assert a == sc.cell_seed(7, "s", "qlam", phi=math.pi, beta=0.3,
                             realization=2)
    # every coordinate matters
    assert a != sc.cell_seed(8, "s", "qlam", phi=math.pi, beta=0.3,
                             realization=2)
    assert a != sc.cell_seed(7, "t", "qlam", phi=math.pi, beta=0.3,
                             realization=2)
    assert a != sc.cell_seed(7, "s", "qdel", phi=math.pi, beta=0.3,
                             realization=2)
    assert a != sc.cell_seed(7, "s", "qlam", phi=math.pi / 2, beta=0.3,
                             realization=2)
    assert a != sc.cell_seed(7, "s", "qlam", phi=math.pi, beta=0.3,
                             realization=3)
    # keyed by value, not grid index: independent of any sweep context
    assert 0 <= a < 2 ** 64


# --------------------------------------------------- sweep engine behavior


def test_phi_sweep_shape_and_order(full_sweep):
    cfg, table = full_sweep
    assert table.shape == (2, 6)
    assert list(table[:, 0]) == sorted(cfg.phi_values)
    assert np.all(table[:, 5] == cfg.n_realizations)
    assert (cfg.out_dir / "phi_sweep.csv").exists()


def test_phi_sweep_resumes_from_cells(full_sweep):
    cfg, table = full_sweep
    again = sc.run_phi_sweep(cfg)  # all cells on disk: reload only
    assert np.array_equal(table, again)


def test_half_sweeps_concatenate_bit_for_bit(full_sweep, tmp_path):
    cfg, table = full_sweep
    half = micro_config(tmp_path, phi_values=(PHASES[0],))
    sc.run_phi_sweep(half)
    both = micro_config(tmp_path)
    assert np.array_equal(sc.run_phi_sweep(both), table)


def test_single_phi_degenerates_to_one_row(tmp_path):
    cfg = micro_config(tmp_path, phi_values=(math.pi,))
    table = sc.run_phi_sweep(cfg)
    assert table.shape == (1, 6)


def test_failed_cell_leaves_marker_and_raises(tmp_path):
    # basis far too small: the truncation guard aborts the trajectory
    tiny = CHAOTIC.with_(basis_size=16)
    cfg = micro_config(tmp_path, base=tiny, phi_values=(math.pi,))
    with pytest.raises(RuntimeError, match="cell"):
        sc.run_phi_sweep(cfg)
    markers = list((tmp_path / "cells").glob("*.failed"))
    assert markers
    assert "Error" in markers[0].read_text()  # diagnosable from the marker


def test_beta_sweep_plumbing(tmp_path):
    cfg = micro_config(tmp_path, scenario="beta-micro", beta_values=(0.3,))
    table = sc.run_beta_sweep(cfg)
    assert table.shape == (2, 8)                     # one beta, two phases
    assert np.all(table[:, 0] == 0.3)
    assert list(table[:, 1]) == sorted(PHASES)
    assert np.all(np.isfinite(table[:, 2:]))


def test_negativity_timeseries_starts_positive_free(tmp_path):
    cfg = micro_config(tmp_path, scenario="nt-micro", phi_values=(math.pi,))
    table, surge = sc.run_negativity_timeseries(cfg)
    assert table[0, 1] == 0.0                        # t = 0 row first
    assert table[0, 2] < 1e-3                        # coherent start
    assert set(surge) == {math.pi}
    ts = table[:, 1]
    assert np.all(np.diff(ts) > 0)


# -------------------------------------------------------- reference points


def test_classical_reference_point_deterministic():
    a = sc.classical_reference_point(CHAOTIC)
    b = sc.classical_reference_point(CHAOTIC)
    assert a == b
    assert all(math.isfinite(v) for v in a)


def test_attractor_anchors_regular_is_orbit():
    anchors = sc.attractor_anchors(REGULAR)
    from qduff.classical import periodic_orbit
    assert np.array_equal(anchors, periodic_orbit(REGULAR))


def test_attractor_anchors_chaotic_samples():
    anchors = sc.attractor_anchors(CHAOTIC)
    assert anchors.shape == (257, 2)   # 64 periods, 4 per period, endpoints in
    assert np.all(np.isfinite(anchors))
    assert anchors[:, 0].max() > 1.0 / CHAOTIC.beta  # spans the attractor


# ------------------------------------------------------- analytic cat model


def test_cat_coefficients_normalize():
    c = sc.CatCoefficients(3.0, 4.0j, alpha=2.0)
    assert abs(c.c_plus) ** 2 + abs(c.c_minus) ** 2 == pytest.approx(1.0)
    assert c.varphi == 0.0
    with pytest.raises(ValueError):
        sc.CatCoefficients(0.0, 0.0, alpha=2.0)


def test_cat_step_zero_increment_is_identity():
    c = sc.CatCoefficients(1.0, 1.0, alpha=2.0)
    c2 = sc.cat_coefficient_step(c, 0.7, 1e-3, 0.0)
    assert c2.c_plus == c.c_plus and c2.c_minus == c.c_minus


def test_cat_perpendicular_weights_frozen():
    # multiplier purely imaginary up to cos(pi/2) rounding ~ 1e-16/step
    rng = np.random.default_rng(5)
    c = sc.CatCoefficients(1.0, 1.0, alpha=2.0)
    for _ in range(1000):
        c = sc.cat_coefficient_step(c, math.pi / 2.0, 1e-3, rng.normal(0, math.sqrt(1e-3)))
    assert abs(c.weight_plus - 0.5) < 1e-12


def test_cat_parallel_collapse_martingale():
    # tau = |alpha|^2 t = 16 >> 1: nearly all paths frozen; outcome
    # frequencies follow the initial weight (bounded martingale)
    n_paths, n_steps, dt = 10_000, 4000, 1e-3
    rng = np.random.default_rng(12)
    alpha = 2.0
    cp = np.full(n_paths, 1.0 / math.sqrt(2.0), dtype=np.complex128)
    cm = cp.copy()
    for _ in range(n_steps):
        m = alpha * rng.normal(0.0, math.sqrt(dt), n_paths)  # varphi - phi = 0
        cp, cm = cp * (1.0 + m), cm * (1.0 - m)
        norm = np.sqrt(np.abs(cp) ** 2 + np.abs(cm) ** 2)
        cp /= norm
        cm /= norm
    w = np.abs(cp) ** 2
    frozen = (w > 0.95) | (w < 0.05)
    assert frozen.mean() > 0.8  # near-0.5 paths linger; 0.85 measured
    up = (w > 0.5).mean()
    three_sigma = 3.0 * math.sqrt(0.25 / n_paths)
    assert abs(up - 0.5) < three_sigma
    assert abs(w.mean() - 0.5) < 3.0 * w.std() / math.sqrt(n_paths)


def test_cat_step_matches_vectorized_model():
    # the scalar step and the Monte Carlo loop implement the same map
    rng = np.random.default_rng(3)
    c = sc.CatCoefficients(0.8, 0.6j, alpha=1.5 + 0.5j)
    phi = 0.9
    cp, cm = np.array([c.c_plus]), np.array([c.c_minus])
    varphi = c.varphi
    for _ in range(5):
        dw = float(rng.normal(0.0, 0.1))
        c = sc.cat_coefficient_step(c, phi, 1e-2, dw)
        m = abs(1.5 + 0.5j) * complex(math.cos(varphi - phi),
                                      math.sin(varphi - phi)) * dw
        cp, cm = cp * (1.0 + m), cm * (1.0 - m)
        norm = np.sqrt(np.abs(cp) ** 2 + np.abs(cm) ** 2)
        cp, cm = cp / norm, cm / norm
    assert c.c_plus == pytest.approx(complex(cp[0]))
    assert c.c_minus == pytest.approx(complex(cm[0]))


def test_cat_model_stats_contrast():
    rng = np.random.default_rng(8)
    drift_par, frozen_par = sc._cat_model_stats(2.0, 0.0, rng, 400, 1500, 1e-3)
    rng = np.random.default_rng(8)
    drift_perp, frozen_perp = sc._cat_model_stats(2.0, math.pi / 2.0, rng,
                                                  400, 1500, 1e-3)
    assert drift_par > 0.3
    assert frozen_par > 0.5
    assert drift_perp < 1e-10
    assert frozen_perp == 0.0
