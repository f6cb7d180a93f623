import math

import numpy as np
import pandas as pd
import pytest

from vwsgibbs import sim
from vwsgibbs.ingest import SimulationSettings, simulate_dataset

TIMING = ("elapsed",)


def same_rows(a, b):
    # row tables equal apart from wall-clock columns, NaN matching NaN
    fa = pd.DataFrame(a).drop(columns=list(TIMING), errors="ignore")
    fb = pd.DataFrame(b).drop(columns=list(TIMING), errors="ignore")
    return fa.equals(fb)


# conditional study


def test_imh_cell_rejection_fraction():
    grid = sim.ConditionalGrid()
    row, chain = sim.imh_conditional_cell(10.0, 0.5, grid, np.random.default_rng(0))
    assert chain.size == 200_000
    assert row["rejection_fraction"] == pytest.approx(175_247 / 200_000, abs=0.02)


def test_empty_trajectories():
    grid = sim.ConditionalGrid(reps=1, draws=0, imh_steps=0)
    res = sim.run_conditional_study(grid, seed=1)
    assert res.trajectory_rows() == [] and res.imh == []
    for row in res.vws_rows():
        assert (row["rejections"], row["knots_added"], row["knots_removed"]) == (0, 0, 0)


def test_grid_validation():
    with pytest.raises(ValueError):
        sim.ConditionalGrid(reps=0)
    g = sim.ConditionalGrid.from_dict({"kappas": 10, "taus": [0.5, 1.0], "reps": 3})
    assert g.kappas == (10.0,) and g.taus == (0.5, 1.0) and g.reps == 3


def test_conditional_study_deterministic(tmp_path):
    grid = sim.ConditionalGrid(kappas=(10.0,), taus=(0.5, 1.0), eps1=(0.75,), eps2=(0.01,), reps=20, draws=5,
                               imh_steps=1000)
    a = sim.run_conditional_study(grid, seed=3)
    b = sim.run_conditional_study(grid, seed=3)
    assert a.trajectory_rows() == b.trajectory_rows()
    assert same_rows(a.vws_rows(), b.vws_rows())
    assert same_rows(a.imh, b.imh)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    assert (tmp_path / "a" / "conditional_trajectories.csv").read_bytes() == \
        (tmp_path / "b" / "conditional_trajectories.csv").read_bytes()
    traj = pd.read_csv(tmp_path / "a" / "conditional_trajectories.csv")
    assert len(traj) == 2 * 5 and set(traj["draw"]) == {1, 2, 3, 4, 5}
    c = a.cell(10.0, 1.0, 0.75, 0.01)
    assert c.rho.shape == (20, 5)
    with pytest.raises(KeyError):
        a.cell(50.0, 1.0, 0.75, 0.01)


def test_trajectory_bound_decreases():
    grid = sim.ConditionalGrid(reps=200, draws=20)
    cell = sim.vws_conditional_cell(50.0, 0.5, 0.75, 0.01, grid, np.random.default_rng(4))
    med = cell.median_rho()
    assert med[0] >= med[-1]
    assert np.all(cell.rho >= 0) and np.all(cell.rho <= 1)


# posterior study


def tiny_levels(**kw):
    base = dict(ms=(20,), eps1=(0.5, 0.85), eps2=(1e-3,), reps=2, vwg_iterations=150, vwg_burn=50,
                mwg_iterations=300, mwg_burn=200)
    base.update(kw)
    return sim.PosteriorLevels(**base)


def test_posterior_study_shape_and_determinism(tmp_path):
    levels = tiny_levels()
    a = sim.run_posterior_study(levels, seed=5)
    assert len(a.rows) == 2 * (1 + 2)
    table = a.level_table()
    assert {(r["sampler"], r["eps1"]) for r in table if r["sampler"] == "vwg"} == {("vwg", 0.5), ("vwg", 0.85)}
    row = a.level("vwg", 20, 0.85, 1e-3)
    for k in ("sigma2_ess_min", "sigma2_ess_q1", "sigma2_ess_q2.5", "theta_ess_min", "mess", "rejections",
              "knot_updates_burn", "knot_updates_keep", "elapsed"):
        assert k in row
    assert a.level("mwg", 20)["reps"] == 2
    b = sim.run_posterior_study(levels, seed=5, workers=2)
    assert same_rows(a.rows, b.rows)
    assert same_rows(a.level_table(), b.level_table())
    a.write(tmp_path)
    assert (tmp_path / "posterior_levels.csv").exists() and (tmp_path / "posterior_reps.csv").exists()


def test_common_datasets_across_levels():
    res = sim.run_posterior_study(tiny_levels(run_mwg=False, reps=1), seed=6)
    data, _ = simulate_dataset(SimulationSettings(m=20), sim._stream(6, sim.DATA_STREAM, 0, 0))
    assert len(res.rows) == 2 and data.m == 20


def test_posterior_levels_validation():
    with pytest.raises(ValueError):
        sim.PosteriorLevels(reps=0)
    with pytest.raises(ValueError):
        sim.PosteriorLevels(sigma2_init="random")
    full = sim.PosteriorLevels.full_scale()
    assert len(full.ms) * len(full.eps1) * len(full.eps2) == 18 and full.reps == 500
    lv = sim.PosteriorLevels.from_dict({"ms": 50, "eps1": [0.5], "reps": 3})
    assert lv.ms == (50,) and lv.eps1 == (0.5,)


def test_streams_are_independent_of_order():
    a = sim._stream(7, 1, 0, 3).random(3)
    sim._stream(7, 1, 0, 2).random(100)
    b = sim._stream(7, 1, 0, 3).random(3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sim._stream(7, 1, 0, 4).random(3))


def test_vwg_rejections_at_coarse_tolerance():
    # averaged rejections at m=500, eps1=0.85, eps2=1e-2 within 15% of 677,983
    levels = sim.PosteriorLevels(ms=(500,), eps1=(0.85,), eps2=(1e-2,), reps=10, run_mwg=False)
    res = sim.run_posterior_study(levels, seed=2024)
    assert res.level("vwg", 500, 0.85, 1e-2)["rejections"] == pytest.approx(677_983, rel=0.15)


# data analysis


def test_data_analysis_outputs(tmp_path):
    data, _ = simulate_dataset(SimulationSettings(m=30), np.random.default_rng(8))
    sched = {"mwg": (600, 400), "vwg": (300, 100), "vwg-basic": (300, 100)}
    res = sim.run_data_analysis(data, seed=1, schedules=sched)
    assert [r["sampler"] for r in res.comparison] == ["mwg", "vwg-basic", "vwg"]
    assert len(res.ratios) == 30
    assert set(res.ratios[0]) == {"area", "mwg_ess", "vwg_ess", "mean_ratio", "width_ratio"}
    assert len(res.knot_series) == 300
    for r in res.knot_series:
        assert r["log10_1p"] == pytest.approx(math.log10(1 + r["knot_updates"]))
    assert [r["variable"] for r in res.summary] == ["beta_0", "beta_1", "gamma_0", "gamma_1", "phi2", "tau2"]
    assert all("ess_mwg" in r for r in res.summary)
    res.write(tmp_path)
    for f in ("sampler_comparison.csv", "parameter_summary.csv", "knot_updates.csv", "sigma2_ratios.csv"):
        assert (tmp_path / f).exists()
