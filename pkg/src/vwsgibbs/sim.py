"""Experiment drivers: single-conditional study, posterior study, data analysis.

Every run derives its generator streams from one master seed through
``numpy.random.SeedSequence`` spawn keys, so results do not depend on how
work is scheduled across processes.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import vws
from .ingest import SimulationSettings, simulate_dataset
from .sae import ConditionalParams, SamplerConfig, default_init, imh_chain, run_sampler

IMH_ARM = 0
VWS_ARM = 1
DATA_STREAM = 0
CHAIN_STREAM = 1


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


# Single-conditional study ---------------------------------------------------


@dataclass(frozen=True)
class ConditionalGrid:
    """Settings for the single-conditional study.

    The VWS arm runs ``reps`` independent repetitions of ``draws`` draws from
    a fresh proposal with no internal knots; the IMH arm runs one chain of
    ``imh_steps`` steps per (kappa, tau) cell, started at the target mode.
    """

    kappas: tuple = (10.0, 50.0)
    taus: tuple = (0.5, 1.0)
    eps1: tuple = (0.75, 0.50)
    eps2: tuple = (0.01, 0.001)
    mu: float = 0.0
    rate: float = 1.0
    reps: int = 1000
    draws: int = 20
    imh_steps: int = 200_000
    max_rejections: int = 1_000_000
    capacity: int = 512

    def __post_init__(self):
        if self.reps < 1 or self.draws < 0 or self.imh_steps < 0:
            raise ValueError("need reps >= 1, draws >= 0 and imh_steps >= 0")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("kappas", "taus", "eps1", "eps2"):
            if k in d:
                d[k] = tuple(float(v) for v in np.atleast_1d(d[k]))
        return cls(**d)


@dataclass
class ConditionalCell:
    kappa: float
    tau: float
    eps1: float
    eps2: float
    rho: np.ndarray  # reps x draws, bound after each accepted draw
    knots: np.ndarray  # reps x draws, internal knot count after each draw
    rejections: int
    added: int
    removed: int
    elapsed: float

    def median_rho(self):
        return np.median(self.rho, axis=0) if self.rho.size else np.empty(0)

    def median_knots(self):
        return np.median(self.knots, axis=0) if self.knots.size else np.empty(0)


def vws_conditional_cell(kappa, tau, eps1, eps2, grid, rng):
    """Repeated self-tuned draws from one conditional, each rep from scratch."""
    bank = vws.ProposalBank(1, capacity=grid.capacity)
    rho = np.zeros((grid.reps, grid.draws))
    knots = np.zeros((grid.reps, grid.draws))
    totals = np.zeros(vws.STATS_WIDTH, dtype=np.int64)
    t0 = time.perf_counter()
    for r in range(grid.reps):
        vws._clear_row(bank.arrays, 0)
        vws._retarget(bank.arrays, 0, vws.WEIGHT_INVERSE_GAMMA, kappa, grid.rate, grid.mu, tau)
        st = np.zeros(vws.STATS_WIDTH, dtype=np.int64)
        if grid.draws:
            vws.conditional_draws(bank.arrays, 0, grid.draws, eps1, eps2, rng, grid.max_rejections, rho[r], knots[r], st)
        if st[vws.ST_STATUS] != vws.STATUS_OK:
            raise vws.IterationCapError(f"cell kappa={kappa}, tau={tau}: no acceptance within the rejection cap")
        totals += st
    elapsed = time.perf_counter() - t0
    return ConditionalCell(kappa, tau, eps1, eps2, rho, knots, int(totals[vws.ST_REJECTIONS]),
                           int(totals[vws.ST_ADDED]), int(totals[vws.ST_REMOVED]), elapsed)


def imh_conditional_cell(kappa, tau, grid, rng):
    params = ConditionalParams(mu=grid.mu, shape=kappa, rate=grid.rate, tau2=tau * tau)
    t0 = time.perf_counter()
    chain, rej = imh_chain(params, grid.imh_steps, rng)
    elapsed = time.perf_counter() - t0
    row = {"kappa": kappa, "tau": tau, "steps": grid.imh_steps, "rejections": rej,
           "rejection_fraction": rej / grid.imh_steps if grid.imh_steps else math.nan, "elapsed": elapsed}
    if grid.imh_steps >= 100:
        row["ess"] = diag.ess(chain, "auto")
        row["ess_sqroot"] = diag.ess(chain)
        row["rho1"] = diag.autocorr(chain, 1)
    return row, chain


@dataclass
class ConditionalResults:
    cells: list
    imh: list
    grid: ConditionalGrid
    notes: list = field(default_factory=list)

    def trajectory_rows(self):
        """Long-format median bound and knot count per draw (plot data)."""
        rows = []
        for c in self.cells:
            for j, (r, k) in enumerate(zip(c.median_rho(), c.median_knots())):
                rows.append({"kappa": c.kappa, "tau": c.tau, "eps1": c.eps1, "eps2": c.eps2, "draw": j + 1,
                             "median_rho_plus": float(r), "log_median_rho_plus": math.log(r) if r > 0 else -math.inf,
                             "median_knots": float(k)})
        return rows

    def vws_rows(self):
        rows = []
        for c in self.cells:
            rows.append({"eps1": c.eps1, "eps2": c.eps2, "kappa": c.kappa, "tau": c.tau, "reps": c.rho.shape[0],
                         "elapsed": c.elapsed, "rejections": c.rejections, "knots_added": c.added,
                         "knots_removed": c.removed})
        return rows

    def cell(self, kappa, tau, eps1, eps2):
        for c in self.cells:
            if (c.kappa, c.tau, c.eps1, c.eps2) == (kappa, tau, eps1, eps2):
                return c
        raise KeyError((kappa, tau, eps1, eps2))

    def write(self, outdir):
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        diag.rows_to_csv(self.trajectory_rows(), outdir / "conditional_trajectories.csv")
        diag.rows_to_csv(self.vws_rows(), outdir / "conditional_vws.csv")
        diag.rows_to_csv(self.imh, outdir / "conditional_imh.csv")
        diag.to_json({"grid": asdict(self.grid), "notes": self.notes}, outdir / "conditional_meta.json")


def run_conditional_study(grid=None, seed=0, imh=True):
    """Single-conditional study: IMH chains and self-tuned VWS trajectories.

    Streams: the IMH cell (a, b) uses key ``(0, a, b)``; the VWS cell
    ``(a, b, c, d)`` over the kappa, tau, eps1, eps2 grids uses
    ``(1, a, b, c, d)``.
    """
    grid = grid or ConditionalGrid()
    cells, imh_rows = [], []
    for a, kappa in enumerate(grid.kappas):
        for b, tau in enumerate(grid.taus):
            if imh and grid.imh_steps:
                row, _ = imh_conditional_cell(kappa, tau, grid, _stream(seed, IMH_ARM, a, b))
                imh_rows.append(row)
    for c, e1 in enumerate(grid.eps1):
        for d, e2 in enumerate(grid.eps2):
            for a, kappa in enumerate(grid.kappas):
                for b, tau in enumerate(grid.taus):
                    rng = _stream(seed, VWS_ARM, a, b, c, d)
                    cells.append(vws_conditional_cell(kappa, tau, e1, e2, grid, rng))
    notes = ["tau levels follow the stated design {0.5, 1.0}; some published table rows label the second level 1.5"]
    return ConditionalResults(cells, imh_rows, grid, notes)


# Posterior study ------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorLevels:
    """Levels and schedules for the posterior study.

    Datasets are shared across tolerance levels with the same ``m`` (common
    random numbers), and MWG runs once per dataset since it ignores the
    tolerances. ``sigma2_init="data"`` starts the latent variances at the
    direct estimates; ``"ones"`` starts them at 1.
    """

    ms: tuple = (500,)
    eps1: tuple = (0.85,)
    eps2: tuple = (1e-4,)
    reps: int = 10
    vwg_iterations: int = 3000
    vwg_burn: int = 1000
    mwg_iterations: int = 30_000
    mwg_burn: int = 28_000
    run_mwg: bool = True
    sigma2_init: str = "data"
    batch_size: str = "auto"
    simulation: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError(f"need at least one repetition, got reps={self.reps}")
        if self.sigma2_init not in ("data", "ones"):
            raise ValueError("sigma2_init must be 'data' or 'ones'")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("ms", "eps1", "eps2"):
            if k in d:
                d[k] = tuple(np.atleast_1d(d[k]).tolist())
        d["ms"] = tuple(int(v) for v in d.get("ms", cls.ms))
        return cls(**d)

    @classmethod
    def full_scale(cls, **kw):
        base = dict(ms=(500, 2000), eps1=(0.5, 0.75, 0.85), eps2=(1e-4, 1e-3, 1e-2), reps=500)
        base.update(kw)
        return cls(**base)


def _initial_state(data, how):
    init = default_init(data)
    if how == "data":
        init.sigma2 = data.s2.copy()
    return init


def chain_summary(out, batch_size="auto"):
    """Per-run metrics used by the posterior study and the data analysis."""
    row = {"elapsed": out.elapsed}
    c = out.counters
    for k in ("rejections", "knot_updates_burn", "knot_updates_keep", "proposals", "accepted_draws"):
        row[k] = c.get(k, 0)
    if out.n_saved >= 100:
        for name in ("sigma2", "theta"):
            e = diag.ess(out.draws[name], batch_size=batch_size)
            q = diag.ess_quantiles(e)
            for k, v in q.items():
                row[f"{name}_ess_{k}"] = v
            row[f"{name}_ess_min_sqroot"] = float(diag.ess(out.draws[name]).min())
        try:
            row["mess"] = diag.multivariate_ess(out.theta_matrix(), batch_size=batch_size)
            row["mess_sqroot"] = diag.multivariate_ess(out.theta_matrix())
        except (diag.SingularCovarianceError, ValueError):
            row["mess"] = row["mess_sqroot"] = math.nan
    return row


def _posterior_task(task):
    seed, levels, mi, rep, sampler, li, e1, e2 = task
    settings = SimulationSettings(m=levels.ms[mi], **levels.simulation)
    data, _ = simulate_dataset(settings, _stream(seed, DATA_STREAM, mi, rep))
    if sampler == "mwg":
        cfg = SamplerConfig(sampler="mwg", iterations=levels.mwg_iterations, burn=levels.mwg_burn)
    else:
        cfg = SamplerConfig(sampler="vwg", iterations=levels.vwg_iterations, burn=levels.vwg_burn, eps1=e1, eps2=e2)
    rng = _stream(seed, CHAIN_STREAM, mi, rep, 0 if sampler == "mwg" else 1, li)
    out = run_sampler(data, cfg, init=_initial_state(data, levels.sigma2_init), rng=rng)
    row = {"sampler": sampler, "m": settings.m, "eps1": e1, "eps2": e2, "rep": rep}
    row.update(chain_summary(out, levels.batch_size))
    return row


def _tasks(levels, seed):
    tasks = []
    tol = [(e1, e2) for e1 in levels.eps1 for e2 in levels.eps2]
    for mi in range(len(levels.ms)):
        for rep in range(levels.reps):
            if levels.run_mwg:
                tasks.append((seed, levels, mi, rep, "mwg", 0, None, None))
            for li, (e1, e2) in enumerate(tol):
                tasks.append((seed, levels, mi, rep, "vwg", li, e1, e2))
    return tasks


def _map(fn, tasks, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


@dataclass
class PosteriorResults:
    rows: list
    levels: PosteriorLevels

    def level_table(self):
        """Rows averaged over repetitions, one per (sampler, m, eps1, eps2)."""
        groups = {}
        for r in self.rows:
            key = (r["sampler"], r["m"], r["eps1"], r["eps2"])
            groups.setdefault(key, []).append(r)
        out = []
        for (s, m, e1, e2), rs in groups.items():
            row = {"sampler": s, "m": m, "eps1": e1, "eps2": e2, "reps": len(rs)}
            for k in rs[0]:
                if k in row or k == "rep":
                    continue
                row[k] = float(np.mean([x[k] for x in rs]))
            out.append(row)
        return out

    def level(self, sampler, m, eps1=None, eps2=None):
        for r in self.level_table():
            if r["sampler"] == sampler and r["m"] == m and (
                sampler == "mwg" or (math.isclose(r["eps1"], eps1) and math.isclose(r["eps2"], eps2))
            ):
                return r
        raise KeyError((sampler, m, eps1, eps2))

    def write(self, outdir):
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        diag.rows_to_csv(self.rows, outdir / "posterior_reps.csv")
        diag.rows_to_csv(self.level_table(), outdir / "posterior_levels.csv")
        diag.to_json({"levels": asdict(self.levels)}, outdir / "posterior_meta.json")


def run_posterior_study(levels=None, seed=0, workers=1):
    """Posterior study over (m, eps1, eps2) levels with ``levels.reps`` datasets each.

    Repetition ``rep`` at size index ``mi`` draws its dataset from stream
    ``(0, mi, rep)`` and its chains from ``(1, mi, rep, sampler, level)``.
    """
    levels = levels or PosteriorLevels()
    rows = _map(_posterior_task, _tasks(levels, seed), workers)
    return PosteriorResults(rows, levels)


# Data analysis --------------------------------------------------------------


@dataclass
class AnalysisResults:
    comparison: list
    summary: list
    knot_series: list
    ratios: list
    chains: dict

    def write(self, outdir):
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        diag.rows_to_csv(self.comparison, outdir / "sampler_comparison.csv")
        diag.rows_to_csv(self.summary, outdir / "parameter_summary.csv")
        diag.rows_to_csv(self.knot_series, outdir / "knot_updates.csv")
        diag.rows_to_csv(self.ratios, outdir / "sigma2_ratios.csv")


def run_data_analysis(data, seed=0, samplers=("mwg", "vwg-basic", "vwg"), eps1=0.85, eps2=1e-4,
                      max_regions=50, sigma2_init="data", batch_size="auto", schedules=None):
    """Compare samplers on one dataset.

    Returns the sampler comparison (ESS quantiles of sigma2, elapsed,
    rejections), a parameter summary from self-tuned VWG with MWG ESS
    alongside, per-iteration knot updates, and per-area ratios of MWG to
    VWG posterior means and 90% interval widths.
    """
    schedules = {"mwg": (30_000, 28_000), "vwg": (3000, 1000), "vwg-basic": (3000, 1000), **(schedules or {})}
    outs = {}
    for k, s in enumerate(samplers):
        it, burn = schedules[s]
        cfg = SamplerConfig(sampler=s, iterations=it, burn=burn, eps1=eps1, eps2=eps2, max_regions=max_regions)
        outs[s] = run_sampler(data, cfg, init=_initial_state(data, sigma2_init), rng=_stream(seed, CHAIN_STREAM, k))
    comparison, ess_by = [], {}
    for s, out in outs.items():
        e = diag.ess(out.draws["sigma2"], batch_size=batch_size)
        ess_by[s] = e
        row = {"sampler": s, **diag.ess_quantiles(e), "elapsed": out.elapsed, "rejections": out.counters["rejections"],
               "knot_updates_burn": out.counters["knot_updates_burn"], "knot_updates_keep": out.counters["knot_updates_keep"]}
        comparison.append(row)
    summary = []
    ref = outs.get("vwg") or next(iter(outs.values()))
    names = ref.theta_names()
    rows = diag.summarize(ref.theta_matrix(), names, batch_size=batch_size)
    mwg_ess = diag.ess(outs["mwg"].theta_matrix(), batch_size=batch_size) if "mwg" in outs else None
    for j, r in enumerate(rows):
        r["ess_mwg"] = float(mwg_ess[j]) if mwg_ess is not None else math.nan
        summary.append(r)
    knot_series = []
    if "vwg" in outs:
        ku = outs["vwg"].series["knot_updates_per_iter"]
        knot_series = [{"iteration": i + 1, "knot_updates": int(v), "log10_1p": math.log10(1 + v)} for i, v in enumerate(ku)]
    ratios = []
    if "mwg" in outs and "vwg" in outs:
        a, b = outs["mwg"].draws["sigma2"], outs["vwg"].draws["sigma2"]
        qa, qb = np.quantile(a, [0.05, 0.95], axis=0), np.quantile(b, [0.05, 0.95], axis=0)
        ids = data.area_ids or tuple(str(i) for i in range(data.m))
        for i in range(data.m):
            ratios.append({"area": ids[i], "mwg_ess": float(ess_by["mwg"][i]), "vwg_ess": float(ess_by["vwg"][i]),
                           "mean_ratio": float(a[:, i].mean() / b[:, i].mean()),
                           "width_ratio": float((qa[1, i] - qa[0, i]) / (qb[1, i] - qb[0, i]))})
    return AnalysisResults(comparison, summary, knot_series, ratios, outs)
