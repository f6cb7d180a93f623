"""Joint small-area model for point estimates and their sampling variances.

Model, for areas i = 1..m::

    y_i ~ N(theta_i, sigma2_i)          theta_i ~ N(x_i' beta, phi2)
    d_i s2_i / sigma2_i ~ chi2(d_i)     log sigma2_i ~ N(z_i' gamma, tau2)

with flat priors on beta, gamma, phi2 and tau2. The Gibbs sampler scans the
six conditionals in a fixed order; the last one (each sigma2_i) is the only
non-standard draw and is handled either by an independence Metropolis step
("mwg"), by a persistent self-tuned strip proposal per area ("vwg"), or by a
fresh strip proposal refined on every draw ("vwg-basic").
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import optimize

from . import dist, vws
from .chain import ChainOutput

SAMPLERS = ("mwg", "vwg", "vwg-basic")
VARIANCE_FLOOR = 1e-8


class ModelError(ValueError):
    """Invalid data or configuration for the model."""


@dataclass(frozen=True, eq=False)
class ModelData:
    y: np.ndarray
    s2: np.ndarray
    n: np.ndarray
    d: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    area_ids: tuple = ()

    def __post_init__(self):
        for name in ("y", "s2", "n", "d"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        for name in ("X", "Z"):
            a = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, a.reshape(len(a), -1))
        m = self.y.size
        if m < 3:
            raise ModelError(f"need at least 3 areas, got {m}")
        for name in ("s2", "n", "d"):
            if getattr(self, name).size != m:
                raise ModelError(f"{name} has {getattr(self, name).size} entries, expected {m}")
        if self.X.shape[0] != m or self.Z.shape[0] != m:
            raise ModelError("design matrices must have one row per area")
        if not np.all(np.isfinite(self.y)):
            raise ModelError("y must be finite")
        if np.any(~(self.s2 > 0)):
            raise ModelError("sampling variances must be positive")
        if np.any(~(self.d >= 1)):
            raise ModelError("degrees of freedom below 1 give a negative inverse gamma shape; exclude those rows")
        for name in ("X", "Z"):
            a = getattr(self, name)
            if np.linalg.matrix_rank(a) < a.shape[1]:
                raise ModelError(f"{name} is not of full column rank")

    @property
    def m(self):
        return self.y.size

    @cached_property
    def _x_fac(self):
        return _regression_factors(self.X)

    @cached_property
    def _z_fac(self):
        return _regression_factors(self.Z)

    @property
    def shape(self):
        """Inverse gamma shapes (d - 1) / 2 of the variance conditionals."""
        return 0.5 * (self.d - 1.0)


def _regression_factors(A):
    """(projection (A'A)^-1 A', Cholesky factor of (A'A)^-1)."""
    gram_inv = np.linalg.inv(A.T @ A)
    gram_inv = 0.5 * (gram_inv + gram_inv.T)
    return gram_inv @ A.T, np.linalg.cholesky(gram_inv)


@dataclass
class ParamState:
    theta: np.ndarray
    sigma2: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    phi2: float
    tau2: float

    def copy(self):
        return ParamState(self.theta.copy(), self.sigma2.copy(), self.beta.copy(), self.gamma.copy(), self.phi2, self.tau2)


@dataclass(frozen=True)
class ConditionalParams:
    """Parameters of one variance conditional: IG(shape, rate) x LN(mu, tau2)."""

    mu: float
    shape: float
    rate: float
    tau2: float

    @property
    def tau(self):
        return math.sqrt(self.tau2)


@dataclass(frozen=True)
class SamplerConfig:
    sampler: str = "vwg"
    iterations: int = 3000
    burn: int = 1000
    eps1: float = 0.85
    eps2: float = 1e-4
    seed: int | None = None
    thin: int = 1
    max_rejections: int = 1_000_000
    max_regions: int = 50

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ModelError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if not 0 <= self.burn < self.iterations:
            raise ModelError(f"need 0 <= burn < iterations, got burn={self.burn}, iterations={self.iterations}")
        if not (0 <= self.eps1 <= 1 and 0 <= self.eps2 <= 1):
            raise ModelError("tolerances must lie in [0, 1]")
        if self.thin < 1 or self.max_rejections < 1 or self.max_regions < 1:
            raise ModelError("thin, max_rejections and max_regions must be positive")

    @classmethod
    def standard_defaults(cls, sampler, **kw):
        """MWG runs 30,000 iterations keeping the last 2,000; VWG runs 3,000 keeping 2,000."""
        if sampler == "mwg":
            kw = {"iterations": 30_000, "burn": 28_000, **kw}
        else:
            kw = {"iterations": 3_000, "burn": 1_000, **kw}
        return cls(sampler=sampler, **kw)


# Single-conditional pieces ---------------------------------------------------


def conditional_params(state, data, i):
    return ConditionalParams(
        mu=float(data.Z[i] @ state.gamma),
        shape=0.5 * (data.d[i] - 1.0),
        rate=0.5 * (data.y[i] - state.theta[i]) ** 2 + 0.5 * data.d[i] * data.s2[i],
        tau2=float(state.tau2),
    )


def sigma2_target(params):
    """Variance conditional as a weighted target: IG kernel weight, lognormal base."""
    return vws.WeightedTarget.inverse_gamma(params.shape, params.rate, params.mu, params.tau)


def log_target(x, params):
    """Unnormalized log density of the variance conditional."""
    return sigma2_target(params).log_kernel(x)


def logconcavity_boundary(mu, tau2):
    """Point beyond which the lognormal factor's log density is convex.

    The conditional is therefore not log-concave on (0, inf), which rules out
    envelope methods that need log-concavity.
    """
    if not tau2 > 0:
        raise ValueError("tau2 must be positive")
    return math.exp(mu + 1.0 - tau2)


def target_mode(params, tol=1e-8, max_iter=100):
    """Maximizer of the conditional density, found on the log scale.

    With ``t = log x`` the log density is ``-(shape+2) t - rate e^-t -
    (t-mu)^2 / (2 tau2)``, strictly concave, so a Newton iteration kept inside
    a sign-change bracket of the derivative converges quickly.
    """
    a = params.shape + 2.0
    lam, mu, tau2 = params.rate, params.mu, params.tau2

    def grad(t):
        return -a + lam * math.exp(-t) - (t - mu) / tau2

    def hess(t):
        return -lam * math.exp(-t) - 1.0 / tau2

    lo, hi = mu - 1.0, mu + 1.0
    while grad(lo) < 0:
        lo -= 2.0 * (hi - lo)
    while grad(hi) > 0:
        hi += 2.0 * (hi - lo)
    t = 0.5 * (lo + hi)
    for _ in range(max_iter):
        g = grad(t)
        if abs(g) < tol:
            return math.exp(t)
        if g > 0:
            lo = t
        else:
            hi = t
        step = t - g / hess(t)
        t = step if lo < step < hi else 0.5 * (lo + hi)
    res = optimize.minimize_scalar(lambda s: -(-a * s - lam * math.exp(-s) - (s - mu) ** 2 / (2 * tau2)),
                                   bracket=(lo, hi), method="golden")
    return math.exp(res.x)


def imh_step_sigma2(current, params, rng):
    """One independence Metropolis step with an IG(shape, rate) proposal.

    The acceptance ratio reduces to the lognormal factor and the Jacobian-like
    ``x`` terms; returns ``(next, accepted)``.
    """
    if not params.shape > 0:
        raise ModelError("IG proposal is improper for shape <= 0")
    prop = params.rate / rng.standard_gamma(params.shape)
    log_ratio = _imh_log_ratio(prop, current, params.mu, params.tau2)
    if math.log(rng.random()) < min(log_ratio, 0.0):
        return prop, True
    return current, False


def _imh_log_ratio(prop, current, mu, tau2):
    lp, lc = np.log(prop), np.log(current)
    return -((lp - mu) ** 2) / (2 * tau2) + ((lc - mu) ** 2) / (2 * tau2) - lp + lc


def imh_chain(params, n_steps, rng, init=None):
    """Run an independence Metropolis chain on one conditional.

    Returns ``(chain, rejections)``. The chain starts at the target mode unless
    ``init`` is given.
    """
    if not params.shape > 0:
        raise ModelError("IG proposal is improper for shape <= 0")
    x = target_mode(params) if init is None else float(init)
    props = params.rate / rng.standard_gamma(params.shape, n_steps)
    logu = np.log(rng.random(n_steps))
    h = -((np.log(props) - params.mu) ** 2) / (2 * params.tau2) - np.log(props)
    chain = np.empty(n_steps)
    rej = _imh_scan(x, props, h, logu, params.mu, params.tau2, chain)
    return chain, int(rej)


def _imh_scan_py(x, props, h, logu, mu, tau2, chain):
    hx = -((math.log(x) - mu) ** 2) / (2 * tau2) - math.log(x)
    rej = 0
    for r in range(props.size):
        if logu[r] < h[r] - hx:
            x = props[r]
            hx = h[r]
        else:
            rej += 1
        chain[r] = x
    return rej


try:
    from numba import njit

    _imh_scan = njit(cache=True)(_imh_scan_py)
except ImportError:  # pragma: no cover
    _imh_scan = _imh_scan_py


# Gibbs sampler -------------------------------------------------------------


def default_init(data):
    """OLS starting values: beta, phi2 from y on X; gamma, tau2 from log s2 on Z."""
    def ols(A, b):
        coef, *_ = np.linalg.lstsq(A, b, rcond=None)
        resid = b - A @ coef
        dof = max(A.shape[0] - A.shape[1], 1)
        return coef, max(float(resid @ resid) / dof, VARIANCE_FLOOR)

    beta, phi2 = ols(data.X, data.y)
    gamma, tau2 = ols(data.Z, np.log(data.s2))
    return ParamState(
        theta=data.y.copy(),
        sigma2=np.ones(data.m),
        beta=beta,
        gamma=gamma,
        phi2=phi2,
        tau2=tau2,
    )


def _draw_ig(rng, shape, rate, what):
    if not shape > 0:
        raise ModelError(f"{what}: inverse gamma shape {shape} is not positive (need m >= 3)")
    if not rate > 0:
        raise ModelError(f"{what}: degenerate residuals give inverse gamma rate {rate}")
    return rate / rng.standard_gamma(shape)


def draw_theta(state, data, rng):
    s2 = state.sigma2
    p = state.phi2 / (state.phi2 + s2)
    mean = p * data.y + (1.0 - p) * (data.X @ state.beta)
    state.theta = mean + np.sqrt(p * s2) * rng.standard_normal(data.m)


def draw_beta(state, data, rng):
    proj, chol = data._x_fac
    state.beta = proj @ state.theta + math.sqrt(state.phi2) * (chol @ rng.standard_normal(chol.shape[0]))


def draw_gamma(state, data, rng):
    proj, chol = data._z_fac
    state.gamma = proj @ np.log(state.sigma2) + math.sqrt(state.tau2) * (chol @ rng.standard_normal(chol.shape[0]))


def draw_phi2(state, data, rng):
    r = state.theta - data.X @ state.beta
    state.phi2 = _draw_ig(rng, 0.5 * data.m - 1.0, 0.5 * float(r @ r), "phi2")


def draw_tau2(state, data, rng):
    r = np.log(state.sigma2) - data.Z @ state.gamma
    state.tau2 = _draw_ig(rng, 0.5 * data.m - 1.0, 0.5 * float(r @ r), "tau2")


def sigma2_conditionals(state, data):
    """Vectorized (mu, shape, rate) of every area's variance conditional."""
    mu = data.Z @ state.gamma
    rate = 0.5 * (data.y - state.theta) ** 2 + 0.5 * data.d * data.s2
    return mu, data.shape, rate


def mwg_sigma2(state, data, rng):
    """IMH step for every area at once; returns the per-area rejection flags."""
    mu, shape, rate = sigma2_conditionals(state, data)
    if np.any(shape <= 0):
        raise ModelError("IMH needs d > 1 in every area (IG proposal shape must be positive)")
    prop = rate / rng.standard_gamma(shape)
    log_ratio = _imh_log_ratio(prop, state.sigma2, mu, state.tau2)
    accept = np.log(rng.random(data.m)) < log_ratio
    state.sigma2 = np.where(accept, prop, state.sigma2)
    return ~accept


class Step6:
    """Variance-step strategy holding whatever persists across scans."""

    def __init__(self, cfg, m):
        self.cfg = cfg
        self.m = m
        self.stamp = 0
        self.bank = None
        if cfg.sampler == "vwg":
            self.bank = vws.ProposalBank(m, capacity=64)
        elif cfg.sampler == "vwg-basic":
            self.bank = vws.ProposalBank(m, capacity=cfg.max_regions + 2)

    def __call__(self, state, data, rng):
        """Draw every sigma2_i; returns an (m, STATS_WIDTH) array of per-area counts."""
        cfg = self.cfg
        stats = np.zeros((self.m, vws.STATS_WIDTH), dtype=np.int64)
        if cfg.sampler == "mwg":
            stats[:, vws.ST_REJECTIONS] = mwg_sigma2(state, data, rng)
            return stats
        mu, shape, rate = sigma2_conditionals(state, data)
        out = state.sigma2.copy()
        tau = math.sqrt(state.tau2)
        if cfg.sampler == "vwg":
            self.bank.ensure_headroom(32)
            bad = vws.vwg_sigma2_step(
                self.bank.arrays, shape, rate, mu, tau, out, cfg.eps1, cfg.eps2, rng,
                self.stamp, cfg.max_rejections, stats,
            )
            self.stamp += self.m
        else:
            bad = vws.basic_sigma2_step(
                self.bank.arrays, shape, rate, mu, tau, out, cfg.eps1, cfg.max_regions, rng,
                cfg.max_rejections, stats,
            )
        if bad >= 0:
            target = vws.WeightedTarget.inverse_gamma(shape[bad], rate[bad], mu[bad], tau)
            snap = vws.StripProposal(target, self.bank.knots_of(bad))
            raise vws.IterationCapError(
                f"area {bad}: no acceptance within {cfg.max_rejections} rejections",
                area=int(bad), proposal=snap.to_json(),
            )
        state.sigma2 = out
        return stats


def gibbs_scan(state, data, step6, rng):
    """One sequential scan: theta, beta, gamma, phi2, tau2, then every sigma2_i."""
    draw_theta(state, data, rng)
    draw_beta(state, data, rng)
    draw_gamma(state, data, rng)
    draw_phi2(state, data, rng)
    draw_tau2(state, data, rng)
    return step6(state, data, rng)


def run_sampler(data, cfg, init=None, rng=None, step6=None, callback=None):
    """Run ``cfg.iterations`` scans and keep the post-burn-in draws.

    Returns a :class:`ChainOutput` with kept draws of theta, sigma2, beta,
    gamma, phi2 and tau2, and counters split between burn-in and kept phases.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    state = default_init(data) if init is None else init.copy()
    step6 = Step6(cfg, data.m) if step6 is None else step6
    m, p, q = data.m, data.X.shape[1], data.Z.shape[1]
    keep_idx = range(cfg.burn, cfg.iterations, cfg.thin)
    n_keep = len(keep_idx)
    draws = {
        "theta": np.empty((n_keep, m)),
        "sigma2": np.empty((n_keep, m)),
        "beta": np.empty((n_keep, p)),
        "gamma": np.empty((n_keep, q)),
        "phi2": np.empty(n_keep),
        "tau2": np.empty(n_keep),
    }
    rej_iter = np.zeros(cfg.iterations)
    knot_iter = np.zeros(cfg.iterations)
    area_rej = np.zeros(m, dtype=np.int64)
    phase = {"burn": np.zeros(vws.STATS_WIDTH, dtype=np.int64), "keep": np.zeros(vws.STATS_WIDTH, dtype=np.int64)}
    t0 = time.perf_counter()
    j = 0
    for r in range(cfg.iterations):
        stats = gibbs_scan(state, data, step6, rng)
        tot = stats.sum(axis=0)
        phase["burn" if r < cfg.burn else "keep"] += tot
        area_rej += stats[:, vws.ST_REJECTIONS]
        rej_iter[r] = tot[vws.ST_REJECTIONS]
        knot_iter[r] = tot[vws.ST_ADDED] + tot[vws.ST_REMOVED]
        if r >= cfg.burn and (r - cfg.burn) % cfg.thin == 0:
            draws["theta"][j] = state.theta
            draws["sigma2"][j] = state.sigma2
            draws["beta"][j] = state.beta
            draws["gamma"][j] = state.gamma
            draws["phi2"][j] = state.phi2
            draws["tau2"][j] = state.tau2
            j += 1
        if callback is not None:
            callback(r, state, stats)
    elapsed = time.perf_counter() - t0
    counters = {
        "sampler": cfg.sampler,
        "iterations": cfg.iterations,
        "burn": cfg.burn,
        "m": m,
        "rejections": int(phase["burn"][vws.ST_REJECTIONS] + phase["keep"][vws.ST_REJECTIONS]),
        "rejections_burn": int(phase["burn"][vws.ST_REJECTIONS]),
        "rejections_keep": int(phase["keep"][vws.ST_REJECTIONS]),
        "knots_added_burn": int(phase["burn"][vws.ST_ADDED]),
        "knots_added_keep": int(phase["keep"][vws.ST_ADDED]),
        "knots_removed_burn": int(phase["burn"][vws.ST_REMOVED]),
        "knots_removed_keep": int(phase["keep"][vws.ST_REMOVED]),
        "knot_skips": int(phase["burn"][vws.ST_SKIPPED] + phase["keep"][vws.ST_SKIPPED]),
        "accepted_draws": int(m * cfg.iterations),
    }
    counters["knot_updates_burn"] = counters["knots_added_burn"] + counters["knots_removed_burn"]
    counters["knot_updates_keep"] = counters["knots_added_keep"] + counters["knots_removed_keep"]
    if cfg.sampler == "vwg-basic":
        # refinement knots are rebuilt every draw; they are not tuning updates
        for k in ("knots_added_burn", "knots_added_keep", "knots_removed_burn", "knots_removed_keep",
                  "knot_updates_burn", "knot_updates_keep"):
            counters[k] = 0
        knot_iter[:] = 0
    if cfg.sampler == "mwg":
        counters["accepted_draws"] = int(m * cfg.iterations - counters["rejections"])
    counters["proposals"] = counters["accepted_draws"] + counters["rejections"]
    if cfg.sampler == "vwg" and getattr(step6, "bank", None) is not None:
        counters["final_knot_counts"] = step6.bank.knot_counts()
    series = {"rejections_per_iter": rej_iter, "knot_updates_per_iter": knot_iter, "area_rejections": area_rej.astype(float)}
    return ChainOutput(draws=draws, counters=counters, series=series, elapsed=elapsed)


def with_sampler(cfg, sampler, **kw):
    return replace(cfg, sampler=sampler, **kw)
