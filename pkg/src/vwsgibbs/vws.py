"""Constant vertical-weighted-strips proposals with self-tuning.

A target ``f(x) ∝ w(x) g(x)`` on ``(0, inf)`` is covered by strips
``(a_{k-1}, a_k]``. On each strip ``w`` is bounded above and below by
constants chosen from the unimodality of ``w``; the proposal is the mixture of
``g`` truncated to each strip with weights proportional to the upper bound
times the strip's base probability.

Proposals live in a :class:`ProposalBank`, a struct of arrays with one row per
proposal, so that a Gibbs sampler can keep one proposal per area and update
all of them inside a single compiled loop. :class:`StripProposal` is the
single-proposal view used interactively and in tests.

Indexing is 0-based: internal knot ``k`` separates regions ``k`` and ``k+1``;
a proposal with ``n`` internal knots has ``n + 1`` regions.
"""

from __future__ import annotations

import json
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _normal
from .dist import LognormalParams, lognormal_logpdf

WEIGHT_INVERSE_GAMMA = 0
WEIGHT_CONSTANT = 1

DUPLICATE_RTOL = 1e-12

# target row layout
_KIND, _P1, _P2, _MU, _TAU, _MODE, _LW_MODE, _LW_ZERO, _LW_INF = range(9)
_TARGET_WIDTH = 9

# stats layout returned by the draw kernels
ST_REJECTIONS, ST_ADDED, ST_REMOVED, ST_SKIPPED, ST_STATUS = range(5)
STATS_WIDTH = 5
STATUS_OK, STATUS_CAP = 0, 1

Bank = namedtuple(
    "Bank",
    "knots stamps lwk nk tgt lwbar lwund lp xbar xund sums shift cum dirty",
)


class IterationCapError(RuntimeError):
    """A draw exceeded its rejection cap; carries the offending proposal."""

    def __init__(self, message, area=None, proposal=None):
        super().__init__(message)
        self.area = area
        self.proposal = proposal


def _alloc(m, capacity):
    k = capacity
    return Bank(
        knots=np.zeros((m, k)),
        stamps=np.full((m, k), -1, dtype=np.int64),
        lwk=np.zeros((m, k)),
        nk=np.zeros(m, dtype=np.int64),
        tgt=np.zeros((m, _TARGET_WIDTH)),
        lwbar=np.zeros((m, k + 1)),
        lwund=np.zeros((m, k + 1)),
        lp=np.zeros((m, k + 1)),
        xbar=np.zeros((m, k + 1)),
        xund=np.zeros((m, k + 1)),
        sums=np.zeros((m, 2)),
        shift=np.zeros(m),
        cum=np.zeros((m, k + 1)),
        dirty=np.ones(m, dtype=np.bool_),
    )


# Compiled kernels -----------------------------------------------------------


@njit(cache=True)
def _log_weight(t, x):
    if t[_KIND] == WEIGHT_CONSTANT:
        return t[_P1]
    if x == 0.0:
        return t[_LW_ZERO]
    if math.isinf(x):
        return t[_LW_INF]
    return -(t[_P1] + 1.0) * math.log(x) - t[_P2] / x


@njit(cache=True)
def _set_target_row(b, i, kind, p1, p2, mu, tau):
    t = b.tgt[i]
    t[_KIND] = kind
    t[_P1] = p1
    t[_P2] = p2
    t[_MU] = mu
    t[_TAU] = tau
    if kind == WEIGHT_CONSTANT:
        t[_MODE] = 1.0
        t[_LW_MODE] = p1
        t[_LW_ZERO] = p1
        t[_LW_INF] = p1
    else:
        t[_MODE] = p2 / (p1 + 1.0)
        t[_LW_ZERO] = -math.inf
        t[_LW_INF] = -math.inf
        t[_LW_MODE] = _log_weight(t, t[_MODE])


@njit(cache=True)
def _bounds(t, a, b, lwa, lwb):
    """(log upper, log lower) constants for w on (a, b] given endpoint values."""
    eta = t[_MODE]
    if eta <= a:
        return lwa, lwb
    if eta > b:
        return lwb, lwa
    return t[_LW_MODE], min(lwa, lwb)


@njit(cache=True)
def _region_ends(b, i, k):
    n = b.nk[i]
    a = 0.0 if k == 0 else b.knots[i, k - 1]
    c = math.inf if k == n else b.knots[i, k]
    t = b.tgt[i]
    lwa = t[_LW_ZERO] if k == 0 else b.lwk[i, k - 1]
    lwc = t[_LW_INF] if k == n else b.lwk[i, k]
    return a, c, lwa, lwc


@njit(cache=True)
def _z(t, x):
    if x == 0.0:
        return -math.inf
    if math.isinf(x):
        return math.inf
    return (math.log(x) - t[_MU]) / t[_TAU]


@njit(cache=True)
def _scaled(lx, shift):
    if lx == -math.inf or lx - shift < _normal.LOG_MASS_FLOOR:
        return 0.0
    return math.exp(lx - shift)


@njit(cache=True)
def _compute_region(b, i, k):
    t = b.tgt[i]
    a, c, lwa, lwc = _region_ends(b, i, k)
    hi, lo = _bounds(t, a, c, lwa, lwc)
    lp = _normal.log_interval_mass(_z(t, a), _z(t, c))
    if lp < _normal.LOG_MASS_FLOOR:
        lp = -math.inf
    b.lwbar[i, k] = hi
    b.lwund[i, k] = lo
    b.lp[i, k] = lp


@njit(cache=True)
def _fill_scaled(b, i, k):
    lp = b.lp[i, k]
    b.xbar[i, k] = _scaled(b.lwbar[i, k] + lp, b.shift[i])
    b.xund[i, k] = _scaled(b.lwund[i, k] + lp, b.shift[i])


@njit(cache=True)
def _kahan(v, n):
    s = 0.0
    c = 0.0
    for k in range(n):
        y = v[k] - c
        tt = s + y
        c = (tt - s) - y
        s = tt
    return s


@njit(cache=True)
def _resum(b, i):
    n = b.nk[i] + 1
    b.sums[i, 0] = _kahan(b.xbar[i], n)
    b.sums[i, 1] = _kahan(b.xund[i], n)
    b.dirty[i] = True


@njit(cache=True)
def _rescale(b, i):
    n = b.nk[i] + 1
    top = -math.inf
    for k in range(n):
        lx = b.lwbar[i, k] + b.lp[i, k]
        if lx > top:
            top = lx
    if top == -math.inf:
        top = 0.0
    b.shift[i] = top
    for k in range(n):
        _fill_scaled(b, i, k)
    _resum(b, i)


@njit(cache=True)
def _refresh_row(b, i):
    """Recompute every region for the row's current target and knots."""
    t = b.tgt[i]
    n = b.nk[i]
    for k in range(n):
        b.lwk[i, k] = _log_weight(t, b.knots[i, k])
    for k in range(n + 1):
        _compute_region(b, i, k)
    _rescale(b, i)


@njit(cache=True)
def _retarget(b, i, kind, p1, p2, mu, tau):
    _set_target_row(b, i, kind, p1, p2, mu, tau)
    _refresh_row(b, i)


@njit(cache=True)
def _settle_region(b, i, k):
    _compute_region(b, i, k)
    lx = b.lwbar[i, k] + b.lp[i, k]
    if lx - b.shift[i] > 600.0:
        return True
    _fill_scaled(b, i, k)
    return False


@njit(cache=True)
def _rho_plus(b, i):
    sbar = b.sums[i, 0]
    if sbar <= 0.0:
        return 1.0
    r = 1.0 - b.sums[i, 1] / sbar
    if r < 0.0:
        return 0.0
    return r


@njit(cache=True)
def _add_knot(b, i, x, stamp):
    """Split the region containing x. Returns 1 if added, 0 for a duplicate, -1 at capacity."""
    n = b.nk[i]
    kn = b.knots[i]
    pos = np.searchsorted(kn[:n], x)
    if pos < n and abs(kn[pos] - x) <= DUPLICATE_RTOL * x:
        return 0
    if pos > 0 and abs(x - kn[pos - 1]) <= DUPLICATE_RTOL * x:
        return 0
    if n == kn.shape[0]:
        return -1
    for k in range(n, pos, -1):
        kn[k] = kn[k - 1]
        b.stamps[i, k] = b.stamps[i, k - 1]
        b.lwk[i, k] = b.lwk[i, k - 1]
    for k in range(n + 1, pos + 1, -1):
        b.lwbar[i, k] = b.lwbar[i, k - 1]
        b.lwund[i, k] = b.lwund[i, k - 1]
        b.lp[i, k] = b.lp[i, k - 1]
        b.xbar[i, k] = b.xbar[i, k - 1]
        b.xund[i, k] = b.xund[i, k - 1]
    kn[pos] = x
    b.stamps[i, pos] = stamp
    b.lwk[i, pos] = _log_weight(b.tgt[i], x)
    b.nk[i] = n + 1
    over = _settle_region(b, i, pos)
    over = _settle_region(b, i, pos + 1) or over
    if over:
        _rescale(b, i)
    else:
        _resum(b, i)
    return 1


@njit(cache=True)
def _remove_knot(b, i, k):
    n = b.nk[i]
    for j in range(k, n - 1):
        b.knots[i, j] = b.knots[i, j + 1]
        b.stamps[i, j] = b.stamps[i, j + 1]
        b.lwk[i, j] = b.lwk[i, j + 1]
    for j in range(k + 1, n):
        b.lwbar[i, j] = b.lwbar[i, j + 1]
        b.lwund[i, j] = b.lwund[i, j + 1]
        b.lp[i, j] = b.lp[i, j + 1]
        b.xbar[i, j] = b.xbar[i, j + 1]
        b.xund[i, j] = b.xund[i, j + 1]
    b.nk[i] = n - 1
    if _settle_region(b, i, k):
        _rescale(b, i)
    else:
        _resum(b, i)


@njit(cache=True)
def _trial_remove_rho(b, i, k):
    """Bound after merging regions k and k+1, without mutating the row."""
    t = b.tgt[i]
    n = b.nk[i]
    a = 0.0 if k == 0 else b.knots[i, k - 1]
    c = math.inf if k + 1 == n else b.knots[i, k + 1]
    lwa = t[_LW_ZERO] if k == 0 else b.lwk[i, k - 1]
    lwc = t[_LW_INF] if k + 1 == n else b.lwk[i, k + 1]
    hi, lo = _bounds(t, a, c, lwa, lwc)
    lp = np.logaddexp(b.lp[i, k], b.lp[i, k + 1])
    sh = b.shift[i]
    sbar = b.sums[i, 0] - b.xbar[i, k] - b.xbar[i, k + 1] + _scaled(hi + lp, sh)
    sund = b.sums[i, 1] - b.xund[i, k] - b.xund[i, k + 1] + _scaled(lo + lp, sh)
    if sbar <= 0.0:
        return 1.0
    return 1.0 - sund / sbar


@njit(cache=True)
def _ensure_cum(b, i):
    if b.dirty[i]:
        n = b.nk[i] + 1
        s = 0.0
        for k in range(n):
            s += b.xbar[i, k]
            b.cum[i, k] = s
        b.dirty[i] = False


@njit(cache=True)
def _sample(b, i, rng):
    """(x, region) from the mixture; region -1 if the proposal has no mass."""
    _ensure_cum(b, i)
    n = b.nk[i] + 1
    total = b.cum[i, n - 1]
    if not total > 0.0:
        return math.nan, -1
    v = rng.random() * total
    k = np.searchsorted(b.cum[i, :n], v, side="right")
    if k >= n:
        k = n - 1
    while b.xbar[i, k] <= 0.0 and k > 0:
        k -= 1
    t = b.tgt[i]
    a = 0.0 if k == 0 else b.knots[i, k - 1]
    c = math.inf if k == n - 1 else b.knots[i, k]
    z = _normal.sample_interval(_z(t, a), _z(t, c), rng)
    x = math.exp(t[_MU] + t[_TAU] * z)
    if x <= a:
        x = np.nextafter(a, np.inf)
    if x > c:
        x = c
    return x, k


@njit(cache=True)
def _accept(b, i, x, k, u):
    return u < math.exp(_log_weight(b.tgt[i], x) - b.lwbar[i, k])


@njit(cache=True)
def _removal_sweep(b, i, eps1, eps2, stamp):
    n_snap = b.nk[i]
    removed = 0
    k = 0
    for _ in range(n_snap):
        sbar = b.sums[i, 0]
        rho_k = (b.xbar[i, k] - b.xund[i, k]) / sbar
        if b.stamps[i, k] != stamp and rho_k < eps2:
            if _trial_remove_rho(b, i, k) < eps1:
                _remove_knot(b, i, k)
                removed += 1
                continue
        k += 1
    return removed


@njit(cache=True)
def _self_tuned_draw(b, i, eps1, eps2, rng, stamp, max_rej, stats):
    while True:
        x, k = _sample(b, i, rng)
        if k < 0:
            stats[ST_STATUS] = STATUS_CAP
            return math.nan
        u = rng.random()
        if _accept(b, i, x, k, u):
            return x
        stats[ST_REJECTIONS] += 1
        if _rho_plus(b, i) < eps1:
            stats[ST_REMOVED] += _removal_sweep(b, i, eps1, eps2, stamp)
        else:
            r = _add_knot(b, i, x, stamp)
            if r == 1:
                stats[ST_ADDED] += 1
            else:
                stats[ST_SKIPPED] += 1
        if stats[ST_REJECTIONS] >= max_rej:
            stats[ST_STATUS] = STATUS_CAP
            return math.nan


@njit(cache=True)
def _refine(b, i, eps1, max_regions):
    added = 0
    while _rho_plus(b, i) >= eps1 and b.nk[i] + 1 < max_regions:
        n = b.nk[i] + 1
        best = -1.0
        kbest = 0
        for k in range(n):
            r = b.xbar[i, k] - b.xund[i, k]
            if r > best:
                best = r
                kbest = k
        t = b.tgt[i]
        a = 0.0 if kbest == 0 else b.knots[i, kbest - 1]
        c = math.inf if kbest == n - 1 else b.knots[i, kbest]
        z = _normal.interval_quantile(_z(t, a), _z(t, c), 0.5)
        x = math.exp(t[_MU] + t[_TAU] * z)
        if not (a < x < c) or _add_knot(b, i, x, -1) != 1:
            break
        added += 1
    return added


@njit(cache=True)
def _plain_draw(b, i, rng, max_rej, stats):
    while True:
        x, k = _sample(b, i, rng)
        if k < 0:
            stats[ST_STATUS] = STATUS_CAP
            return math.nan
        if _accept(b, i, x, k, rng.random()):
            return x
        stats[ST_REJECTIONS] += 1
        if stats[ST_REJECTIONS] >= max_rej:
            stats[ST_STATUS] = STATUS_CAP
            return math.nan


@njit(cache=True)
def _clear_row(b, i):
    b.nk[i] = 0


@njit(cache=True)
def vwg_sigma2_step(b, shape, rate, mu, tau, out, eps1, eps2, rng, stamp0, max_rej, stats):
    """Self-tuned draw of every area's variance; per-area stats rows are added to."""
    m = shape.shape[0]
    for i in range(m):
        _retarget(b, i, WEIGHT_INVERSE_GAMMA, shape[i], rate[i], mu[i], tau)
        x = _self_tuned_draw(b, i, eps1, eps2, rng, stamp0 + i, max_rej, stats[i])
        if stats[i, ST_STATUS] != STATUS_OK:
            return i
        out[i] = x
    return -1


@njit(cache=True)
def basic_sigma2_step(b, shape, rate, mu, tau, out, eps1, max_regions, rng, max_rej, stats):
    """Fresh proposal per area refined to the tolerance, then plain rejection."""
    m = shape.shape[0]
    for i in range(m):
        _clear_row(b, i)
        _retarget(b, i, WEIGHT_INVERSE_GAMMA, shape[i], rate[i], mu[i], tau)
        stats[i, ST_ADDED] += _refine(b, i, eps1, max_regions)
        x = _plain_draw(b, i, rng, max_rej, stats[i])
        if stats[i, ST_STATUS] != STATUS_OK:
            return i
        out[i] = x
    return -1


@njit(cache=True)
def conditional_draws(b, i, n_draws, eps1, eps2, rng, max_rej, rho_out, knots_out, stats):
    """n self-tuned draws from one frozen target, recording bound and knot count after each."""
    xs = np.empty(n_draws)
    for r in range(n_draws):
        xs[r] = _self_tuned_draw(b, i, eps1, eps2, rng, r, max_rej, stats)
        if stats[ST_STATUS] != STATUS_OK:
            return xs[:r]
        rho_out[r] = _rho_plus(b, i)
        knots_out[r] = b.nk[i]
    return xs


# Python API -----------------------------------------------------------------


@dataclass(frozen=True)
class WeightedTarget:
    """Density ``w(x) g(x) / psi`` on ``(0, inf)`` with lognormal base ``g``.

    ``weight`` is ``"inverse_gamma"`` (parameters ``shape``, ``rate``; the
    kernel ``x^(-shape-1) exp(-rate/x)``, unimodal at ``rate/(shape+1)`` and
    vanishing at both ends) or ``"constant"`` (parameter ``value`` > 0).
    """

    weight: str
    params: tuple
    base: LognormalParams

    def __post_init__(self):
        if self.weight == "inverse_gamma":
            shape, rate = self.params
            if not rate > 0 or not shape > -1:
                raise ValueError(f"inverse gamma weight needs rate > 0 and shape > -1, got {self.params}")
        elif self.weight == "constant":
            if not self.params[0] > 0:
                raise ValueError("constant weight must be positive")
        else:
            raise ValueError(f"unknown weight kind {self.weight!r}")

    @classmethod
    def inverse_gamma(cls, shape, rate, mu, tau):
        return cls("inverse_gamma", (float(shape), float(rate)), LognormalParams(float(mu), float(tau)))

    @classmethod
    def constant(cls, value, mu, tau):
        return cls("constant", (float(value),), LognormalParams(float(mu), float(tau)))

    @property
    def kind_code(self):
        return WEIGHT_INVERSE_GAMMA if self.weight == "inverse_gamma" else WEIGHT_CONSTANT

    def _kernel_args(self):
        if self.weight == "inverse_gamma":
            p1, p2 = self.params
        else:
            p1, p2 = math.log(self.params[0]), 0.0
        return self.kind_code, p1, p2, self.base.mu, self.base.tau

    @property
    def mode(self):
        """Mode of the weight function (any point works for a constant weight)."""
        if self.weight == "inverse_gamma":
            shape, rate = self.params
            return rate / (shape + 1.0)
        return 1.0

    def log_weight(self, x):
        x = np.asarray(x, dtype=float)
        if self.weight == "constant":
            out = np.full(x.shape, math.log(self.params[0]))
        else:
            shape, rate = self.params
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(
                    (x > 0) & np.isfinite(x),
                    -(shape + 1.0) * np.log(np.where(x > 0, x, 1.0)) - rate / np.where(x > 0, x, 1.0),
                    -np.inf,
                )
        return float(out) if out.ndim == 0 else out

    def weight_at(self, x):
        return np.exp(self.log_weight(x))

    def log_kernel(self, x):
        """``log w(x) + log g(x)`` with ``g`` the normalized lognormal density."""
        return self.log_weight(x) + lognormal_logpdf(np.asarray(x, dtype=float), self.base.mu, self.base.tau)

    def to_dict(self):
        return {"weight": self.weight, "params": list(self.params), "mu": self.base.mu, "tau": self.base.tau}

    @classmethod
    def from_dict(cls, d):
        return cls(d["weight"], tuple(d["params"]), LognormalParams(d["mu"], d["tau"]))


class ProposalBank:
    """Array storage for many proposals, one row each, with growable capacity."""

    def __init__(self, m, capacity=64):
        self.arrays = _alloc(int(m), int(capacity))

    @property
    def m(self):
        return self.arrays.nk.shape[0]

    @property
    def capacity(self):
        return self.arrays.knots.shape[1]

    def grow(self, capacity):
        old = self.arrays
        if capacity <= old.knots.shape[1]:
            return
        new = _alloc(old.nk.shape[0], capacity)
        k = old.knots.shape[1]
        for name in ("knots", "stamps", "lwk"):
            getattr(new, name)[:, :k] = getattr(old, name)
        for name in ("lwbar", "lwund", "lp", "xbar", "xund"):
            getattr(new, name)[:, : k + 1] = getattr(old, name)
        for name in ("nk", "tgt", "sums", "shift"):
            getattr(new, name)[...] = getattr(old, name)
        self.arrays = new

    def ensure_headroom(self, headroom):
        need = int(self.arrays.nk.max(initial=0)) + int(headroom)
        if need > self.capacity:
            self.grow(max(need, 2 * self.capacity))

    def knot_counts(self):
        return self.arrays.nk.copy()

    def knots_of(self, i):
        return self.arrays.knots[i, : self.arrays.nk[i]].copy()

    def stamps_of(self, i):
        return self.arrays.stamps[i, : self.arrays.nk[i]].copy()

    def set_row(self, i, knots, stamps=None):
        knots = np.asarray(knots, dtype=float)
        if stamps is None:
            stamps = np.full(len(knots), -1, dtype=np.int64)
        self.ensure_headroom(len(knots) + 1)
        b = self.arrays
        b.nk[i] = len(knots)
        b.knots[i, : len(knots)] = knots
        b.stamps[i, : len(knots)] = stamps

    def to_json_obj(self, **extra):
        rows = [
            {"knots": self.knots_of(i).tolist(), "stamps": self.stamps_of(i).tolist()}
            for i in range(self.m)
        ]
        return {"kind": "proposal_bank", "m": self.m, "rows": rows, **extra}

    @classmethod
    def from_json_obj(cls, obj):
        rows = obj["rows"]
        cap = max([len(r["knots"]) for r in rows] + [32]) * 2
        bank = cls(len(rows), capacity=cap)
        for i, r in enumerate(rows):
            bank.set_row(i, r["knots"], np.asarray(r["stamps"], dtype=np.int64))
        return bank


def _validate_knots(knots):
    knots = np.asarray(knots, dtype=float).ravel()
    if knots.size and (not np.all(np.isfinite(knots)) or np.any(knots <= 0)):
        raise ValueError("knots must be finite and positive")
    if knots.size > 1 and np.any(np.diff(knots) <= 0):
        raise ValueError("knots must be strictly increasing")
    return knots


class StripProposal:
    """Constant-VWS proposal for one weighted target.

    Parameters
    ----------
    target : WeightedTarget
    knots : sequence of float, optional
        Strictly increasing positive internal knots; ``0`` and ``inf`` are
        implicit outer knots.
    """

    def __init__(self, target, knots=(), stamps=None, capacity=None):
        knots = _validate_knots(knots)
        cap = capacity or max(32, 2 * len(knots) + 8)
        self._bank = ProposalBank(1, capacity=cap)
        self._bank.set_row(0, knots, stamps)
        self.target = target
        self.retarget(target)

    @property
    def _b(self):
        return self._bank.arrays

    def retarget(self, target):
        """Keep the knots, recompute every region constant for a new target."""
        self.target = target
        _retarget(self._b, 0, *target._kernel_args())
        return self

    def _headroom(self, extra=1):
        self._bank.ensure_headroom(extra)

    # read-only views
    @property
    def n_regions(self):
        return int(self._b.nk[0]) + 1

    @property
    def knots(self):
        return self._bank.knots_of(0)

    @property
    def stamps(self):
        return self._bank.stamps_of(0)

    @property
    def log_wbar(self):
        return self._b.lwbar[0, : self.n_regions].copy()

    @property
    def log_wund(self):
        return self._b.lwund[0, : self.n_regions].copy()

    @property
    def log_prob(self):
        return self._b.lp[0, : self.n_regions].copy()

    @property
    def log_xi_bar(self):
        return self.log_wbar + self.log_prob

    @property
    def log_xi_und(self):
        return self.log_wund + self.log_prob

    @property
    def xi_bar(self):
        """Upper masses scaled by a common factor (ratios are what matter)."""
        return self._b.xbar[0, : self.n_regions].copy()

    @property
    def xi_und(self):
        return self._b.xund[0, : self.n_regions].copy()

    @property
    def totals(self):
        return float(self._b.sums[0, 0]), float(self._b.sums[0, 1])

    @property
    def rho_plus(self):
        return float(_rho_plus(self._b, 0))

    @property
    def rho(self):
        sbar = self._b.sums[0, 0]
        return (self.xi_bar - self.xi_und) / sbar

    @property
    def mixing_weights(self):
        xb = self.xi_bar
        return xb / xb.sum()

    def region_bounds(self, k):
        kn = self.knots
        return (0.0 if k == 0 else kn[k - 1]), (math.inf if k == len(kn) else kn[k])

    def region_of(self, x):
        return int(np.searchsorted(self.knots, x, side="left"))

    # operations
    def sample(self, rng):
        x, k = _sample(self._b, 0, rng)
        if k < 0:
            raise ValueError("proposal has no mass")
        return x, int(k)

    def accept(self, x, k, u):
        return bool(_accept(self._b, 0, float(x), int(k), float(u)))

    def add_knot(self, x, stamp=-1):
        """Insert ``x`` as a knot; returns False for a (near-)duplicate."""
        if not x > 0 or not math.isfinite(x):
            raise ValueError("knot must be finite and positive")
        self._headroom(1)
        return _add_knot(self._b, 0, float(x), int(stamp)) == 1

    def remove_knot(self, k):
        """Remove internal knot ``k`` (0-based), merging regions ``k`` and ``k+1``."""
        n = int(self._b.nk[0])
        if not 0 <= k < n:
            raise IndexError(f"internal knot index {k} out of range for {n} knots")
        _remove_knot(self._b, 0, int(k))
        return self

    def trial_remove_rho(self, k):
        return float(_trial_remove_rho(self._b, 0, int(k)))

    def self_tuned_draw(self, eps1, eps2, rng, stamp=0, max_rejections=1_000_000):
        """One exact draw; the proposal is tuned on each rejection.

        Returns ``(x, stats)`` with counts of rejections, knots added and knots
        removed. Knots added in this call carry ``stamp`` and are skipped by
        removal sweeps within the call.
        """
        if not (0 <= eps1 <= 1 and 0 <= eps2 <= 1):
            raise ValueError("tolerances must lie in [0, 1]")
        # capacity is checked inside the kernel; leave room for a long tuning run
        self._headroom(256)
        stats = np.zeros(STATS_WIDTH, dtype=np.int64)
        x = _self_tuned_draw(self._b, 0, float(eps1), float(eps2), rng, int(stamp), int(max_rejections), stats)
        if stats[ST_STATUS] != STATUS_OK:
            raise IterationCapError(
                f"no acceptance within {max_rejections} rejections", proposal=self.to_json()
            )
        return x, {
            "rejections": int(stats[ST_REJECTIONS]),
            "added": int(stats[ST_ADDED]),
            "removed": int(stats[ST_REMOVED]),
            "skipped": int(stats[ST_SKIPPED]),
        }

    def draw(self, rng, max_rejections=1_000_000):
        """One exact draw from the frozen proposal (no tuning)."""
        stats = np.zeros(STATS_WIDTH, dtype=np.int64)
        x = _plain_draw(self._b, 0, rng, int(max_rejections), stats)
        if stats[ST_STATUS] != STATUS_OK:
            raise IterationCapError(f"no acceptance within {max_rejections} rejections", proposal=self.to_json())
        return x, int(stats[ST_REJECTIONS])

    def refine_to_tolerance(self, eps1, max_regions):
        """Split the largest-contribution region at its base median until the
        bound drops below ``eps1`` or ``max_regions`` is reached."""
        if max_regions < 1:
            raise ValueError("max_regions must be at least 1")
        self._headroom(max_regions)
        _refine(self._b, 0, float(eps1), int(max_regions))
        return self

    def copy(self):
        return StripProposal(self.target, self.knots, self.stamps)

    def to_json(self, **extra):
        return json.dumps(
            {"target": self.target.to_dict(), "knots": self.knots.tolist(), "stamps": self.stamps.tolist(), **extra}
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(WeightedTarget.from_dict(d["target"]), d["knots"], np.asarray(d["stamps"], dtype=np.int64))

    def __repr__(self):
        return f"StripProposal(regions={self.n_regions}, rho_plus={self.rho_plus:.4g})"


def build_proposal(target, knots=()):
    return StripProposal(target, knots)


def self_tuned_draw(proposal, target, eps1, eps2, rng, stamp=0, max_rejections=1_000_000):
    """Functional form: retargets ``proposal`` if needed, then draws."""
    if proposal.target != target:
        proposal.retarget(target)
    return proposal.self_tuned_draw(eps1, eps2, rng, stamp=stamp, max_rejections=max_rejections)


def refine_to_tolerance(proposal, eps1, max_regions):
    return proposal.refine_to_tolerance(eps1, max_regions)
