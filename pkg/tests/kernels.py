"""Compiled loops over a proposal row, so tests can take 10^5 to 10^6 draws cheaply."""

import numpy as np
from numba import njit

from vwsgibbs import vws


@njit
def _labels(b, n, rng, xs, ks):
    for r in range(n):
        x, k = vws._sample(b, 0, rng)
        xs[r] = x
        ks[r] = k


def sample_many(proposal, n, rng):
    """n proposal draws (x, region) from a frozen proposal."""
    xs = np.empty(n)
    ks = np.empty(n, dtype=np.int64)
    _labels(proposal._b, n, rng, xs, ks)
    return xs, ks


@njit
def _trials(b, n, rng):
    rej = 0
    for _ in range(n):
        x, k = vws._sample(b, 0, rng)
        if not vws._accept(b, 0, x, k, rng.random()):
            rej += 1
    return rej


def count_rejections(proposal, n, rng):
    """Rejections among n independent proposals from a frozen proposal."""
    return int(_trials(proposal._b, n, rng))


@njit
def _accepted(b, n, rng, out):
    stats = np.zeros(vws.STATS_WIDTH, dtype=np.int64)
    for r in range(n):
        out[r] = vws._plain_draw(b, 0, rng, 10_000_000, stats)
    return stats[vws.ST_REJECTIONS]


def accepted_draws(proposal, n, rng):
    """n accepted draws from a frozen proposal; returns (draws, rejections)."""
    out = np.empty(n)
    rej = _accepted(proposal._b, n, rng, out)
    return out, int(rej)
