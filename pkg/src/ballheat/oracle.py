"""Seeded Monte Carlo estimators used as independent cross-checks.

Sampling uses the counter-based Philox generator with one stream per
(seed, ball) pair so estimates are reproducible bit-for-bit and
independent of any parallel scheduling.  Samples are stratified by ball
with deterministic proportional allocation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .content import union_temperature_many
from .geometry import BallUnion, mu_many, total_measure, unit_ball_volume
from .kernel import check_time

__all__ = [
    "McEstimate",
    "mc_heat_content",
    "mc_mu_functional",
    "mc_overlap_volume",
]


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo estimate with its standard error."""

    value: float
    std_error: float
    n: int
    seed: int


def _stream(seed: int, ball_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[np.uint64(seed),
                                                     np.uint64(ball_index)]))


def _uniform_in_ball(rng, center, radius, n):
    """Gaussian direction plus U^(1/m) radius: exact and dimension-generic."""
    m = center.size
    v = rng.normal(size=(n, m))
    v /= np.linalg.norm(v, axis=1)[:, None]
    rad = radius * rng.uniform(size=n) ** (1.0 / m)
    return center[None, :] + v * rad[:, None]


def _allocate(weights, n):
    """Deterministic proportional allocation summing exactly to n."""
    raw = weights * n
    base = np.floor(raw).astype(int)
    short = n - int(base.sum())
    if short > 0:
        order = np.argsort(-(raw - base))
        base[order[:short]] += 1
    return base


def _stratified(union: BallUnion, n: int, seed: int, eval_fn):
    """Measure-weighted stratified estimate of |Omega| E[f(X)], X ~ U(Omega)."""
    om = unit_ball_volume(union.dim)
    vols = om * union.radii ** union.dim
    measure = float(vols.sum())
    w = vols / measure
    counts = _allocate(w, n)
    mean_acc = 0.0
    var_acc = 0.0
    for idx, (c, r, k) in enumerate(zip(union.centers, union.radii, counts)):
        if k == 0:
            continue
        rng = _stream(seed, idx)
        pts = _uniform_in_ball(rng, c, float(r), int(k))
        vals = eval_fn(pts)
        mean_acc += w[idx] * float(np.mean(vals))
        var_acc += w[idx] ** 2 * float(np.var(vals)) / k
    return measure * mean_acc, measure * math.sqrt(var_acc)


def mc_heat_content(union: BallUnion, t: float, n: int, seed: int) -> McEstimate:
    """H = |Omega| E[u_Omega(X; t)] with X uniform on Omega."""
    t = check_time(t)
    val, se = _stratified(union, n, seed,
                          lambda pts: union_temperature_many(union, pts, t))
    return McEstimate(val, se, n, seed)


def mc_mu_functional(union: BallUnion, t: float, n: int, seed: int) -> McEstimate:
    """G_mu = |Omega| E[mu(X; sqrt t)] / (om t^(m/2)), exact mu per sample."""
    t = check_time(t)
    big_r = math.sqrt(t)
    om = unit_ball_volume(union.dim)
    scale = om * t ** (0.5 * union.dim)
    val, se = _stratified(union, n, seed,
                          lambda pts: mu_many(union, pts, big_r))
    return McEstimate(val / scale, se / scale, n, seed)


def mc_overlap_volume(m: int, r1: float, r2: float, d: float,
                      n: int, seed: int) -> McEstimate:
    """Hit-count estimate of |B(0;r1) ∩ B(d e_1;r2)|.

    Samples uniformly in the smaller ball and counts hits in the other.
    """
    if r1 <= 0 or r2 <= 0 or d < 0:
        raise ValueError("need positive radii and non-negative distance")
    small, big = (r1, r2) if r1 <= r2 else (r2, r1)
    c_small = np.zeros(m)
    c_big = np.zeros(m)
    c_big[0] = d
    if r1 <= r2:
        c_small[:] = 0.0
    else:
        c_small[0] = d
        c_big[0] = 0.0
    rng = _stream(seed, 0)
    pts = _uniform_in_ball(rng, c_small, small, n)
    inside = np.linalg.norm(pts - c_big[None, :], axis=1) < big
    p = float(np.mean(inside))
    vol = unit_ball_volume(m) * small ** m
    return McEstimate(vol * p, vol * math.sqrt(max(p * (1 - p), 0.0) / n), n, seed)
