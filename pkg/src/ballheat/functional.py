"""Occupation functionals and the two-sided heat-content bounds.

The functional G_mu(t) = int_Omega mu(x; sqrt t) / |B(x; sqrt t)| dx is a
sum of exact one-dimensional integrals: for disjoint balls mu splits over
the balls, and the integral over B_i of any radial function about c_j is
the integral of that function against the sphere-cap surface measure.
The sandwich constants K1, K2, beta, L1, L2, alpha_R are the closed
forms extracted from the proofs of the two-sided bounds, parameterized
by the kernel-envelope constants (C1, C2, D1, D2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sc

from .content import heat_content, heat_loss
from .geometry import BallUnion, total_measure, unit_ball_volume
from .kernel import LiYauConstants, check_time
from .numerics import ValueWithError, comp_sum, integrate, QuadratureSpec
from .kernel import overlap_volume_rows

__all__ = [
    "BoundConstants",
    "SandwichPoint",
    "SandwichReport",
    "euclidean_liyau_constants",
    "theorem1_constants",
    "theorem2_constants",
    "bound_constants",
    "mu_functional",
    "nu_functional",
    "sandwich_report",
]


def euclidean_liyau_constants(m: int, d1: float = 1.9, d2: float = 2.1) -> LiYauConstants:
    """Envelope constants that are sharp for the Euclidean kernel.

    With C1 = C2 = om (4 pi)^(-m/2) and |B(x; sqrt t)| = om t^(m/2) both
    envelope inequalities reduce to exponent comparisons that hold for
    any 0 < D1 < 2 < D2, with equality at coincident points.
    """
    c = unit_ball_volume(m) * (4.0 * math.pi) ** (-0.5 * m)
    return LiYauConstants(c, c, d1, d2)


def theorem1_constants(m: int, lyc: LiYauConstants):
    """(K1, K2, beta) for the heat-content sandwich."""
    k1 = lyc.C1 * 2.0 ** (-0.5 * m) * math.exp(-1.0 / (2.0 * lyc.D1))
    log_arg = math.log(2.0 * lyc.C2 / lyc.C1
                       * (2.0 * lyc.D2 / lyc.D1) ** (0.5 * m))
    beta = 4.0 / m * log_arg
    if beta < 1.0:
        raise AssertionError("beta must be >= 1 for admissible constants")
    k2 = 2.0 ** (1 + 2 * m) * lyc.C2 * (lyc.D2 * log_arg) ** (0.75 * m)
    return k1, k2, beta


def theorem2_constants(m: int, lyc: LiYauConstants):
    """(L1, L2, alpha_R) for the heat-loss sandwich."""
    l1 = 2.0 ** (-0.5 * m) * math.exp(-1.0 / (2.0 * lyc.D1)) * lyc.C1
    log_arg = math.log(6.0 * lyc.C2 * lyc.D2 / (lyc.C1 * lyc.D1)
                       * (2.0 * lyc.D2 / lyc.D1) ** (0.5 * m))
    alpha_r = math.sqrt(4.0 * lyc.D2 * log_arg)
    if alpha_r <= 2.0:
        raise AssertionError("alpha_R must exceed 2 for admissible constants")
    l2 = 5.0 * 2.0 ** (1 + m) * 3.0 ** (0.5 * m) * lyc.C2 \
        * (lyc.D2 * log_arg) ** (0.25 * (4 + 3 * m))
    return l1, l2, alpha_r


@dataclass(frozen=True)
class BoundConstants:
    """All sandwich constants derived from one envelope parameterization."""

    K1: float
    K2: float
    beta: float
    L1: float
    L2: float
    alphaR: float
    m: int
    lyc: LiYauConstants

    def __post_init__(self):
        if not (0.0 < self.K1 <= self.K2):
            raise ValueError("require 0 < K1 <= K2")
        if not (0.0 < self.L1 <= self.L2):
            raise ValueError("require 0 < L1 <= L2")
        if self.beta < 1.0:
            raise ValueError("beta must be >= 1")
        if self.alphaR <= 2.0:
            raise ValueError("alpha_R must exceed 2")


def bound_constants(m: int, lyc: LiYauConstants) -> BoundConstants:
    k1, k2, beta = theorem1_constants(m, lyc)
    l1, l2, alpha_r = theorem2_constants(m, lyc)
    return BoundConstants(k1, k2, beta, l1, l2, alpha_r, m, lyc)


# ---------------------------------------------------------------------------
# mu functional

def _cap_fraction_rows(m, rho, d, r):
    """Fraction of the sphere |y - c_j| = rho lying inside B(c_i; r).

    d = |c_i - c_j| per row; rho has shape (rows, nodes).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (d * d + rho * rho - r * r) / (2.0 * d * rho)
    g = np.clip(g, -1.0, 1.0)
    s2 = np.clip(1.0 - g * g, 0.0, 1.0)
    half = 0.5 * sc.betainc(0.5 * (m - 1), 0.5, s2)
    return np.where(g >= 0.0, half, 1.0 - half)


def _mu_pair_rows(m, big_r, r_i, r_j, d, t_unused=None, n_low=16, n_high=32):
    """int_{B_i} |B(x;R) ∩ B_j| dx for rows of (r_i, r_j, d).

    Split at the overlap kink rho = |R - r_j|; rho ranges over
    [d - r_i, min(d + r_i, R + r_j)].
    """
    lo = np.maximum(d - r_i, 0.0)
    hi = np.minimum(d + r_i, big_r + r_j)
    kink = np.clip(np.abs(big_r - r_j), lo, hi)
    n = len(d)
    los = np.concatenate([lo, kink])
    his = np.concatenate([kink, hi])
    rr_i = np.concatenate([r_i, r_i])
    rr_j = np.concatenate([r_j, r_j])
    dd = np.concatenate([d, d])
    om = unit_ball_volume(m)

    def f(rho):
        ov = overlap_volume_rows(m, np.full_like(rr_j, big_r), rr_j, rho)
        area = m * om * rho ** (m - 1) \
            * _cap_fraction_rows(m, rho, dd[:, None], rr_i[:, None])
        return ov * area

    vals, errs = _batch(f, los, his, n_low, n_high)
    return vals[:n] + vals[n:], errs[:n] + errs[n:]


def _batch(f, lo, hi, n_low, n_high):
    from .numerics import batch_rule_pair
    return batch_rule_pair(f, lo, hi, n_low, n_high)


def _mu_diag_rows(m, big_r, r_i, n_low=24, n_high=48):
    """int_{B_i} |B(x;R) ∩ B_i| dx by the radial reduction about c_i."""
    lo = np.zeros_like(r_i)
    hi = r_i
    kink = np.clip(np.abs(big_r - r_i), lo, hi)
    n = len(r_i)
    los = np.concatenate([lo, kink])
    his = np.concatenate([kink, hi])
    rr = np.concatenate([r_i, r_i])
    om = unit_ball_volume(m)

    def f(s):
        ov = overlap_volume_rows(m, np.full_like(rr, big_r), rr, s)
        return m * om * s ** (m - 1) * ov

    vals, errs = _batch(f, los, his, n_low, n_high)
    return vals[:n] + vals[n:], errs[:n] + errs[n:]


def _mu_interval_pair(a_i, b_i, a_j, b_j, big_r):
    """m = 1: int over [a_i,b_i] of |[x-R, x+R] ∩ [a_j, b_j]| dx, exact."""
    kinks = sorted({a_j - big_r, a_j + big_r, b_j - big_r, b_j + big_r,
                    a_i, b_i})
    pts = [p for p in kinks if a_i < p < b_i]

    def g(x):
        x = np.asarray(x, dtype=float)
        return np.clip(np.minimum(x + big_r, b_j) - np.maximum(x - big_r, a_j),
                       0.0, None)

    got = integrate(g, a_i, b_i, QuadratureSpec(1e-12, 1e-15, 200), points=pts)
    return got.value, got.error_bound


def mu_functional(union: BallUnion, t: float, rel_tol: float = 1e-8) -> ValueWithError:
    """G_mu(t) = int_Omega mu(x; sqrt t) dx / (om t^(m/2)) over the union.

    The division by the constant Euclidean ball volume om t^(m/2) is
    hoisted out of the integral.  All integrals are exact 1-D reductions;
    the value refers to the stored (finite) union.
    """
    t = check_time(t)
    m = union.dim
    big_r = math.sqrt(t)
    om = unit_ball_volume(m)
    r = union.radii
    n = len(union)

    if m == 1:
        a = union.centers[:, 0] - r
        b = union.centers[:, 0] + r
        tot = 0.0
        err = 0.0
        for i in range(n):
            for j in range(n):
                if abs(union.centers[j, 0] - union.centers[i, 0]) \
                        >= r[i] + r[j] + big_r:
                    continue
                v, e = _mu_interval_pair(a[i], b[i], a[j], b[j], big_r)
                tot += v
                err += e
        scale = 1.0 / (om * t ** (0.5 * m))
        return ValueWithError(tot * scale, err * scale)

    dv, de = _mu_diag_rows(m, big_r, r)
    tot = comp_sum(dv)
    err = comp_sum(de)

    ii, jj = _mu_pairs(union, big_r)
    if len(ii):
        d = np.linalg.norm(union.centers[ii] - union.centers[jj], axis=1)
        pv, pe = _mu_pair_rows(m, big_r, r[ii], r[jj], d)
        tot += comp_sum(pv)
        err += comp_sum(pe)

    scale = 1.0 / (om * t ** (0.5 * m))
    return ValueWithError(tot * scale, err * scale)


def _mu_pairs(union: BallUnion, big_r: float):
    """Directed pairs (i, j) with B(x;R), x in B_i, possibly meeting B_j."""
    n = len(union)
    if union.family == "chain":
        i_list = []
        j_list = []
        x = union.centers[:, 0]
        r = union.radii
        span = 1
        while span < n:
            i = np.arange(0, n - span)
            ok = (x[i + span] - x[i]) < r[i] + r[i + span] + big_r
            if not np.any(ok):
                break
            i_list.append(i[ok])
            j_list.append(i[ok] + span)
            span += 1
        if i_list:
            iu = np.concatenate(i_list)
            ju = np.concatenate(j_list)
        else:
            iu = ju = np.zeros(0, dtype=int)
    elif n <= 1500:
        iu, ju = np.triu_indices(n, k=1)
        d = np.linalg.norm(union.centers[iu] - union.centers[ju], axis=1)
        ok = d < union.radii[iu] + union.radii[ju] + big_r
        iu, ju = iu[ok], ju[ok]
    else:
        from scipy.spatial import cKDTree
        tree = cKDTree(union.centers)
        rad = big_r + 2.0 * float(union.radii[0])
        pairs = tree.query_pairs(rad, output_type="ndarray")
        if len(pairs):
            d = np.linalg.norm(union.centers[pairs[:, 0]]
                               - union.centers[pairs[:, 1]], axis=1)
            ok = d < union.radii[pairs[:, 0]] + union.radii[pairs[:, 1]] + big_r
            iu, ju = pairs[ok, 0], pairs[ok, 1]
        else:
            iu = ju = np.zeros(0, dtype=int)
    # both directions: the i -> j and j -> i integrals differ
    return np.concatenate([iu, ju]), np.concatenate([ju, iu])


def nu_functional(union: BallUnion, t: float, rel_tol: float = 1e-8) -> ValueWithError:
    """G_nu(t) = |Omega| - G_mu(t), from mu(x;R) + nu(x;R) = om R^m."""
    g = mu_functional(union, t, rel_tol)
    return ValueWithError(total_measure(union), 0.0) - g


# ---------------------------------------------------------------------------
# sandwich reports

@dataclass(frozen=True)
class SandwichPoint:
    t: float
    G: float
    value: float
    lower: float
    upper: float
    err: float
    passed: bool


@dataclass(frozen=True)
class SandwichReport:
    """Pointwise two-sided bound checks over a time grid."""

    which: str
    constants: BoundConstants
    points: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.points)

    def to_rows(self):
        return [(p.t, self.which, p.value, p.err, p.lower, p.upper,
                 int(p.passed)) for p in self.points]

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "which": self.which,
            "pass": self.passed,
            "constants": {"K1": self.constants.K1, "K2": self.constants.K2,
                          "beta": self.constants.beta, "L1": self.constants.L1,
                          "L2": self.constants.L2, "alphaR": self.constants.alphaR},
            "points": [{"t": p.t, "G": p.G, "value": p.value,
                        "lower": p.lower, "upper": p.upper, "err": p.err,
                        "pass": p.passed} for p in self.points],
        }


def sandwich_report(union: BallUnion, t_grid, which: str,
                    lyc: LiYauConstants = None,
                    rel_tol: float = 1e-4) -> SandwichReport:
    """Check K1 G_mu <= H <= K2 G_mu (theorem1) or the F/G_nu analogue.

    The check applies to the stored finite union; failures are recorded
    per point, not raised.  theorem2 requires finite measure, which the
    stored union always has.
    """
    if which not in ("theorem1", "theorem2"):
        raise ValueError("which must be 'theorem1' or 'theorem2'")
    from .content import ToleranceFailure
    lyc = lyc or euclidean_liyau_constants(union.dim)
    consts = bound_constants(union.dim, lyc)
    points = []
    for t in np.asarray(t_grid, dtype=float):
        t = float(t)
        if which == "theorem1":
            lo_c, hi_c = consts.K1, consts.K2
            try:
                val = heat_content(union, t, rel_tol, tail="none").H
            except ToleranceFailure as ex:
                val = ex.result.H
            g = mu_functional(union, t)
        else:
            lo_c, hi_c = consts.L1, consts.L2
            try:
                val = heat_loss(union, t, rel_tol, tail="none")
            except ToleranceFailure as ex:
                val = ex.result
            g = nu_functional(union, t)
        lower = lo_c * g.value
        upper = hi_c * g.value
        ok_low = val.value >= lo_c * (g.value - g.error_bound) - val.error_bound
        ok_high = val.value <= hi_c * (g.value + g.error_bound) + val.error_bound
        points.append(SandwichPoint(t, g.value, val.value, lower, upper,
                                    val.error_bound + hi_c * g.error_bound,
                                    bool(ok_low and ok_high)))
    return SandwichReport(which, consts, points)
