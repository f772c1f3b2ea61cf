"""Heat content and heat loss of ball unions with rigorous error budgets.

H splits into the diagonal sum of single-ball contents plus pairwise
exchanged heat.  Pairs are enumerated out to the inclusion threshold
gap^2/(4t) <= 36; pairs inside the threshold whose a-priori bound is
negligible relative to the requested tolerance are dropped and their
bound charged, as is everything beyond the threshold.  For generated
lattice families the contribution of balls beyond the stored truncation
is either charged entirely to the error (mode "charge", using the
exponential decoupling bound for the cross part) or evaluated by
integral comparison and added to the value with a total-variation
bracket (mode "extend").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from .geometry import BallUnion, unit_ball_volume
from .kernel import (check_time, cross_heat_content, cross_heat_content_many,
                     unit_heat_table)
from .numerics import (QuadratureSpec, ValueWithError, comp_sum, integrate,
                       noncentral_chisq_cdf, ncx2_cdf_many)

__all__ = [
    "HeatContentResult",
    "ToleranceFailure",
    "InfiniteMeasureError",
    "union_temperature",
    "heat_content",
    "heat_loss",
    "cross_term_bound",
    "auto_lattice_size",
]

_GAP_THRESHOLD = 36.0  # include pairs with gap^2/(4t) <= 36; e^{-36} ~ 2e-16


class ToleranceFailure(RuntimeError):
    """The requested relative tolerance could not be met.

    Carries the best result in ``result``.
    """

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


class InfiniteMeasureError(ValueError):
    """Heat loss requested for a family with infinite total measure."""


@dataclass(frozen=True)
class HeatContentResult:
    """Heat content at one time with its error decomposition.

    ``H.error_bound`` includes the quadrature budget plus
    ``dropped_cross_bound`` and ``tail_bound``.
    """

    t: float
    H: ValueWithError
    diag: float
    cross: float
    dropped_cross_bound: float
    tail_bound: float


def union_temperature(union: BallUnion, x, t: float) -> float:
    """u_Omega(x;t) = sum of single-ball temperatures (balls disjoint)."""
    t = check_time(t)
    x = np.asarray(x, dtype=float).ravel()
    if x.size != union.dim:
        raise ValueError("point dimension mismatch")
    m = union.dim
    d2 = np.einsum("ij,ij->i", union.centers - x, union.centers - x)
    # balls whose Gaussian mass at x is below ~1e-300 contribute nothing
    lam = d2 / (2.0 * t)
    q = union.radii ** 2 / (2.0 * t)
    live = (np.sqrt(lam) - np.sqrt(q)) ** 2 < 1400.0
    total = math.fsum(noncentral_chisq_cdf(m, float(l), float(qq))
                      for l, qq in zip(lam[live], q[live]))
    return min(total, 1.0)


def union_temperature_many(union: BallUnion, pts: np.ndarray, t: float) -> np.ndarray:
    """Vectorized union temperature over a (n, m) array of points."""
    t = check_time(t)
    pts = np.asarray(pts, dtype=float).reshape(-1, union.dim)
    m = union.dim
    out = np.zeros(len(pts))
    for c, r in zip(union.centers, union.radii):
        d2 = np.einsum("ij,ij->i", pts - c, pts - c)
        lam = d2 / (2.0 * t)
        q = r * r / (2.0 * t)
        live = (np.sqrt(lam) - math.sqrt(q)) ** 2 < 1400.0
        if np.any(live):
            out[live] += ncx2_cdf_many(m, lam[live], q)
    return np.minimum(out, 1.0)


# ---------------------------------------------------------------------------
# pair enumeration and a-priori bounds

def _pair_bound(m, r1, r2, gap, t):
    """Rigorous upper bound on the exchanged heat of a disjoint pair.

    Minimum of the kernel-sup bound (4 pi t)^(-m/2) |B1||B2| e^(-gap^2/4t)
    and a separating-slab bound om_{m-1} min(r)^(m-1) sqrt(t) ierfc(g/(4 sqrt t)),
    where ierfc(z) = e^(-z^2)/sqrt(pi) - z erfc(z).
    """
    om = unit_ball_volume(m)
    vol1 = om * r1 ** m
    vol2 = om * r2 ** m
    g = np.maximum(gap, 0.0)
    with np.errstate(over="ignore", under="ignore"):
        gauss = (4.0 * math.pi * t) ** (-0.5 * m) * vol1 * vol2 \
            * np.exp(-g * g / (4.0 * t))
    z = g / (4.0 * math.sqrt(t))
    ierfc = np.exp(-z * z) / math.sqrt(math.pi) - z * sc.erfc(z)
    om1 = unit_ball_volume(m - 1) if m >= 2 else 1.0
    slab = om1 * np.minimum(r1, r2) ** (m - 1) * math.sqrt(t) * ierfc
    return np.minimum(gauss, slab)


def _candidate_pairs(union: BallUnion, t: float):
    """Unordered pairs with gap <= 12 sqrt(t), and a charge for the rest.

    The remainder charge covers every pair beyond the threshold through
    C_ij <= (4 pi t)^(-m/2) e^(-36) |B_i||B_j| summed over all pairs.
    """
    n = len(union)
    m = union.dim
    reach = 12.0 * math.sqrt(t)
    if union.family == "chain":
        i_list, j_list = [], []
        x = union.centers[:, 0]
        r = union.radii
        span = 1
        while span < n:
            i = np.arange(0, n - span)
            gap = x[i + span] - x[i] - r[i + span] - r[i]
            keep = gap <= reach
            if not np.any(keep):
                break
            i_list.append(i[keep])
            j_list.append(i[keep] + span)
            span += 1
        if i_list:
            ii = np.concatenate(i_list)
            jj = np.concatenate(j_list)
        else:
            ii = jj = np.zeros(0, dtype=int)
    elif n <= 1500:
        iu, ju = np.triu_indices(n, k=1)
        d = np.linalg.norm(union.centers[iu] - union.centers[ju], axis=1)
        gap = d - union.radii[iu] - union.radii[ju]
        keep = gap <= reach
        ii, jj = iu[keep], ju[keep]
    else:
        from scipy.spatial import cKDTree
        tree = cKDTree(union.centers)
        rad = reach + 2.0 * float(union.radii[0])
        pairs = tree.query_pairs(rad, output_type="ndarray")
        if len(pairs):
            d = np.linalg.norm(union.centers[pairs[:, 0]] - union.centers[pairs[:, 1]], axis=1)
            gap = d - union.radii[pairs[:, 0]] - union.radii[pairs[:, 1]]
            keep = gap <= reach
            ii, jj = pairs[keep, 0], pairs[keep, 1]
        else:
            ii = jj = np.zeros(0, dtype=int)

    d = np.linalg.norm(union.centers[ii] - union.centers[jj], axis=1) \
        if len(ii) else np.zeros(0)
    measure = unit_ball_volume(m) * comp_sum(union.radii ** m)
    far_charge = (4.0 * math.pi * t) ** (-0.5 * m) * math.exp(-_GAP_THRESHOLD) \
        * measure * measure
    return ii, jj, d, far_charge


def _exact_cross(union, t, ii, jj, d, budget):
    """Exchanged heat over candidate pairs; small-bound pairs are charged.

    Returns (sum of pair values, quadrature error, dropped-bound charge);
    all pair quantities are per unordered pair (callers double them).
    """
    m = union.dim
    if len(ii) == 0:
        return 0.0, 0.0, 0.0
    r1 = union.radii[ii]
    r2 = union.radii[jj]
    gap = d - r1 - r2
    bounds = _pair_bound(m, r1, r2, gap, t)
    order = np.argsort(bounds)
    csum = np.cumsum(bounds[order])
    ndrop = int(np.searchsorted(csum, 0.5 * budget))
    dropped = float(csum[ndrop - 1]) if ndrop > 0 else 0.0
    live = np.sort(order[ndrop:])
    if len(live) == 0:
        return 0.0, 0.0, dropped
    vals, errs = cross_heat_content_many(m, r1[live], r2[live], d[live], t)
    # refine rows whose embedded-rule discrepancy dominates their share
    row_tol = np.maximum(0.05 * bounds[live], 0.25 * budget / max(len(live), 1))
    bad = np.nonzero(errs > row_tol)[0]
    for k in bad:
        got = cross_heat_content(m, float(r1[live][k]), float(r2[live][k]),
                                 float(d[live][k]), t)
        vals[k] = got.value
        errs[k] = got.error_bound
    return comp_sum(vals), comp_sum(errs), dropped


# ---------------------------------------------------------------------------
# generated-family tails (lattice)

def _tail_power_sum_upper(a, alpha, power, n):
    """Upper bound on sum_{i>n} (a i^-alpha)^power via integral comparison."""
    p = alpha * power
    if p <= 1.0:
        return math.inf
    return a ** power * n ** (1.0 - p) / (p - 1.0)


def _e59_factor(m, delta, t):
    """om^2 e^(-delta^2/(16 t)) (2/delta + (4 pi t)^(-1/2))^m."""
    om = unit_ball_volume(m)
    return om * om * math.exp(-delta * delta / (16.0 * t)) \
        * (2.0 / delta + (4.0 * math.pi * t) ** -0.5) ** m


def _lattice_tail_cross_charge(union, t):
    """Bound on cross terms with at least one index beyond the truncation."""
    p = union.params
    s_tail = _tail_power_sum_upper(p.a, p.alpha, 2 * union.dim, p.n)
    return 2.0 * _e59_factor(union.dim, union.delta, t) * s_tail


def _resolve_tail(union: BallUnion, tail: str) -> str:
    if tail not in ("auto", "none", "charge", "extend"):
        raise ValueError("tail must be auto, none, charge or extend")
    if tail == "auto":
        return "charge" if (union.family == "lattice" and union.params is not None) \
            else "none"
    if tail != "none" and union.params is None:
        raise ValueError("tail accounting requires a generated family")
    if tail != "none" and union.family == "chain":
        raise ValueError(
            "tail accounting is not supported for chain families: the "
            "touching geometry has no computable cross-term tail bound; "
            "use tail='none' for explicit-union semantics")
    return tail


def _tail_diag(union, t, mode, loss):
    """Tail of the diagonal sum for a generated lattice family.

    Returns (value, error).  In mode "charge" the value is 0 and the
    whole tail goes into the error; in mode "extend" the tail sum is
    evaluated by integral comparison with a total-variation bracket
    2 om r_N^m on the sum-integral difference.
    """
    p = union.params
    m = union.dim
    om = unit_ball_volume(m)
    n = p.n
    if mode == "charge":
        if loss:
            # sum_{i>n} min(om r^m, m om pi^(-1/2) r^(m-1) sqrt(t))
            rstar = m * math.sqrt(t) / math.sqrt(math.pi)
            istar = (p.a / rstar) ** (1.0 / p.alpha) if rstar < p.a else 1.0
            bound = 0.0
            if istar > n:
                # perimeter-type part up to istar, volume part beyond
                s = _partial_power_sum_upper(p.a, p.alpha, m - 1, n, istar)
                bound += m * om / math.sqrt(math.pi) * math.sqrt(t) * s
                bound += om * _tail_power_sum_upper(p.a, p.alpha, m, istar)
            else:
                bound += om * _tail_power_sum_upper(p.a, p.alpha, m, n)
            if math.isinf(bound):
                raise InfiniteMeasureError("heat-loss tail diverges (m*alpha <= 1)")
            return 0.0, bound
        s2m = _tail_power_sum_upper(p.a, p.alpha, 2 * m, n)
        if math.isinf(s2m):
            raise ValueError(
                "heat content of the infinite family is not finite "
                "(2 m alpha <= 1)")
        return 0.0, (4.0 * math.pi * t) ** (-0.5 * m) * om * om * s2m

    # extend: evaluate int_n^inf (a x^-alpha)^m W1(t (a x^-alpha)^-2) dx
    table = unit_heat_table(m)
    many = table.loss_many if loss else table.content_many

    def f(x):
        r = p.a * np.asarray(x, dtype=float) ** (-p.alpha)
        vals, _ = many(t / (r * r))
        return r ** m * vals

    spec = QuadratureSpec(rel_tol=1e-9, abs_tol=1e-30, max_subdivisions=800)
    got = integrate(f, float(n), math.inf, spec)
    rn = p.a * float(n) ** (-p.alpha)
    bracket = 2.0 * om * rn ** m
    slack = table.loss_slack() if loss else table.content_slack()
    return got.value, got.error_bound + bracket + slack * abs(got.value)


def _partial_power_sum_upper(a, alpha, power, n_lo, n_hi):
    """Upper bound on sum_{n_lo < i <= n_hi} (a i^-alpha)^power."""
    p = alpha * power
    if p == 1.0:
        return a ** power * math.log(n_hi / n_lo)
    s = (n_hi ** (1.0 - p) - n_lo ** (1.0 - p)) / (1.0 - p)
    return a ** power * (s + n_lo ** (-p))


# ---------------------------------------------------------------------------
# public assembly

def _diag_sum(union, t, rel_tol, loss):
    """Per-ball diagonal sum with interp-or-direct selection.

    Interpolated values whose slack would use up the diagonal share of
    the budget are recomputed by direct quadrature, worst rows first.
    """
    from .kernel import _unit_batch
    table = unit_heat_table(union.dim)
    tau = t / union.radii ** 2
    vals, errs = (table.loss_many if loss else table.content_many)(tau)
    scale = union.radii ** union.dim
    sv = vals * scale
    se = errs * scale
    budget = 0.25 * rel_tol * max(comp_sum(np.abs(sv)), 1e-300)
    if comp_sum(se) > budget:
        order = np.argsort(se)[::-1]
        cum = np.cumsum(se[order][::-1])[::-1]
        k = int(np.searchsorted(-cum, -budget)) if cum[0] > budget else 0
        redo = order[:max(k, 1)]
        dv, de = _unit_batch(union.dim, tau[redo], loss=loss)
        sv[redo] = dv * scale[redo]
        se[redo] = de * scale[redo]
    return comp_sum(sv), comp_sum(se)


def heat_content(union: BallUnion, t: float, rel_tol: float = 1e-6,
                 tail: str = "auto") -> HeatContentResult:
    """Heat content of a ball union at time t with a rigorous error bound.

    Raises ToleranceFailure (carrying the best result) when the combined
    error exceeds ``rel_tol`` times the value.
    """
    t = check_time(t)
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    mode = _resolve_tail(union, tail)
    m = union.dim
    diag, diag_err = _diag_sum(union, t, rel_tol, loss=False)

    ii, jj, d, far_charge = _candidate_pairs(union, t)
    budget = rel_tol * max(diag, 1e-300) / 8.0
    cross_val, cross_err, dropped = _exact_cross(union, t, ii, jj, d, budget)
    cross = 2.0 * cross_val
    cross_err = 2.0 * cross_err
    dropped_bound = 2.0 * dropped + far_charge

    tail_val = tail_err = 0.0
    if mode in ("charge", "extend"):
        tail_val, tail_err = _tail_diag(union, t, mode, loss=False)
        tail_err += _lattice_tail_cross_charge(union, t)

    value = diag + cross + tail_val
    err = diag_err + cross_err + dropped_bound + tail_err
    result = HeatContentResult(t, ValueWithError(value, err), diag, cross,
                               dropped_bound, tail_err)
    if err > rel_tol * abs(value) + 1e-300:
        raise ToleranceFailure(
            "heat content error bound %.3g exceeds rel_tol %.3g * %.6g"
            % (err, rel_tol, value), result)
    return result


def heat_loss(union: BallUnion, t: float, rel_tol: float = 1e-6,
              tail: str = "auto") -> ValueWithError:
    """Heat loss F = |Omega| - H = sum_i F_i - exchanged heat.

    For generated families with tail accounting the total measure must be
    finite (m alpha > 1), otherwise InfiniteMeasureError is raised.
    """
    t = check_time(t)
    mode = _resolve_tail(union, tail)
    m = union.dim
    p = union.params
    if mode != "none" and p is not None and m * p.alpha <= 1.0:
        raise InfiniteMeasureError(
            "total measure of the infinite family is not finite (m*alpha <= 1)")
    diag, diag_err = _diag_sum(union, t, rel_tol, loss=True)

    ii, jj, d, far_charge = _candidate_pairs(union, t)
    budget = rel_tol * max(diag, 1e-300) / 8.0
    cross_val, cross_err, dropped = _exact_cross(union, t, ii, jj, d, budget)

    tail_val = tail_err = 0.0
    if mode in ("charge", "extend"):
        tail_val, tail_err = _tail_diag(union, t, mode, loss=True)
        tail_err += _lattice_tail_cross_charge(union, t)

    value = diag - 2.0 * cross_val + tail_val
    err = diag_err + 2.0 * cross_err + 2.0 * dropped + far_charge + tail_err
    out = ValueWithError(value, err)
    if err > rel_tol * abs(value) + 1e-300:
        raise ToleranceFailure(
            "heat loss error bound %.3g exceeds rel_tol %.3g * %.6g"
            % (err, rel_tol, value), out)
    return out


def cross_term_bound(union: BallUnion, t: float) -> float:
    """Exponential decoupling bound |H - sum_i H_i| for lattice families.

    om^2 e^(-delta^2/(16t)) (2/delta + (4 pi t)^(-1/2))^m sum_i r_i^(2m),
    with the radius sum taken over the stored balls plus, for generated
    families, an integral upper bound on the remainder.
    """
    t = check_time(t)
    if union.family != "lattice":
        raise ValueError("the decoupling bound applies to lattice families")
    m = union.dim
    s2m = comp_sum(union.radii ** (2 * m))
    if union.params is not None:
        tail = _tail_power_sum_upper(union.params.a, union.params.alpha,
                                     2 * m, union.params.n)
        if math.isinf(tail):
            raise ValueError("sum r^(2m) diverges (2 m alpha <= 1)")
        s2m += tail
    return _e59_factor(m, union.delta, t) * s2m


def auto_lattice_size(m: int, a: float, alpha: float, t: float,
                      rel_tol: float, n_max: int = 2_000_000) -> int:
    """Truncation index making the charge-mode tail bound meet rel_tol.

    Uses the small-t law scale c t^((m alpha - 1)/(2 alpha)) (or the total
    measure when finite) as the value estimate.  Returns at most n_max.
    """
    if 2.0 * m * alpha <= 1.0:
        raise ValueError("heat content of the family is not finite")
    om = unit_ball_volume(m)
    if m * alpha > 1.0:
        h_est = om * a ** m * (m * alpha) / (m * alpha - 1.0)
    else:
        h_est = max(om * a ** m, om * a ** m * t ** ((m * alpha - 1.0) / (2 * alpha)))
    target = rel_tol * h_est
    p = 2.0 * m * alpha
    lead = (4.0 * math.pi * t) ** (-0.5 * m) * om * om * a ** (2 * m) / (p - 1.0)
    n = (lead / target) ** (1.0 / (p - 1.0))
    return int(min(max(math.ceil(n), 8), n_max))
