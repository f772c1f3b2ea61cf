"""Euclidean heat kernel and exact single-ball / ball-pair heat flow.

The unit-ball heat content H1(tau) and heat loss F1(tau) are reduced to
one-dimensional integrals through the set covariance of the ball,

    H1(tau) = m om pi^(-m/2) int_0^{2/h} e^{-v^2} v^(m-1) OV(h v) dv,
    h = 2 sqrt(tau),  OV(w) = |B(0;1) ∩ B(w e_1;1)|,

which is exact for every tau and perfectly conditioned at both ends.
Heat content of B(0;r) at time t follows by Gaussian scaling,
H = r^m H1(t / r^2).  The exchanged heat between two disjoint balls is a
single radial integral of the overlap volume against the noncentral-chi
density of |N(d e_1, 2t I_m)|.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import special as sc
from scipy.interpolate import PchipInterpolator

from .geometry import overlap_volume, unit_ball_volume
from .numerics import (DEFAULT_SPEC, QuadratureSpec, ValueWithError,
                       batch_rule_pair, integrate, ncx2_cdf_many,
                       noncentral_chisq_cdf)

__all__ = [
    "LiYauConstants",
    "EnvelopeReport",
    "check_time",
    "heat_kernel",
    "ball_temperature",
    "unit_ball_heat_content",
    "unit_ball_heat_loss",
    "ball_heat_content",
    "ball_heat_loss",
    "cross_heat_content",
    "li_yau_envelope_check",
]

_VMAX = 40.0  # e^{-v^2} below 1e-695; truncation beyond this is charged


def check_time(t: float) -> float:
    """Validate a diffusion time; t = 0 is rejected (limits live in callers)."""
    t = float(t)
    if not (t > 0.0) or math.isinf(t):
        raise ValueError("time must be a finite positive real")
    return t


@dataclass(frozen=True)
class LiYauConstants:
    """Constants (C1, C2, D1, D2) of the two-sided kernel envelope."""

    C1: float
    C2: float
    D1: float
    D2: float

    def __post_init__(self):
        if not (0.0 < self.C1 <= self.C2 < math.inf):
            raise ValueError("require 0 < C1 <= C2 < inf")
        if not (0.0 < self.D1 < 2.0):
            raise ValueError("require 0 < D1 < 2")
        if not (self.D2 > 2.0):
            raise ValueError("require D2 > 2")


def heat_kernel(m: int, x, y, t: float) -> float:
    """Gaussian heat kernel (4 pi t)^(-m/2) exp(-|x-y|^2 / (4t))."""
    t = check_time(t)
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != m or y.size != m:
        raise ValueError("points must have m coordinates")
    s2 = float(np.dot(x - y, x - y))
    return (4.0 * math.pi * t) ** (-0.5 * m) * math.exp(-s2 / (4.0 * t))


def ball_temperature(m: int, center, radius: float, x, t: float) -> float:
    """Temperature u_B(x;t) of a ball initially at temperature one.

    Equals the Gaussian measure of the ball, i.e. the noncentral
    chi-square CDF with df = m, noncentrality |x-c|^2/(2t), threshold
    r^2/(2t).
    """
    t = check_time(t)
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    lam = float(np.dot(x - center, x - center)) / (2.0 * t)
    q = radius * radius / (2.0 * t)
    if lam > q:
        # Gaussian measure bound: om q^{m/2} (2 pi)^{-m/2} e^{-(sqrt(lam)-sqrt(q))^2/2}
        edge = 0.5 * (math.sqrt(lam) - math.sqrt(q)) ** 2
        if edge > 710.0:
            return 0.0
    return noncentral_chisq_cdf(m, lam, q)


# ---------------------------------------------------------------------------
# unit-ball heat content / loss

def unit_overlap_complement(m: int, w):
    """om - |B(0;1) ∩ B(w e_1;1)| without cancellation.

    For equal unit balls the complement equals
    om * I_{(w/2)^2}(1/2, (m+1)/2), exact for 0 <= w <= 2.
    """
    w = np.asarray(w, dtype=float)
    om = unit_ball_volume(m)
    x = np.clip(0.25 * w * w, 0.0, 1.0)
    return om * sc.betainc(0.5, 0.5 * (m + 1), x)


def _content_integrand(m, h):
    def f(v):
        return np.exp(-v * v) * v ** (m - 1) * overlap_volume(m, 1.0, 1.0, h * v)
    return f


def _loss_integrand(m, h):
    def f(v):
        return np.exp(-v * v) * v ** (m - 1) * unit_overlap_complement(m, h * v)
    return f


def _gauss_tail(m, v):
    """int_v^inf e^{-u^2} u^{m-1} du = Gamma(m/2) Q(m/2, v^2) / 2."""
    return 0.5 * math.gamma(0.5 * m) * float(sc.gammaincc(0.5 * m, v * v))


def unit_ball_heat_content(m: int, tau: float,
                           spec: QuadratureSpec = None) -> ValueWithError:
    """H1(tau): heat content of the unit ball at rescaled time tau."""
    tau = check_time(tau)
    spec = spec or QuadratureSpec(rel_tol=1e-11, abs_tol=1e-15, max_subdivisions=2000)
    om = unit_ball_volume(m)
    h = 2.0 * math.sqrt(tau)
    vmax = min(2.0 / h, _VMAX)
    got = integrate(_content_integrand(m, h), 0.0, vmax, spec)
    scale = m * om * math.pi ** (-0.5 * m)
    # beyond VMAX (only when 2/h > VMAX) the integrand is at most om e^{-v^2} v^{m-1}
    slop = om * _gauss_tail(m, vmax) if 2.0 / h > _VMAX else 0.0
    return ValueWithError(scale * got.value, scale * (got.error_bound + slop))


def unit_ball_heat_loss(m: int, tau: float,
                        spec: QuadratureSpec = None) -> ValueWithError:
    """F1(tau) = om - H1(tau), computed directly for relative accuracy."""
    tau = check_time(tau)
    spec = spec or QuadratureSpec(rel_tol=1e-11, abs_tol=1e-15, max_subdivisions=2000)
    om = unit_ball_volume(m)
    h = 2.0 * math.sqrt(tau)
    vmax = min(2.0 / h, _VMAX)
    got = integrate(_loss_integrand(m, h), 0.0, vmax, spec)
    analytic = om * _gauss_tail(m, vmax)
    # if the window was cut at VMAX the analytic piece overcounts by at
    # most om * tail beyond VMAX, where the true integrand has OV >= 0
    slop = om * _gauss_tail(m, _VMAX) if 2.0 / h > _VMAX else 0.0
    scale = m * om * math.pi ** (-0.5 * m)
    return ValueWithError(scale * (got.value + analytic),
                          scale * (got.error_bound + slop))


def ball_heat_content(m: int, r: float, t: float) -> ValueWithError:
    """Heat content of B(0;r) at time t: r^m H1(t / r^2)."""
    if r <= 0:
        raise ValueError("radius must be positive")
    t = check_time(t)
    return unit_ball_heat_content(m, t / (r * r)).scaled(r ** m)


def ball_heat_loss(m: int, r: float, t: float) -> ValueWithError:
    """Heat loss |B| - H of B(0;r) at time t: r^m F1(t / r^2)."""
    if r <= 0:
        raise ValueError("radius must be positive")
    t = check_time(t)
    return unit_ball_heat_loss(m, t / (r * r)).scaled(r ** m)


# ---------------------------------------------------------------------------
# memoized unit tables for bulk sums

class UnitHeatTable:
    """Monotone cubic interpolants of log H1 and log F1 on a log-tau grid.

    Used for bulk per-ball sums; the per-cell interpolation slack is
    measured against direct quadrature at cell midpoints (times a safety
    factor of 4) and charged into every interpolated value's error bound.
    Out-of-range arguments fall back to direct batched quadrature.
    """

    TAU_LO = 1e-10
    TAU_HI = 1e8
    N_GRID = 512

    def __init__(self, m: int):
        self.m = m
        lt = np.linspace(math.log(self.TAU_LO), math.log(self.TAU_HI), self.N_GRID)
        self.log_tau = lt
        taus = np.exp(lt)
        hv, he = _unit_batch(m, taus, loss=False)
        fv, fe = _unit_batch(m, taus, loss=True)
        self._logH = PchipInterpolator(lt, np.log(hv), extrapolate=False)
        self._logF = PchipInterpolator(lt, np.log(fv), extrapolate=False)
        base_rel_h = np.max(he / hv)
        base_rel_f = np.max(fe / fv)
        # probe three interior points per cell; PCHIP error is not
        # extremal at midpoints, hence the additional safety factor
        slack_h = np.zeros(self.N_GRID - 1)
        slack_f = np.zeros(self.N_GRID - 1)
        for frac in (0.25, 0.5, 0.75):
            probe = lt[:-1] + frac * np.diff(lt)
            hm, _ = _unit_batch(m, np.exp(probe), loss=False)
            fm, _ = _unit_batch(m, np.exp(probe), loss=True)
            slack_h = np.maximum(slack_h, np.abs(np.exp(self._logH(probe)) / hm - 1.0))
            slack_f = np.maximum(slack_f, np.abs(np.exp(self._logF(probe)) / fm - 1.0))
        self._slack_h = 6.0 * np.maximum(slack_h, 1e-15) + base_rel_h
        self._slack_f = 6.0 * np.maximum(slack_f, 1e-15) + base_rel_f

    def _eval(self, tau, loss: bool):
        tau = np.asarray(tau, dtype=float)
        lt = np.log(tau)
        vals = np.empty(tau.shape)
        errs = np.empty(tau.shape)
        inside = (lt >= self.log_tau[0]) & (lt <= self.log_tau[-1])
        if np.any(inside):
            interp = self._logF if loss else self._logH
            slack = self._slack_f if loss else self._slack_h
            v = np.exp(interp(lt[inside]))
            cell = np.clip(np.searchsorted(self.log_tau, lt[inside]) - 1,
                           0, self.N_GRID - 2)
            vals[inside] = v
            errs[inside] = v * slack[cell]
        if np.any(~inside):
            v, e = _unit_batch(self.m, tau[~inside], loss=loss)
            vals[~inside] = v
            errs[~inside] = e
        return vals, errs

    def content_many(self, tau):
        return self._eval(tau, loss=False)

    def loss_many(self, tau):
        return self._eval(tau, loss=True)

    def content_slack(self) -> float:
        return float(self._slack_h.max())

    def loss_slack(self) -> float:
        return float(self._slack_f.max())


def _unit_batch(m, taus, loss: bool, n_low=48, n_high=96):
    """Direct batched quadrature of H1 or F1 over an array of tau."""
    taus = np.asarray(taus, dtype=float)
    om = unit_ball_volume(m)
    h = 2.0 * np.sqrt(taus)
    vmax = np.minimum(2.0 / h, _VMAX)
    hcol = h[:, None]

    if loss:
        f = lambda v: np.exp(-v * v) * v ** (m - 1) \
            * unit_overlap_complement(m, hcol * v)
    else:
        f = lambda v: np.exp(-v * v) * v ** (m - 1) \
            * overlap_volume(m, 1.0, 1.0, hcol * v)

    vals, errs = batch_rule_pair(f, np.zeros_like(vmax), vmax, n_low, n_high)
    scale = m * om * math.pi ** (-0.5 * m)
    if loss:
        analytic = om * 0.5 * math.gamma(0.5 * m) * sc.gammaincc(0.5 * m, vmax * vmax)
        vals = vals + analytic
        errs = errs + np.where(2.0 / h > _VMAX, om * _gauss_tail(m, _VMAX), 0.0)
    else:
        errs = errs + np.where(2.0 / h > _VMAX, om * _gauss_tail(m, _VMAX), 0.0)
    return scale * vals, scale * errs


_TABLES: dict = {}
_TABLE_LOCK = threading.Lock()


def unit_heat_table(m: int) -> UnitHeatTable:
    """Per-dimension write-once cache of the interpolation tables."""
    table = _TABLES.get(m)
    if table is None:
        with _TABLE_LOCK:
            table = _TABLES.get(m)
            if table is None:
                table = UnitHeatTable(m)
                _TABLES[m] = table
    return table


# ---------------------------------------------------------------------------
# exchanged heat between two balls

def _radial_gauss_pdf(m, w, d, t):
    """Density of |Y| at w for Y ~ N(d e_1, 2t I_m), d > 0.

    (w/(2t)) (w/d)^((m-2)/2) exp(-(w-d)^2/(4t)) ive((m-2)/2, w d / (2t));
    the exponentially scaled Bessel keeps this stable for all arguments.
    """
    nu = 0.5 * (m - 2)
    arg = w * d / (2.0 * t)
    out = (w / (2.0 * t)) * np.exp(-((w - d) ** 2) / (4.0 * t)) * sc.ive(nu, arg)
    if nu != 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = out * np.where(w > 0, (w / d) ** nu, 0.0)
    return out


def _cross_window(r1, r2, d, t):
    """Integration window and left-truncation charge for the w-integral."""
    delta = 28.0 * math.sqrt(t)
    lo = max(0.0, d - delta)
    hi = min(r1 + r2, d + delta)
    return lo, hi


def _cross_left_charge(m, r1, r2, d, t, lo):
    if lo <= 0.0:
        return 0.0
    vmin = unit_ball_volume(m) * min(r1, r2) ** m
    # P(|Y - mu| >= d - lo) <= P(chi^2_m >= (d-lo)^2 / (2t))
    return vmin * float(sc.gammaincc(0.5 * m, (d - lo) ** 2 / (4.0 * t)))


def cross_heat_content(m: int, r1: float, r2: float, d: float,
                       t: float, spec: QuadratureSpec = None) -> ValueWithError:
    """Exchanged heat between B(0;r1) and B(d e_1;r2) through time t.

    The double integral of the kernel over the two balls reduces to
    int OV(m, r1, r2, w) f(w) dw with f the radial density of
    N(d e_1, 2t I_m); touching configurations (d = r1 + r2) are allowed.
    """
    t = check_time(t)
    if r1 <= 0 or r2 <= 0:
        raise ValueError("radii must be positive")
    if d < (r1 + r2) * (1.0 - 1e-12):
        raise ValueError("balls must be disjoint or touching (d >= r1 + r2)")
    if m == 1:
        return _cross_interval(r1, r2, d, t)
    spec = spec or QuadratureSpec(rel_tol=1e-11, abs_tol=1e-30, max_subdivisions=800)
    lo, hi = _cross_window(r1, r2, d, t)
    charge = _cross_left_charge(m, r1, r2, d, t, lo)
    if lo >= hi:
        return ValueWithError(0.0, charge)
    f = lambda w: overlap_volume(m, r1, r2, w) * _radial_gauss_pdf(m, w, d, t)
    kink = abs(r1 - r2)
    pts = [kink] if lo < kink < hi else []
    got = integrate(f, lo, hi, spec, points=pts)
    return ValueWithError(got.value, got.error_bound + charge)


def _erf_antideriv(z):
    return z * sc.erf(z) + np.exp(-z * z) / math.sqrt(math.pi)


def _cross_interval(r1, r2, d, t):
    """m = 1: closed form via the antiderivative of erf."""
    s = 2.0 * math.sqrt(t)
    E = lambda z: float(_erf_antideriv(np.asarray(z)))
    val = 0.5 * s * (E((d + r2 + r1) / s) - E((d + r2 - r1) / s)
                     - E((d - r2 + r1) / s) + E((d - r2 - r1) / s))
    err = 1e-15 * (d + r1 + r2) + 1e-13 * abs(val)
    return ValueWithError(max(val, 0.0), err)


def cross_heat_content_many(m, r1, r2, d, t, n_low=16, n_high=32):
    """Batched exchanged-heat integrals over arrays of ball pairs.

    Returns (values, error_bounds).  Each row is integrated on its
    effective window with an embedded rule pair; the window splits at the
    overlap-volume kink w = |r1 - r2| when that falls inside.
    """
    t = check_time(t)
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    d = np.asarray(d, dtype=float)
    if m == 1:
        s = 2.0 * math.sqrt(t)
        E = _erf_antideriv
        vals = 0.5 * s * (E((d + r2 + r1) / s) - E((d + r2 - r1) / s)
                          - E((d - r2 + r1) / s) + E((d - r2 - r1) / s))
        errs = 1e-15 * (d + r1 + r2) + 1e-13 * np.abs(vals)
        return np.maximum(vals, 0.0), errs

    delta = 28.0 * math.sqrt(t)
    lo = np.maximum(0.0, d - delta)
    hi = np.minimum(r1 + r2, d + delta)
    om = unit_ball_volume(m)
    vmin = om * np.minimum(r1, r2) ** m
    with np.errstate(over="ignore"):
        charge = np.where(lo > 0.0,
                          vmin * sc.gammaincc(0.5 * m, (d - lo) ** 2 / (4.0 * t)),
                          0.0)
    kink = np.clip(np.abs(r1 - r2), lo, hi)

    npair = len(d)
    los = np.concatenate([lo, kink])
    his = np.concatenate([kink, hi])
    rr1 = np.concatenate([r1, r1])
    rr2 = np.concatenate([r2, r2])
    dd = np.concatenate([d, d])

    def f(w):
        return overlap_volume_rows(m, rr1, rr2, w) * \
            _radial_gauss_pdf(m, w, dd[:, None], t)

    vals2, errs2 = batch_rule_pair(f, los, his, n_low, n_high)
    vals = vals2[:npair] + vals2[npair:]
    errs = errs2[:npair] + errs2[npair:] + charge
    return np.maximum(vals, 0.0), errs


def overlap_volume_rows(m, r1, r2, w):
    """Overlap volume with per-row radii; w has shape (rows, nodes)."""
    r1c = r1[:, None]
    r2c = r2[:, None]
    om = unit_ball_volume(m)
    vmin = om * np.minimum(r1c, r2c) ** m
    out = np.zeros_like(w)
    nested = w <= np.abs(r1c - r2c)
    lens = (~nested) & (w < r1c + r2c)
    wl = np.where(lens, w, 1.0)
    c1 = (wl * wl + r1c * r1c - r2c * r2c) / (2.0 * wl)
    c2 = (wl * wl - r1c * r1c + r2c * r2c) / (2.0 * wl)
    h1 = np.clip(r1c - c1, 0.0, 2.0 * r1c)
    h2 = np.clip(r2c - c2, 0.0, 2.0 * r2c)
    v = _cap_volume_rows(m, r1c, h1) + _cap_volume_rows(m, r2c, h2)
    out[lens] = v[lens]
    out[nested] = np.broadcast_to(vmin, w.shape)[nested]
    return out


def _cap_volume_rows(m, r, h):
    full = unit_ball_volume(m) * r ** m
    small = np.minimum(h, 2.0 * r - h)
    x = np.clip((2.0 * r * small - small * small) / (r * r), 0.0, 1.0)
    minor = 0.5 * full * sc.betainc(0.5 * (m + 1), 0.5, x)
    return np.where(h <= r, minor, full - minor)


# ---------------------------------------------------------------------------
# Li-Yau envelope

@dataclass(frozen=True)
class EnvelopeReport:
    passed: bool
    worst_margin: float
    violations: int
    n_samples: int


def li_yau_envelope_check(m: int, lyc: LiYauConstants,
                          n_samples: int, seed: int,
                          rel_slack: float = 1e-14) -> EnvelopeReport:
    """Check the two-sided kernel envelope on random (x, y, t) draws.

    In R^m with |B(x; sqrt(t))| = om t^(m/2) the envelope reads

        C1 e^{-s^2/(2 D1 t)} / (om t^(m/2)) <= p <= C2 e^{-s^2/(2 D2 t)} / (om t^(m/2)).

    Failures are reported as data (passed=False), not raised.
    """
    rng = np.random.default_rng(seed)
    om = unit_ball_volume(m)
    t = np.exp(rng.uniform(math.log(1e-6), math.log(1e3), n_samples))
    s = np.exp(rng.uniform(math.log(1e-3), math.log(30.0), n_samples))
    s2 = s * s
    log_p = -0.5 * m * np.log(4.0 * math.pi * t) - s2 / (4.0 * t)
    log_lo = math.log(lyc.C1) - s2 / (2.0 * lyc.D1 * t) - math.log(om) \
        - 0.5 * m * np.log(t)
    log_hi = math.log(lyc.C2) - s2 / (2.0 * lyc.D2 * t) - math.log(om) \
        - 0.5 * m * np.log(t)
    margin_lo = log_p - log_lo
    margin_hi = log_hi - log_p
    worst = float(min(margin_lo.min(), margin_hi.min()))
    violations = int(np.sum(margin_lo < -rel_slack) + np.sum(margin_hi < -rel_slack))
    return EnvelopeReport(violations == 0, worst, violations, n_samples)
