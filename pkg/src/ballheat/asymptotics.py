"""Small-time regime classification, law coefficients, and power-law fits.

The coefficients of the lattice-family laws are Riesz-type double
integrals over the unit ball, reduced to one dimension through the set
covariance (interior) or its complement (exterior), times the closed
Gamma-function prefactor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special as sc

from .geometry import unit_ball_volume, overlap_volume
from .kernel import unit_overlap_complement
from .numerics import QuadratureSpec, ValueWithError, gamma_fn, integrate

__all__ = [
    "RegimeLaw",
    "FitResult",
    "riesz_in",
    "riesz_out",
    "c_coeff",
    "d_coeff",
    "classify_regime",
    "fit_power_law",
    "suggest_fit_window",
]

_SPEC = QuadratureSpec(rel_tol=1e-11, abs_tol=1e-15, max_subdivisions=2000)


def riesz_in(m: int, s: float) -> ValueWithError:
    """int_{B(0;1)} int_{B(0;1)} |x - y|^(-s), for 0 <= s < m.

    Reduces to int_0^2 r^(-s) m om r^(m-1) OV(m,1,1,r) dr through the set
    covariance of the ball; the r^(m-1-s) endpoint is handled by a power
    substitution.
    """
    if not (0.0 <= s < m):
        raise ValueError("riesz_in requires 0 <= s < m")
    om = unit_ball_volume(m)
    f = lambda r: r ** (m - 1 - s) * overlap_volume(m, 1.0, 1.0, r)
    expo = m - 1 - s
    hint = (expo, None) if expo < 0 else None
    got = integrate(f, 0.0, 2.0, _SPEC, singularity=hint)
    return got.scaled(m * om)


def riesz_out(m: int, s: float) -> ValueWithError:
    """int_{B(0;1)} int_{R^m - B(0;1)} |x - y|^(-s), for m < s < m + 1.

    The complement covariance om - OV vanishes linearly at 0, keeping the
    integrand integrable; beyond r = 2 the integral has the closed tail
    om^2 m 2^(m-s) / (s - m).  Arguments within 1e-6 of the divergent
    boundary s = m are rejected.
    """
    if not (m + 1e-6 < s < m + 1.0):
        raise ValueError("riesz_out requires m + 1e-6 < s < m + 1")
    om = unit_ball_volume(m)
    f = lambda r: r ** (m - 1 - s) * unit_overlap_complement(m, r)
    got = integrate(f, 0.0, 2.0, _SPEC, singularity=(m - s, None))
    tail = om * 2.0 ** (m - s) / (s - m)
    return ValueWithError(m * om * (got.value + tail), m * om * got.error_bound)


def _law_prefactor(m: int, alpha: float, a: float) -> float:
    """2^(m-1-1/alpha) pi^(-m/2) alpha^(-1) Gamma((2 m alpha - 1)/(2 alpha)) a^(1/alpha)."""
    return 2.0 ** (m - 1.0 - 1.0 / alpha) * math.pi ** (-0.5 * m) / alpha \
        * gamma_fn((2.0 * m * alpha - 1.0) / (2.0 * alpha)) * a ** (1.0 / alpha)


def c_coeff(m: int, alpha: float, a: float) -> ValueWithError:
    """Leading coefficient of the lattice heat-content law.

    Valid in the infinite-measure regime 1/(2m) < alpha < 1/m; the
    associated Riesz exponent is s = (2 m alpha - 1)/alpha in (0, m).
    """
    if not (1.0 / (2 * m) < alpha < 1.0 / m):
        raise ValueError("c_coeff requires 1/(2m) < alpha < 1/m")
    s = (2.0 * m * alpha - 1.0) / alpha
    return riesz_in(m, s).scaled(_law_prefactor(m, alpha, a))


def d_coeff(m: int, alpha: float, a: float) -> ValueWithError:
    """Leading coefficient of the lattice heat-loss law.

    Valid in the infinite-perimeter regime 1/m < alpha < 1/(m-1); the
    Riesz exponent s = (2 m alpha - 1)/alpha lies in (m, m+1).
    """
    if not (1.0 / m < alpha < (1.0 / (m - 1) if m > 1 else math.inf)):
        raise ValueError("d_coeff requires 1/m < alpha < 1/(m-1)")
    s = (2.0 * m * alpha - 1.0) / alpha
    return riesz_out(m, s).scaled(_law_prefactor(m, alpha, a))


@dataclass(frozen=True)
class RegimeLaw:
    """Expected small-t law for a given (m, alpha, family).

    ``covered`` is False at regime boundaries and outside the ranges
    treated by the theory; then the other fields are undefined except
    ``note``.  ``coefficient`` is None when only two-sided comparability
    is known (chain) or when no closed coefficient applies.
    """

    quantity: str  # "H" or "F"
    exponent: float
    coefficient: Optional[float]
    coefficient_kind: Optional[str]  # "c", "d", "perimeter" or None
    remainder: str
    covered: bool = True
    note: str = ""


def _perimeter_infinite(m: int, alpha: float, a: float) -> float:
    """Total perimeter of the infinite family: m om a^(m-1) zeta((m-1) alpha)."""
    return m * unit_ball_volume(m) * a ** (m - 1) \
        * float(sc.zeta((m - 1) * alpha, 1))


def classify_regime(m: int, alpha: float, family: str,
                    a: Optional[float] = None) -> RegimeLaw:
    """The applicable small-t law, mirroring the regime case list.

    Boundary values of alpha (and ranges the theory does not treat) are
    reported as not covered rather than extrapolated.  Numeric
    coefficients require ``a``; otherwise only the kind is reported.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if family not in ("lattice", "chain"):
        raise ValueError("family must be lattice or chain")
    expo = (m * alpha - 1.0) / (2.0 * alpha)

    if family == "chain":
        if 1.0 / (2 * m - 1) < alpha < 1.0 / m:
            return RegimeLaw("H", expo, None, None, "two-sided-only")
        return RegimeLaw("H", math.nan, None, None, "", covered=False,
                         note="chain law covers 1/(2m-1) < alpha < 1/m only")

    lo = 1.0 / (2 * m)
    if alpha <= lo:
        return RegimeLaw("H", math.nan, None, None, "", covered=False,
                         note="heat content infinite for alpha <= 1/(2m)")
    if lo < alpha < 1.0 / m:
        coeff = c_coeff(m, alpha, a).value if a is not None else None
        return RegimeLaw("H", expo, coeff, "c", "O(1)")
    if alpha == 1.0 / m:
        return RegimeLaw("H", math.nan, None, None, "", covered=False,
                         note="boundary alpha = 1/m not covered")
    hi_d = 1.0 / (m - 1) if m > 1 else math.inf
    if alpha < hi_d:
        coeff = d_coeff(m, alpha, a).value if a is not None else None
        return RegimeLaw("F", expo, coeff, "d", "O(t^{1/2})")
    if alpha == hi_d:
        return RegimeLaw("F", math.nan, None, None, "", covered=False,
                         note="boundary alpha = 1/(m-1) not covered")
    # finite perimeter from here on: F = pi^(-1/2) P sqrt(t) + remainder
    coeff = math.pi ** -0.5 * _perimeter_infinite(m, alpha, a) \
        if a is not None else None
    if m == 2 or alpha < 1.0 / (m - 2):
        return RegimeLaw("F", 0.5, coeff, "perimeter",
                         "O(t^{(m*alpha-1)/(2*alpha)})")
    if alpha == 1.0 / (m - 2):
        return RegimeLaw("F", 0.5, coeff, "perimeter", "O(t*log(1/t))")
    return RegimeLaw("F", 0.5, coeff, "perimeter", "O(t)")


@dataclass(frozen=True)
class FitResult:
    """Least-squares power-law fit on log-log axes."""

    exponent: float
    log_coefficient: float
    r_squared: float
    t_window: tuple

    @property
    def coefficient(self) -> float:
        return math.exp(self.log_coefficient)


def fit_power_law(points) -> FitResult:
    """Fit value = C t^p by least squares on (log t, log value).

    Requires at least 4 strictly positive samples.
    """
    pts = [(float(t), float(v)) for t, v in points]
    if len(pts) < 4:
        raise ValueError("need at least 4 points")
    t = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(t <= 0) or np.any(v <= 0):
        raise ValueError("power-law fit requires positive data")
    lt = np.log(t)
    lv = np.log(v)
    slope, intercept = np.polyfit(lt, lv, 1)
    resid = lv - (slope * lt + intercept)
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), min(max(r2, 0.0), 1.0),
                     (float(t.min()), float(t.max())))


def suggest_fit_window(m: int, alpha: float, a: float, family: str,
                       contamination: float = 0.1) -> tuple:
    """One-decade window whose predicted remainder/leading ratio is small.

    The window top solves bound(remainder)/leading = contamination using
    the crude remainder bounds om a^m/(1 - alpha m) (H regime) and the
    perimeter-type O(sqrt t) sum (F regime); laws are t -> 0 statements,
    so finite windows need this documented control.
    """
    law = classify_regime(m, alpha, family, a)
    if not law.covered:
        raise ValueError("no covered law for these parameters")
    om = unit_ball_volume(m)
    if law.quantity == "H" and law.coefficient_kind == "c":
        lead = law.coefficient
        remainder_scale = om * a ** m / (1.0 - alpha * m)
        # ratio = remainder/(c t^expo) = contamination
        top = (contamination * lead / remainder_scale) ** (1.0 / -law.exponent)
    elif law.coefficient_kind == "d":
        lead = law.coefficient
        remainder_scale = 4.0 * m * om * a ** (m - 1) / math.sqrt(math.pi)
        top = (contamination * lead / remainder_scale) ** (1.0 / (0.5 - law.exponent))
    elif law.coefficient_kind == "perimeter":
        lead = law.coefficient
        gap_expo = (m * alpha - 1.0) / (2.0 * alpha) - 0.5
        top = contamination ** (1.0 / gap_expo) if gap_expo > 0 else 1e-8
    else:
        top = 1e-4  # two-sided chain laws: no coefficient to control
    return (top / 10.0, top)
