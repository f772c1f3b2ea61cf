"""Balls and ball unions in R^m, and their purely geometric quantities.

Volumes, perimeters, two-ball overlap volumes, the local occupation
measures mu(x;R) = |B(x;R) ∩ Ω| and nu(x;R) = |B(x;R) \\ Ω|, and the two
generated configurations used throughout: shrinking balls centred on the
integer lattice, and a collinear chain of touching shrinking balls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special as sc

from .numerics import comp_sum

__all__ = [
    "Ball",
    "BallUnion",
    "RadiusProfile",
    "FinitenessReport",
    "unit_ball_volume",
    "cap_volume",
    "overlap_volume",
    "make_lattice_config",
    "make_chain_config",
    "mu",
    "nu",
    "total_measure",
    "perimeter",
    "finiteness_report",
]

_TOUCH_RTOL = 1e-12


def unit_ball_volume(m: int) -> float:
    """Volume of the unit ball in R^m: pi^(m/2) / Gamma(m/2 + 1)."""
    if m < 1:
        raise ValueError("dimension must be >= 1")
    return math.pi ** (0.5 * m) / math.gamma(0.5 * m + 1.0)


def cap_volume(m: int, r: float, h):
    """Volume of a spherical cap of height h of B(0; r) in R^m.

    Uses the regularized incomplete beta function; accepts an array of
    heights.  Heights outside [0, 2r] are rejected.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < -1e-12 * r) or np.any(h_arr > 2 * r * (1 + 1e-12)):
        raise ValueError("cap height must lie in [0, 2r]")
    h_arr = np.clip(h_arr, 0.0, 2.0 * r)
    full = unit_ball_volume(m) * r ** m
    small = np.minimum(h_arr, 2.0 * r - h_arr)  # height of the minor cap
    x = np.clip((2.0 * r * small - small * small) / (r * r), 0.0, 1.0)
    minor = 0.5 * full * sc.betainc(0.5 * (m + 1), 0.5, x)
    out = np.where(h_arr <= r, minor, full - minor)
    return out if out.ndim else float(out)


def overlap_volume(m: int, r1: float, r2: float, d):
    """|B(0;r1) ∩ B(d e_1; r2)| as a sum of two cap volumes.

    Vectorized over the centre distance d.  Returns the full volume of
    the smaller ball when nested, 0 when disjoint.
    """
    if r1 <= 0 or r2 <= 0:
        raise ValueError("radii must be positive")
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < 0):
        raise ValueError("distance must be non-negative")
    vmin = unit_ball_volume(m) * min(r1, r2) ** m
    out = np.zeros(d_arr.shape)
    nested = d_arr <= abs(r1 - r2)
    lens = (~nested) & (d_arr < r1 + r2)
    if np.any(lens):
        dl = d_arr[lens]
        c1 = (dl * dl + r1 * r1 - r2 * r2) / (2.0 * dl)
        c2 = (dl * dl - r1 * r1 + r2 * r2) / (2.0 * dl)
        out[lens] = cap_volume(m, r1, np.clip(r1 - c1, 0.0, 2.0 * r1)) \
            + cap_volume(m, r2, np.clip(r2 - c2, 0.0, 2.0 * r2))
    out[nested] = vmin
    return out if out.ndim else float(out)


@dataclass
class Ball:
    """A ball in R^m given by its centre and positive radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).ravel()
        if self.center.size < 1:
            raise ValueError("centre must have at least one coordinate")
        if not (self.radius > 0.0):
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.size

    def volume(self) -> float:
        return unit_ball_volume(self.dim) * self.radius ** self.dim


@dataclass(frozen=True)
class RadiusProfile:
    """Power-law radius rule r_i = a * i^(-alpha)."""

    a: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.a <= 0.5):
            raise ValueError("a must lie in (0, 1/2]")
        if not (self.alpha > 0.0):
            raise ValueError("alpha must be positive")

    def radii(self, n: int) -> np.ndarray:
        return self.a * np.arange(1, n + 1, dtype=float) ** (-self.alpha)


@dataclass(frozen=True)
class GeneratorParams:
    a: float
    alpha: float
    n: int


class BallUnion:
    """A finite union of pairwise interior-disjoint balls in R^m.

    Balls are stored as a centre matrix and radius vector; radii must be
    non-increasing in index.  ``family`` records how the union was
    produced ("lattice", "chain" or "custom"); generated families carry
    their (a, alpha, N) parameters so that the infinite-family remainder
    beyond the stored balls can be accounted for by downstream code.
    """

    def __init__(self, dim, centers, radii, family="custom",
                 params: Optional[GeneratorParams] = None, validate=True):
        self.dim = int(dim)
        self.centers = np.ascontiguousarray(centers, dtype=float).reshape(-1, self.dim)
        self.radii = np.ascontiguousarray(radii, dtype=float).ravel()
        if family not in ("lattice", "chain", "custom"):
            raise ValueError("family must be lattice, chain or custom")
        self.family = family
        self.params = params
        if validate:
            self._validate()

    def _validate(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if len(self.radii) != len(self.centers):
            raise ValueError("centers and radii lengths differ")
        if len(self.radii) == 0:
            raise ValueError("a ball union needs at least one ball")
        if np.any(self.radii <= 0.0):
            raise ValueError("radii must be positive")
        if np.any(np.diff(self.radii) > 1e-12 * self.radii[0]):
            raise ValueError("radii must be non-increasing in index")
        if self.family == "lattice" and 1.0 - 2.0 * self.radii[0] <= 0.0:
            raise ValueError("lattice family requires delta = 1 - 2 r_1 > 0")
        self._check_disjoint()

    def _check_disjoint(self):
        n = len(self.radii)
        allow_touch = self.family == "chain"
        slack = _TOUCH_RTOL * (1.0 + float(self.radii[0]))
        if n <= 2000:
            d = np.linalg.norm(self.centers[:, None, :] - self.centers[None, :, :], axis=2)
            rsum = self.radii[:, None] + self.radii[None, :]
            bad = d < rsum - (slack if allow_touch else slack)
            np.fill_diagonal(bad, False)
            if np.any(bad):
                i, j = np.argwhere(bad)[0]
                raise ValueError(f"balls {i} and {j} overlap")
        else:
            from scipy.spatial import cKDTree
            tree = cKDTree(self.centers)
            rmax = float(self.radii.max())
            for i, j in tree.query_pairs(2.0 * rmax):
                d = float(np.linalg.norm(self.centers[i] - self.centers[j]))
                if d < self.radii[i] + self.radii[j] - slack:
                    raise ValueError(f"balls {i} and {j} overlap")

    def __len__(self):
        return len(self.radii)

    @property
    def balls(self):
        return [Ball(c, float(r)) for c, r in zip(self.centers, self.radii)]

    @property
    def delta(self) -> Optional[float]:
        """Lattice clearance 1 - 2 r_1 (lattice family only)."""
        if self.family != "lattice":
            return None
        return 1.0 - 2.0 * float(self.radii[0])

    def truncated(self, n: int) -> "BallUnion":
        n = min(n, len(self))
        params = None
        if self.params is not None:
            params = GeneratorParams(self.params.a, self.params.alpha, n)
        return BallUnion(self.dim, self.centers[:n], self.radii[:n],
                         self.family, params, validate=False)

    def to_dict(self) -> dict:
        d = {"dim": self.dim, "family": self.family,
             "balls": [{"center": list(map(float, c)), "radius": float(r)}
                       for c, r in zip(self.centers, self.radii)]}
        if self.params is not None:
            d["params"] = {"a": self.params.a, "alpha": self.params.alpha,
                           "n": self.params.n}
        return d


def _lattice_points(m: int, n: int) -> np.ndarray:
    """First n points of Z^m sorted by |z|^2 with lexicographic ties."""
    if m == 1:
        half = n // 2 + 1
        pts = np.arange(-half, half + 1, dtype=float).reshape(-1, 1)
    else:
        # a box guaranteed to contain the n nearest lattice points
        side = int(math.ceil((n / unit_ball_volume(m)) ** (1.0 / m))) + 2
        axes = np.arange(-side, side + 1, dtype=float)
        grids = np.meshgrid(*([axes] * m), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
    norms = np.einsum("ij,ij->i", pts, pts)
    keys = tuple(pts[:, k] for k in reversed(range(m))) + (norms,)
    order = np.lexsort(keys)
    if len(order) < n:
        raise ValueError("lattice enumeration box too small")
    return pts[order[:n]]


def make_lattice_config(m: int, a: float, alpha: float, n: int) -> BallUnion:
    """Union of balls centred on Z^m with radii r_i = a i^(-alpha).

    Centres follow the fixed enumeration of Z^m sorted by squared norm
    with lexicographic tie-breaking; requires a < 1/2 so that the
    clearance delta = 1 - 2a is positive.
    """
    if not (0.0 < a < 0.5):
        raise ValueError("lattice config requires 0 < a < 1/2")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n < 1:
        raise ValueError("need at least one ball")
    profile = RadiusProfile(a, alpha)
    centers = _lattice_points(m, n)
    return BallUnion(m, centers, profile.radii(n), "lattice",
                     GeneratorParams(a, alpha, n), validate=False)


def make_chain_config(m: int, a: float, alpha: float, n: int) -> BallUnion:
    """Collinear touching balls with radii a i^(-alpha) along the first axis.

    v_1 = 0 and |v_{i+1} - v_i| = r_i + r_{i+1} exactly, which reproduces
    v_i = a (1 + 2 sum_{2<=j<=i-1} j^(-alpha) + i^(-alpha)) on axis 1.
    """
    if a <= 0 or alpha <= 0:
        raise ValueError("a and alpha must be positive")
    if n < 1:
        raise ValueError("need at least one ball")
    r = a * np.arange(1, n + 1, dtype=float) ** (-alpha)
    x = np.zeros(n)
    if n > 1:
        x[1:] = np.cumsum(r[:-1] + r[1:])
    centers = np.zeros((n, m))
    centers[:, 0] = x
    return BallUnion(m, centers, r, "chain",
                     GeneratorParams(a, alpha, n), validate=False)


def mu(union: BallUnion, x, r: float) -> float:
    """mu(x; R) = |B(x; R) ∩ Ω|, exact for interior-disjoint unions."""
    if r <= 0:
        raise ValueError("R must be positive")
    x = np.asarray(x, dtype=float).ravel()
    if x.size != union.dim:
        raise ValueError("point dimension mismatch")
    d = np.linalg.norm(union.centers - x[None, :], axis=1)
    near = d < r + union.radii  # the rest contribute nothing
    if not np.any(near):
        return 0.0
    vals = [overlap_volume(union.dim, r, float(rj), float(dj))
            for rj, dj in zip(union.radii[near], d[near])]
    return comp_sum(vals)


def mu_many(union: BallUnion, pts: np.ndarray, r: float) -> np.ndarray:
    """Vectorized mu over a (n, m) array of query points."""
    pts = np.asarray(pts, dtype=float).reshape(-1, union.dim)
    out = np.zeros(len(pts))
    for c, rj in zip(union.centers, union.radii):
        d = np.linalg.norm(pts - c[None, :], axis=1)
        mask = d < r + rj
        if np.any(mask):
            out[mask] += overlap_volume(union.dim, r, float(rj), d[mask])
    return out


def nu(union: BallUnion, x, r: float) -> float:
    """nu(x; R) = |B(x; R)| - mu(x; R)."""
    return unit_ball_volume(union.dim) * r ** union.dim - mu(union, x, r)


def total_measure(union: BallUnion) -> float:
    """Sum of the ball volumes (the balls are disjoint)."""
    om = unit_ball_volume(union.dim)
    return comp_sum(om * union.radii ** union.dim)


def perimeter(union: BallUnion) -> float:
    """Sum of the sphere areas m omega_m r^(m-1)."""
    m = union.dim
    om = unit_ball_volume(m)
    return comp_sum(m * om * union.radii ** (m - 1))


@dataclass(frozen=True)
class FinitenessReport:
    """Which integral quantities of the infinite family are finite."""

    heat_content_finite: bool
    measure_finite: bool
    perimeter_finite: bool
    witness_sums: dict = field(default_factory=dict)


def finiteness_report(m: int, profile: RadiusProfile, family: str) -> FinitenessReport:
    """Finiteness criteria for the generated families.

    Lattice: heat content finite iff sum r_i^(2m) < inf, i.e. 2 m alpha > 1.
    Chain: finite iff alpha > 1/(2m - 1).  Measure needs m alpha > 1 and
    perimeter needs (m-1) alpha > 1 (never finite for m = 1).
    """
    if family not in ("lattice", "chain"):
        raise ValueError("family must be lattice or chain")
    alpha = profile.alpha
    if family == "lattice":
        heat = 2.0 * m * alpha > 1.0
    else:
        heat = alpha > 1.0 / (2.0 * m - 1.0)
    measure = m * alpha > 1.0
    perim = (m - 1) * alpha > 1.0 if m >= 2 else False

    # partial sums plus integral tail brackets as numerical witnesses
    n = 2000
    i = np.arange(1, n + 1, dtype=float)
    witness = {}
    for name, power in (("sum_r^2m", 2 * m * alpha),
                        ("sum_r^m", m * alpha),
                        ("sum_r^(m-1)", (m - 1) * alpha)):
        partial = comp_sum(i ** (-power)) if power != 0 else float(n)
        if power > 1.0:
            tail_hi = n ** (1.0 - power) / (power - 1.0)
        else:
            tail_hi = math.inf
        witness[name] = {"partial_n": n, "partial": partial,
                         "tail_upper": tail_hi}
    return FinitenessReport(heat, measure, perim, witness)
