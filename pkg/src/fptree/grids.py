"""Time grids, truncation operators, martingale weights, and lattices.

This module owns the small deterministic objects the schemes are built
from: the uniform time grid, the polynomial-radius truncation
T(y) = min(1, R/|y|) y with R = R0 * h^{-alpha}, the truncated-increment
weight family H_j with its normalization Lambda, the moment-matched
trinomial increment distribution, and the spatial grid with nearest-point
projection.

Moments and Lambda are computed in exact rational arithmetic.  The
trinomial points are +-sqrt(3h) whose squares are rational, so even
moments are exact Fractions and odd moments vanish by symmetry; this is
what makes "moments 0..5 equal the Gaussian's exactly" a testable
statement rather than a tolerance game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

__all__ = [
    "ConfigurationError",
    "TimeGrid",
    "TruncationConfig",
    "IncrementDistribution",
    "WeightConfig",
    "SpatialGrid",
    "truncation_radius",
    "truncate",
    "truncate_increment",
    "increment_radius",
    "trinomial",
    "moment",
    "moment_exact",
    "gaussian_moment_exact",
    "make_weight_config",
    "weight_values",
    "grid_project",
    "grid_project_index",
    "default_alpha",
    "check_alpha",
]


class ConfigurationError(ValueError):
    """Raised when grid/truncation/weight parameters are inconsistent."""


# ---------------------------------------------------------------------------
# Time grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Uniform subdivision of [0, T] into N steps of size h = T/N."""

    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigurationError("T must be positive, got %r" % (self.T,))
        if self.N < 1:
            raise ConfigurationError("N must be >= 1, got %r" % (self.N,))

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> Tuple[float, ...]:
        h = self.h
        return tuple(i * h for i in range(self.N + 1))


# ---------------------------------------------------------------------------
# Truncation of values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncationConfig:
    """Parameters of the value truncation T(y).

    R0 and alpha set the radius R = R0 * h^{-alpha}.  mode selects the
    hard radial clamp or a C^1 mollified variant; epsilon is the blend
    width of the mollified mode (None means "use h").
    """

    R0: float = 10.0
    alpha: float = 0.25
    mode: str = "hard"
    epsilon: Optional[float] = None

    def __post_init__(self):
        if not self.R0 > 0:
            raise ConfigurationError("R0 must be positive")
        if not self.alpha > 0:
            raise ConfigurationError("alpha must be positive")
        if self.mode not in ("hard", "mollified"):
            raise ConfigurationError("mode must be 'hard' or 'mollified'")
        if self.epsilon is not None and self.epsilon < 0:
            raise ConfigurationError("epsilon must be nonnegative")


def default_alpha(m: int) -> float:
    """Largest clean exponent for a degree-m driver.

    The radius exponent must satisfy alpha <= 1/(2(m-1)); the default
    backs off by 1e-3 so the strict-inequality limits apply.  For m = 1
    the constraint is vacuous and 1.0 is returned (any positive value
    is admissible; a large alpha keeps the radius far from Lipschitz
    data).
    """
    if m <= 1:
        return 1.0
    return 1.0 / (2.0 * (m - 1)) - 1e-3


def check_alpha(cfg: TruncationConfig, m: int) -> None:
    """Enforce alpha <= 1/(2(m-1)) for the model's growth degree."""
    if m > 1 and cfg.alpha > 1.0 / (2.0 * (m - 1)):
        raise ConfigurationError(
            "alpha=%g exceeds 1/(2(m-1))=%g for m=%d"
            % (cfg.alpha, 1.0 / (2.0 * (m - 1)), m)
        )


def truncation_radius(cfg: TruncationConfig, h: float) -> float:
    """R = R0 * h^{-alpha}; positive and nonincreasing in h."""
    if not h > 0:
        raise ConfigurationError("h must be positive, got %r" % (h,))
    return cfg.R0 * h ** (-cfg.alpha)


def _mollified_radius_transfer(r: float, R: float, eps: float) -> float:
    # rho(r) = r below R, then the blend with rho'(R)=1, rho'(R+eps)=0.
    # Fixing the end value at R + eps/2 makes rho' linear (the Hermite
    # cubic degenerates), so rho' = 1 - (r-R)/eps lies in [0, 1]: the
    # transfer stays monotone and 1-Lipschitz.
    if r <= R:
        return r
    if eps <= 0.0 or r >= R + eps:
        return R if eps <= 0.0 else R + 0.5 * eps
    s = (r - R) / eps
    return R + eps * (s - 0.5 * s * s)


def truncate(cfg: TruncationConfig, h: float, y: float) -> float:
    """Radial truncation of y at radius R0 * h^{-alpha}.

    Hard mode is min(1, R/|y|) y.  Mollified mode applies a C^1 radius
    transfer that is the identity for |y| <= R and constant R + eps/2
    beyond R + eps.  Both are odd, 1-Lipschitz, and total (non-finite y
    maps to the signed cap).
    """
    R = truncation_radius(cfg, h)
    if y != y:  # nan stays nan: an exploded value must remain visible
        return y
    r = abs(y)
    if r <= R:
        return y
    if cfg.mode == "hard":
        return math.copysign(R, y)
    eps = h if cfg.epsilon is None else cfg.epsilon
    return math.copysign(_mollified_radius_transfer(r, R, eps), y)


# ---------------------------------------------------------------------------
# Increment truncation and weights
# ---------------------------------------------------------------------------


def increment_radius(h: float) -> float:
    """r = sqrt(2h) * ln(1/h); positive only for h < 1."""
    if not h > 0:
        raise ConfigurationError("h must be positive, got %r" % (h,))
    return math.sqrt(2.0 * h) * math.log(1.0 / h)


def truncate_increment(r_h: float, dw: float) -> float:
    """Clamp an increment to [-r_h, r_h]."""
    if not r_h > 0:
        raise ConfigurationError("r_h must be positive, got %r" % (r_h,))
    return min(max(dw, -r_h), r_h)


@dataclass(frozen=True)
class IncrementDistribution:
    """Discrete stand-in for a Brownian increment over one step.

    points and weights are the float support; weights_exact and
    squares_exact carry the rational data used by the exact moment and
    Lambda computations.  order_matched is the largest q such that
    moments 0..q agree with N(0, h).
    """

    points: Tuple[float, ...]
    weights: Tuple[float, ...]
    order_matched: int
    weights_exact: Tuple[Fraction, ...]
    squares_exact: Tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.points) != len(self.weights):
            raise ConfigurationError("points and weights length mismatch")
        if any(w < 0 for w in self.weights_exact):
            raise ConfigurationError("weights must be nonnegative")
        if sum(self.weights_exact) != 1:
            raise ConfigurationError("weights must sum to 1 exactly")

    @property
    def symmetric(self) -> bool:
        paired = sorted(zip(self.points, self.weights_exact))
        flipped = sorted((-p, w) for p, w in paired)
        return paired == flipped


def trinomial(h: float) -> IncrementDistribution:
    """Three-point distribution matching N(0, h) moments through order 5.

    Support (-sqrt(3h), 0, +sqrt(3h)) with weights (1/6, 2/3, 1/6).
    Order 6 is the first mismatch: 9h^3 against the Gaussian 15h^3.
    """
    if not h > 0:
        raise ConfigurationError("h must be positive, got %r" % (h,))
    g = math.sqrt(3.0 * h)
    sq = 3 * Fraction(h)
    return IncrementDistribution(
        points=(-g, 0.0, g),
        weights=(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0),
        order_matched=5,
        weights_exact=(Fraction(1, 6), Fraction(2, 3), Fraction(1, 6)),
        squares_exact=(sq, Fraction(0), sq),
    )


def moment_exact(dist: IncrementDistribution, k: int) -> Optional[Fraction]:
    """k-th moment as an exact Fraction, or None when not representable.

    Odd moments of symmetric distributions are exactly zero; even
    moments use the rational point squares.  Odd moments of asymmetric
    distributions involve irrational square roots and return None.
    """
    if k < 0:
        raise ConfigurationError("moment order must be >= 0")
    if k % 2 == 1:
        return Fraction(0) if dist.symmetric else None
    half = k // 2
    return sum(
        (w * sq ** half for w, sq in zip(dist.weights_exact, dist.squares_exact)),
        Fraction(0),
    )


def moment(dist: IncrementDistribution, k: int) -> float:
    """k-th moment of the increment distribution as a float."""
    exact = moment_exact(dist, k)
    if exact is not None:
        return float(exact)
    return math.fsum(w * p ** k for w, p in zip(dist.weights, dist.points))


def gaussian_moment_exact(h: float, k: int) -> Fraction:
    """k-th moment of N(0, h) as a Fraction of the (binary) value of h.

    Odd moments vanish; even moments are (k-1)!! h^{k/2}.
    """
    if k < 0:
        raise ConfigurationError("moment order must be >= 0")
    if k % 2 == 1:
        return Fraction(0)
    double_fact = 1
    for j in range(k - 1, 0, -2):
        double_fact *= j
    return double_fact * Fraction(h) ** (k // 2)


@dataclass(frozen=True)
class WeightConfig:
    """How the martingale weights H_j are formed from the increments.

    rule 'truncated' clamps each increment to [-r_h, r_h] before
    dividing by h; 'raw' divides directly.  Lambda is filled in by
    weight_values; by construction h * E[H^2] = Lambda <= 1.
    """

    rule: str
    r_h: float
    Lambda: Optional[float] = None

    def __post_init__(self):
        if self.rule not in ("raw", "truncated"):
            raise ConfigurationError("rule must be 'raw' or 'truncated'")


def make_weight_config(h: float, rule: str = "truncated") -> WeightConfig:
    """Weight configuration at step size h.

    The truncation radius sqrt(2h) ln(1/h) is positive only for h < 1;
    at h >= 1 the truncated rule degenerates and the raw rule is used
    instead (r_h = +inf), which keeps the constructor total.
    """
    if not h > 0:
        raise ConfigurationError("h must be positive, got %r" % (h,))
    if rule not in ("raw", "truncated"):
        raise ConfigurationError("rule must be 'raw' or 'truncated'")
    if rule == "truncated" and h < 1.0:
        return WeightConfig(rule="truncated", r_h=increment_radius(h))
    return WeightConfig(rule="raw", r_h=math.inf)


# Lambda may exceed 1 only through float noise in user-supplied points;
# anything above this many ulps signals a genuinely bad distribution.
_LAMBDA_TOL = 64 * 2.0 ** -53


def weight_values(
    wcfg: WeightConfig, dist: IncrementDistribution, h: float
) -> Tuple[Tuple[float, ...], float]:
    """Per-branch weights H_j = clamp(g_j) / h and their Lambda.

    Lambda = h * sum_j p_j H_j^2 is evaluated in exact rational
    arithmetic: unclamped branches contribute their exact point square,
    clamped branches the exact square of the clamp radius.  For the
    trinomial with inactive clamping this yields Lambda = 1 exactly.

    Raises ConfigurationError when Lambda leaves (0, 1] by more than
    float noise, which signals an increment distribution incompatible
    with the weight normalization.
    """
    if not h > 0:
        raise ConfigurationError("h must be positive, got %r" % (h,))
    clamp = wcfg.rule == "truncated" and math.isfinite(wcfg.r_h)
    hs = []
    lam = Fraction(0)
    h_exact = Fraction(h)
    for g, w, sq in zip(dist.points, dist.weights_exact, dist.squares_exact):
        c = truncate_increment(wcfg.r_h, g) if clamp else g
        hs.append(c / h)
        lam += w * (sq if c == g else Fraction(c) ** 2)
    lam = lam / h_exact
    lam_f = float(lam)
    if lam > 1 + _LAMBDA_TOL:
        raise ConfigurationError(
            "Lambda=%r exceeds 1: increment distribution has too much "
            "mass outside the clamp radius" % (lam_f,)
        )
    if lam <= 0:
        raise ConfigurationError(
            "Lambda=%r is not positive: degenerate increment distribution"
            % (lam_f,)
        )
    return tuple(hs), min(lam_f, 1.0)


# ---------------------------------------------------------------------------
# Spatial grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid x0 + k*eta for |k| <= M."""

    x0: float
    eta: float
    M: int

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError("eta must be positive")
        if self.M < 0:
            raise ConfigurationError("M must be nonnegative")

    @property
    def points(self) -> Tuple[float, ...]:
        return tuple(self.x0 + k * self.eta for k in range(-self.M, self.M + 1))

    def point(self, k: int) -> float:
        return self.x0 + k * self.eta

    @property
    def lo(self) -> float:
        return self.x0 - self.M * self.eta

    @property
    def hi(self) -> float:
        return self.x0 + self.M * self.eta


def grid_project_index(grid: SpatialGrid, x: float) -> Tuple[int, bool]:
    """Index of the nearest grid point and a saturation flag.

    Ties break toward the smaller coordinate (k = ceil(u - 1/2) rounds
    half-integers down).  Out-of-hull x clamps to the boundary index
    with the flag set; callers that track saturation counts read it
    from here, keeping the grid itself immutable.
    """
    u = (x - grid.x0) / grid.eta
    k = math.ceil(u - 0.5)
    if k > grid.M:
        return grid.M, True
    if k < -grid.M:
        return -grid.M, True
    return k, False


def grid_project(grid: SpatialGrid, x: float) -> float:
    """Nearest grid point of x (ties toward the smaller coordinate)."""
    k, _ = grid_project_index(grid, x)
    return grid.point(k)
