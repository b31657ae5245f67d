"""Problem specification for decoupled forward-backward systems.

A model instance bundles the forward coefficients b and sigma, the
terminal function g, and the driver f(y, z) together with the constants
under which the rest of the library operates:

    (Mon)   (y' - y) (f(y', z) - f(y, z)) <= M_y (y' - y)^2
    (RegY)  |f(y', z) - f(y, z)| <= L_y (1 + |y'|^{m-1} + |y|^{m-1}) |y' - y|
    (RegZ)  |f(y, z') - f(y, z)| <= L_z |z' - z|

Drivers built by :func:`poly_driver` (polynomial in y plus a linear z
term) derive these constants symbolically.  Arbitrary callables are
accepted too, but then the constants are trusted as declared.
:func:`validate_model` probes the declared constants numerically on a
deterministic low-discrepancy sample and reports the worst observed
ratios, so a bad declaration is caught instead of silently poisoning
the stability monitors downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "DriverSpec",
    "GrowthConstants",
    "ModelSpec",
    "ValidationReport",
    "CheckResult",
    "poly_driver",
    "growth_constants",
    "validate_model",
    "quadratic_g",
    "lipschitz_clamp_g",
    "constant_g",
    "constant_b_sigma",
    "make_constant_model",
    "experiment1_model",
    "experiment2_model",
    "linear_model",
]


class ModelError(ValueError):
    """Raised for inconsistent model specifications."""


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriverSpec:
    """The driver f(y, z) and its assumption constants.

    Attributes
    ----------
    eval : callable
        f(y, z) -> real.  Accepts floats or numpy arrays.
    M_y : float
        One-sided (monotonicity) constant of (Mon).
    L_y : float
        Growth-Lipschitz constant of (RegY).
    m : int
        Polynomial growth degree, m >= 1.  m = 1 means globally
        Lipschitz in y.
    L_z : float
        Lipschitz constant in z.
    f00 : float
        The value f(0, 0).
    dfdy : callable or None
        Analytic partial derivative in y, used by the implicit solver
        when available.
    """

    eval: Callable
    M_y: float
    L_y: float
    m: int
    L_z: float
    f00: float
    dfdy: Optional[Callable] = None
    label: str = "custom"

    def __post_init__(self):
        if self.m < 1:
            raise ModelError("driver degree m must be >= 1, got %r" % (self.m,))
        if self.L_y < 0 or self.L_z < 0:
            raise ModelError("L_y and L_z must be nonnegative")


@dataclass(frozen=True)
class GrowthConstants:
    """Constants of the derived growth bounds.

    For any nu > 0 the assumptions imply

        |f(y,z)| <= K + K_y |y|^m + K_z |z|
        y f(y,z) <= M + My_hat |y|^2 + M_z |z|^2

    with K = |f(0,0)| + L_y, K_y = 2 L_y, K_z = L_z, M = |f(0,0)|^2/(2 nu),
    My_hat = M_y + nu and M_z = L_z^2/(2 nu).
    """

    K: float
    K_y: float
    K_z: float
    M: float
    My_hat: float
    M_z: float
    nu: float


def growth_constants(driver: DriverSpec, nu: float) -> GrowthConstants:
    """Assemble the growth constants for a given free parameter nu > 0."""
    if not nu > 0:
        raise ModelError("nu must be positive, got %r" % (nu,))
    f00 = abs(driver.f00)
    return GrowthConstants(
        K=f00 + driver.L_y,
        K_y=2.0 * driver.L_y,
        K_z=driver.L_z,
        M=f00 * f00 / (2.0 * nu),
        My_hat=driver.M_y + nu,
        M_z=driver.L_z * driver.L_z / (2.0 * nu),
        nu=nu,
    )


def _horner(coeffs: Sequence[float]):
    """Evaluate sum_k coeffs[k] * y^k with plain multiplies.

    Plain * and + follow IEEE semantics on overflow (inf, then nan),
    which the explicit scheme relies on to record explosions instead of
    raising; y**k would raise OverflowError instead.
    """
    cs = tuple(float(c) for c in coeffs)

    def p(y):
        acc = cs[-1] * (y * 0 + 1) if not np.isscalar(y) else cs[-1]
        for c in reversed(cs[:-1]):
            acc = acc * y + c
        return acc

    return p


def poly_driver(coeffs: Sequence[float], z_coeff: float = 0.0) -> DriverSpec:
    """Driver f(y, z) = sum_k coeffs[k] y^k + z_coeff * z.

    The assumption constants are derived from the coefficients:

    * M_y is the supremum of the derivative p'(y) over the real line
      (finite only when p' is bounded above, i.e. the driver is
      one-sided Lipschitz); drivers without a finite supremum are
      rejected.
    * L_y uses the factorization |y'^k - y^k| <=
      (k/2)(|y'|^{k-1} + |y|^{k-1}) |y' - y| for k >= 2.  The constant
      term of (RegY) absorbs the k = 1 part and the middle powers, the
      two top-power slots absorb the rest, giving
      L_y = max(|c_1| + sum_{1<k<m} k |c_k|, sum_{k>=2} (k/2) |c_k|).
    * L_z = |z_coeff|, m = deg p (at least 1), f00 = c_0.
    """
    cs = [float(c) for c in coeffs]
    while len(cs) > 1 and cs[-1] == 0.0:
        cs.pop()
    deg = len(cs) - 1
    m = max(deg, 1)

    # derivative polynomial p'(y), ascending coefficients
    dcs = [k * cs[k] for k in range(1, deg + 1)]

    if not dcs:
        M_y = 0.0
    elif len(dcs) == 1:
        M_y = dcs[0]
    else:
        ddeg = len(dcs) - 1
        lead = dcs[-1]
        if ddeg % 2 == 1 or lead > 0:
            raise ModelError(
                "driver %r is not one-sided Lipschitz (p' unbounded above)"
                % (tuple(cs),)
            )
        # finite maximum: evaluate p' at the real critical points of p''
        ddcs = [k * dcs[k] for k in range(1, len(dcs))]
        roots = np.roots(ddcs[::-1])
        real = [r.real for r in roots if abs(r.imag) < 1e-9]
        dp = _horner(dcs)
        M_y = max(dp(r) for r in real) if real else dp(0.0)
        M_y = float(M_y)

    slot_const = abs(cs[1]) if deg >= 1 else 0.0
    slot_const += sum(k * abs(cs[k]) for k in range(2, m))
    slot_power = sum(0.5 * k * abs(cs[k]) for k in range(2, deg + 1))
    L_y = max(slot_const, slot_power)

    p = _horner(cs)
    dp = _horner(dcs) if dcs else (lambda y: 0.0 * y if not np.isscalar(y) else 0.0)
    zc = float(z_coeff)

    def f(y, z):
        return p(y) + zc * z

    def dfdy(y, z):
        return dp(y)

    return DriverSpec(
        eval=f,
        M_y=M_y,
        L_y=L_y,
        m=m,
        L_z=abs(zc),
        f00=cs[0],
        dfdy=dfdy,
        label="poly(%s)%s" % (",".join(repr(c) for c in cs),
                              "" if zc == 0.0 else "+%r*z" % zc),
    )


# ---------------------------------------------------------------------------
# Terminal functions and coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticG:
    """g(x) = x^2.  Not globally Lipschitz; lipschitz is None."""

    kind: str = "quadratic"
    lipschitz: Optional[float] = None

    def __call__(self, x):
        return x * x


@dataclass(frozen=True)
class ClampG:
    """g(x) = clamp(slope * x, lo, hi), Lipschitz with constant |slope|."""

    lo: float
    hi: float
    slope: float = 1.0
    kind: str = "clamp"

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ModelError("clamp requires lo <= hi")

    @property
    def lipschitz(self) -> float:
        return abs(self.slope)

    def __call__(self, x):
        y = self.slope * x
        if np.isscalar(y):
            return min(max(y, self.lo), self.hi)
        return np.clip(y, self.lo, self.hi)


@dataclass(frozen=True)
class ConstantG:
    c: float
    kind: str = "constant"
    lipschitz: float = 0.0

    def __call__(self, x):
        if np.isscalar(x):
            return self.c
        return np.full_like(np.asarray(x, dtype=float), self.c)


def quadratic_g() -> QuadraticG:
    return QuadraticG()


def lipschitz_clamp_g(lo: float, hi: float, slope: float = 1.0) -> ClampG:
    return ClampG(lo=float(lo), hi=float(hi), slope=float(slope))


def constant_g(c: float) -> ConstantG:
    return ConstantG(c=float(c))


@dataclass(frozen=True)
class ConstantCoefficient:
    """A coefficient (t, x) -> value that does not depend on (t, x)."""

    value: float

    def __call__(self, t, x):
        return self.value


def constant_b_sigma(b0: float, sigma0: float):
    """Constant drift/diffusion pair as callables tagged constant."""
    return ConstantCoefficient(float(b0)), ConstantCoefficient(float(sigma0))


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """A full problem instance.

    d (Brownian dimension) and n (Y dimension) are typed for generality
    but fixed to 1 by the implementation.
    """

    T: float
    x0: float
    b: Callable
    sigma: Callable
    g: Callable
    driver: DriverSpec
    L_g: Optional[float] = None
    d: int = 1
    n: int = 1

    def __post_init__(self):
        if not self.T > 0:
            raise ModelError("horizon T must be positive")
        if self.d != 1 or self.n != 1:
            raise ModelError("only d = n = 1 is implemented")

    @property
    def b_const(self) -> Optional[float]:
        return self.b.value if isinstance(self.b, ConstantCoefficient) else None

    @property
    def sigma_const(self) -> Optional[float]:
        return (
            self.sigma.value
            if isinstance(self.sigma, ConstantCoefficient)
            else None
        )

    @property
    def has_constant_coefficients(self) -> bool:
        return self.b_const is not None and self.sigma_const is not None


def make_constant_model(T, x0, b, sigma, g, driver: DriverSpec) -> ModelSpec:
    """Model with constant drift b and diffusion sigma."""
    b_fn, s_fn = constant_b_sigma(b, sigma)
    L_g = getattr(g, "lipschitz", None)
    return ModelSpec(T=float(T), x0=float(x0), b=b_fn, sigma=s_fn, g=g,
                     driver=driver, L_g=L_g)


def experiment1_model() -> ModelSpec:
    """Convergence study setup: X = 1.5 W, f = -y^3, g = x^2 on [0, 1]."""
    return make_constant_model(
        T=1.0, x0=0.0, b=0.0, sigma=1.5,
        g=quadratic_g(), driver=poly_driver((0.0, 0.0, 0.0, -1.0)),
    )


def experiment2_model() -> ModelSpec:
    """Stability study setup: sigma = 2.5, f = -y - y^3, g = clamp(x, -7, 7)."""
    return make_constant_model(
        T=1.0, x0=0.0, b=0.0, sigma=2.5,
        g=lipschitz_clamp_g(-7.0, 7.0),
        driver=poly_driver((0.0, -1.0, 0.0, -1.0)),
    )


def linear_model(a: float = -1.0) -> ModelSpec:
    """Linear-driver setup f = a*y with closed-form reference solution."""
    return make_constant_model(
        T=1.0, x0=0.0, b=0.0, sigma=1.5,
        g=quadratic_g(), driver=poly_driver((0.0, float(a))),
    )


# ---------------------------------------------------------------------------
# Numerical validation of declared constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    witness: tuple = ()
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple
    probe_budget: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]


# Kronecker (additive recurrence) sequence based on the generalized
# golden ratio; deterministic, well spread, no RNG state involved.
def _kronecker(n: int, dim: int, seed: int):
    phi = 2.0
    for _ in range(40):
        phi = (1.0 + phi) ** (1.0 / (dim + 1))
    alphas = [(1.0 / phi) ** (k + 1) % 1.0 for k in range(dim)]
    out = np.empty((n, dim))
    idx = np.arange(seed + 1, seed + n + 1, dtype=float)[:, None]
    out[:] = (0.5 + idx * np.asarray(alphas)[None, :]) % 1.0
    return out


def validate_model(
    spec: ModelSpec,
    probe_budget: int = 10_000,
    tol: float = 1e-9,
    y_max: float = 50.0,
    z_max: float = 50.0,
    seed: int = 0,
) -> ValidationReport:
    """Probe the declared assumption constants on a deterministic sample.

    Each assumption is evaluated on `probe_budget` low-discrepancy
    points of the box [-y_max, y_max]^2 x [-z_max, z_max]^2; the pair
    list additionally contains near-coincident pairs (y, y + delta)
    with |delta| <= 1e-3, which is where one-sided Lipschitz violations
    of smooth drivers show up first.  The report lists, per check, the
    worst observed residual (positive means violated beyond tolerance)
    and a witness point.

    Identical (spec, budget, tol, seed) give bit-identical reports.
    """
    if probe_budget < 1:
        raise ModelError("probe_budget must be >= 1")
    drv = spec.driver
    u = _kronecker(probe_budget, 5, seed)
    ys = (2.0 * u[:, 0] - 1.0) * y_max
    yps = (2.0 * u[:, 1] - 1.0) * y_max
    zs = (2.0 * u[:, 2] - 1.0) * z_max
    zps = (2.0 * u[:, 3] - 1.0) * z_max
    deltas = (2.0 * u[:, 4] - 1.0) * 1e-3

    pairs_y = np.concatenate([np.stack([ys, yps]), np.stack([ys, ys + deltas])],
                             axis=1)
    pair_z = np.concatenate([zs, zs])

    def ev(y, z):
        v = drv.eval(y, z)
        return np.asarray(v, dtype=float)

    checks = []

    def finite_or_fail(name, *arrays):
        ok = all(np.isfinite(a).all() for a in arrays)
        if not ok:
            checks.append(CheckResult(name, False, math.inf,
                                      detail="non-finite evaluation"))
        return ok

    # (Mon)
    y0, y1 = pairs_y
    f0 = ev(y0, pair_z)
    f1 = ev(y1, pair_z)
    if finite_or_fail("mon", f0, f1):
        lhs = (y1 - y0) * (f1 - f0)
        rhs = drv.M_y * (y1 - y0) ** 2
        resid = lhs - rhs - tol * np.maximum(1.0, np.maximum(np.abs(lhs),
                                                             np.abs(rhs)))
        k = int(np.argmax(resid))
        checks.append(CheckResult(
            "mon", bool(resid[k] <= 0.0), float(resid[k]),
            witness=(float(y0[k]), float(y1[k]), float(pair_z[k])),
            detail="(y'-y)(f(y')-f(y)) <= M_y (y'-y)^2",
        ))

        # (RegY)
        grow = 1.0 + np.abs(y0) ** (drv.m - 1) + np.abs(y1) ** (drv.m - 1)
        bound = drv.L_y * grow * np.abs(y1 - y0)
        resid = np.abs(f1 - f0) - bound - tol * np.maximum(1.0, bound)
        k = int(np.argmax(resid))
        checks.append(CheckResult(
            "reg_y", bool(resid[k] <= 0.0), float(resid[k]),
            witness=(float(y0[k]), float(y1[k]), float(pair_z[k])),
            detail="|f(y')-f(y)| <= L_y (1+|y'|^{m-1}+|y|^{m-1}) |y'-y|",
        ))

    # (RegZ)
    fz0 = ev(ys, zs)
    fz1 = ev(ys, zps)
    if finite_or_fail("reg_z", fz0, fz1):
        bound = drv.L_z * np.abs(zps - zs)
        resid = np.abs(fz1 - fz0) - bound - tol * np.maximum(1.0, bound)
        k = int(np.argmax(resid))
        checks.append(CheckResult(
            "reg_z", bool(resid[k] <= 0.0), float(resid[k]),
            witness=(float(ys[k]), float(zs[k]), float(zps[k])),
            detail="|f(y,z')-f(y,z)| <= L_z |z'-z|",
        ))

    # Lipschitz bound for g (informational when no constant is declared)
    gx0 = np.asarray(spec.g(ys), dtype=float)
    gx1 = np.asarray(spec.g(yps), dtype=float)
    if finite_or_fail("lipschitz_g", gx0, gx1):
        dx = np.abs(yps - ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            slopes = np.where(dx > 0, np.abs(gx1 - gx0) / dx, 0.0)
        worst_slope = float(np.max(slopes))
        if spec.L_g is None:
            checks.append(CheckResult(
                "lipschitz_g", True, worst_slope,
                detail="no L_g declared; worst sampled slope reported",
            ))
        else:
            k = int(np.argmax(slopes))
            ok = worst_slope <= spec.L_g * (1.0 + tol) + tol
            checks.append(CheckResult(
                "lipschitz_g", ok, worst_slope - spec.L_g,
                witness=(float(ys[k]), float(yps[k])),
                detail="|g(x')-g(x)| <= L_g |x'-x|",
            ))

    # growth bounds implied by the assumptions (nu = 1)
    gc = growth_constants(drv, nu=1.0)
    fv = ev(ys, zs)
    if finite_or_fail("growth", fv):
        bound = gc.K + gc.K_y * np.abs(ys) ** drv.m + gc.K_z * np.abs(zs)
        r1 = np.abs(fv) - bound - tol * np.maximum(1.0, bound)
        bound2 = gc.M + gc.My_hat * ys ** 2 + gc.M_z * zs ** 2
        r2 = ys * fv - bound2 - tol * np.maximum(1.0, np.abs(bound2))
        resid = np.maximum(r1, r2)
        k = int(np.argmax(resid))
        checks.append(CheckResult(
            "growth", bool(resid[k] <= 0.0), float(resid[k]),
            witness=(float(ys[k]), float(zs[k])),
            detail="|f| and y*f growth bounds at nu=1",
        ))

    # finite coefficient evaluation on sampled (t, x)
    ts = u[: min(probe_budget, 256), 0] * spec.T
    xs = (2.0 * u[: min(probe_budget, 256), 1] - 1.0) * y_max
    bv = np.asarray([spec.b(t, x) for t, x in zip(ts, xs)], dtype=float)
    sv = np.asarray([spec.sigma(t, x) for t, x in zip(ts, xs)], dtype=float)
    ok = bool(np.isfinite(bv).all() and np.isfinite(sv).all())
    checks.append(CheckResult(
        "coefficients_finite", ok, 0.0 if ok else math.inf,
        detail="b and sigma finite on sampled (t, x)",
    ))

    return ValidationReport(checks=tuple(checks), probe_budget=probe_budget,
                            seed=seed)


def with_declared_my(driver: DriverSpec, M_y: float) -> DriverSpec:
    """Copy of a driver with an overridden declared monotonicity constant."""
    return replace(driver, M_y=float(M_y))
