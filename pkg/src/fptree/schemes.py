"""One-step backward operators and full backward induction.

Five step kinds share one induction loop:

* explicit_euler      y = E[v + f(v, z) h],           z = E[v H]
* implicit_euler      y solves y = E[v] + f(y, z) h,  z = E[v H]
* theta             y solves y = E[v + (1-theta) f(v, z) h] + theta f(y, z) h
* full_projection_pre   explicit step applied to truncated children
* full_projection_post  like pre, then the output itself is truncated

The two full-projection variants are algebraically conjugate: starting
the post variant from truncated terminal data yields y_post = T(y_pre)
and identical z at every node.  The implementation routes both through
the same kernel so the equivalence holds bit-for-bit, not just within
tolerance.

Non-finite values are data here: the explicit scheme on stiff problems
overflows to inf and then nan, and those values are carried through and
reported, never raised.  Only the implicit root-solve raises, since a
failed solve has no value to carry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

from .forward import Lattice
from .grids import (
    ConfigurationError,
    TruncationConfig,
    check_alpha,
    make_weight_config,
    truncate,
    truncation_radius,
    weight_values,
)
from .model import DriverSpec, ModelSpec
from .treeval import chain_law, l2_norm, safe_weighted_sum

__all__ = [
    "SchemeError",
    "SolverError",
    "SolverConfig",
    "SchemeConfig",
    "LevelDiagnostics",
    "ValueFunctions",
    "z_step",
    "explicit_y_step",
    "implicit_y_step",
    "theta_y_step",
    "fp_pre_step",
    "fp_post_step",
    "run_backward",
    "SCHEME_KINDS",
]

SCHEME_KINDS = (
    "explicit_euler",
    "implicit_euler",
    "theta",
    "full_projection_pre",
    "full_projection_post",
)

_FP_KINDS = ("full_projection_pre", "full_projection_post")


class SchemeError(ValueError):
    """Raised for inconsistent scheme configuration."""


class SolverError(RuntimeError):
    """Implicit solve failed; carries the (level, node) it failed at."""

    def __init__(self, message, level=None, node=None):
        super().__init__(message)
        self.level = level
        self.node = node


@dataclass(frozen=True)
class SolverConfig:
    """Root solver for the implicit step: damped Newton or Picard."""

    method: str = "newton"
    tol: float = 1e-12
    max_iter: int = 100

    def __post_init__(self):
        if self.method not in ("newton", "picard"):
            raise SchemeError("solver method must be 'newton' or 'picard'")
        if not self.tol > 0 or self.max_iter < 1:
            raise SchemeError("solver needs tol > 0 and max_iter >= 1")


@dataclass(frozen=True)
class SchemeConfig:
    """Which backward operator to run and with what parameters.

    truncation is required for the full-projection kinds and ignored by
    the others.  weight_rule picks how increments become the weights H
    ('truncated' is the default, degenerating to 'raw' at h >= 1).
    """

    kind: str
    theta: float = 1.0
    truncation: Optional[TruncationConfig] = None
    weight_rule: str = "truncated"
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise SchemeError(
                "unknown scheme kind %r; expected one of %s"
                % (self.kind, ", ".join(SCHEME_KINDS))
            )
        if self.kind == "theta" and not 0.0 <= self.theta <= 1.0:
            raise SchemeError("theta must lie in [0, 1]")
        if self.kind in _FP_KINDS and self.truncation is None:
            raise SchemeError("full-projection kinds require a TruncationConfig")


# ---------------------------------------------------------------------------
# One-step operators
# ---------------------------------------------------------------------------


def z_step(
    child_values: Tuple[float, ...],
    weights: Tuple[float, ...],
    H: Tuple[float, ...],
) -> float:
    """z = sum_j p_j v_j H_j.

    The weights H have exact mean zero, so constant children give
    exactly zero.  Callers pass truncated children for the
    full-projection kinds and raw children otherwise.
    """
    return safe_weighted_sum(
        [w * v * hj for w, v, hj in zip(weights, child_values, H)]
    )


def explicit_y_step(
    child_values: Tuple[float, ...],
    weights: Tuple[float, ...],
    z_here: float,
    driver: DriverSpec,
    h: float,
) -> float:
    """y = sum_j p_j (v_j + f(v_j, z) h)."""
    f = driver.eval
    return safe_weighted_sum(
        [w * (v + f(v, z_here) * h) for w, v in zip(weights, child_values)]
    )


def implicit_y_step(
    child_values: Tuple[float, ...],
    weights: Tuple[float, ...],
    z_here: float,
    driver: DriverSpec,
    h: float,
    solver: SolverConfig,
) -> Tuple[float, int]:
    """Solve y = m + f(y, z) h with m = sum_j p_j v_j.

    Returns (y, iterations).  Non-finite m or z propagates as nan with
    zero iterations; an unsolvable equation raises SolverError.
    """
    m = safe_weighted_sum([w * v for w, v in zip(weights, child_values)])
    return _solve_semi_implicit(m, z_here, driver, h, solver)


def theta_y_step(
    child_values: Tuple[float, ...],
    weights: Tuple[float, ...],
    z_here: float,
    driver: DriverSpec,
    h: float,
    theta: float,
    solver: SolverConfig,
) -> Tuple[float, int]:
    """General theta split: y = E[v + (1-theta) f(v,z) h] + theta f(y,z) h."""
    if theta == 0.0:
        return explicit_y_step(child_values, weights, z_here, driver, h), 0
    f = driver.eval
    ht = (1.0 - theta) * h
    m = safe_weighted_sum(
        [w * (v + f(v, z_here) * ht) for w, v in zip(weights, child_values)]
    )
    return _solve_semi_implicit(m, z_here, driver, theta * h, solver)


def _solve_semi_implicit(
    m: float, z: float, driver: DriverSpec, hh: float, solver: SolverConfig
) -> Tuple[float, int]:
    """Root of F(y) = y - hh * f(y, z) - m = 0.

    For one-sided Lipschitz drivers F' = 1 - hh f_y >= 1 - hh M_y, so F
    is strictly increasing whenever hh * M_y < 1; that is the guard
    under which a bracketed Newton (bisection fallback) cannot fail.
    """
    if not (math.isfinite(m) and math.isfinite(z)):
        return math.nan, 0
    if hh * driver.M_y >= 0.5:
        raise SolverError(
            "step size violates the implicit contraction guard: "
            "h*theta*M_y = %g >= 0.5" % (hh * driver.M_y,)
        )
    f = driver.eval
    tol = solver.tol * max(1.0, abs(m))

    def F(y):
        return y - hh * f(y, z) - m

    if solver.method == "picard":
        y = m
        for it in range(1, solver.max_iter + 1):
            y_new = m + hh * f(y, z)
            if not math.isfinite(y_new):
                raise SolverError("picard iteration diverged")
            if abs(y_new - y) <= tol:
                return y_new, it
            y = y_new
        raise SolverError(
            "picard did not converge in %d iterations" % solver.max_iter
        )

    # bracket the root of the increasing F, expanding geometrically
    a = m
    fa = F(a)
    if fa == 0.0:
        return a, 0
    direction = -1.0 if fa > 0.0 else 1.0
    step = max(abs(hh * f(m, z)), tol, 1e-8)
    b = a
    fb = fa
    for _ in range(200):
        b = b + direction * step
        fb = F(b)
        if not math.isfinite(fb):
            raise SolverError("implicit residual became non-finite")
        if fb == 0.0:
            return b, 0
        if (fa > 0.0) != (fb > 0.0):
            break
        step *= 2.0
    else:
        raise SolverError("failed to bracket the implicit root")
    lo, hi = (a, b) if a < b else (b, a)

    dfdy = driver.dfdy
    y = m
    for it in range(1, solver.max_iter + 1):
        fy = F(y)
        if abs(fy) <= tol:
            return y, it
        slope = 1.0 - hh * dfdy(y, z) if dfdy is not None else None
        if slope is not None and slope > 0.0 and math.isfinite(slope):
            y_new = y - fy / slope
        else:
            y_new = 0.5 * (lo + hi)
        if not lo <= y_new <= hi:
            y_new = 0.5 * (lo + hi)
        if fy > 0.0:
            hi = min(hi, y)
        else:
            lo = max(lo, y)
        y = y_new
    raise SolverError("newton did not converge in %d iterations" % solver.max_iter)


def _fp_core(
    truncated_children: Tuple[float, ...],
    weights: Tuple[float, ...],
    H: Tuple[float, ...],
    driver: DriverSpec,
    h: float,
) -> Tuple[float, float]:
    # shared kernel of both full-projection variants; bit-identical
    # arithmetic is what makes the pre/post conjugacy exact
    z = z_step(truncated_children, weights, H)
    y = explicit_y_step(truncated_children, weights, z, driver, h)
    return y, z


def fp_pre_step(
    child_values: Tuple[float, ...],
    weights: Tuple[float, ...],
    H: Tuple[float, ...],
    trunc: TruncationConfig,
    driver: DriverSpec,
    h: float,
) -> Tuple[float, float]:
    """Full-projection step: truncate children, then the explicit step.

    Coincides with the plain explicit step whenever every child lies
    inside the truncation radius.
    """
    tv = tuple(truncate(trunc, h, v) for v in child_values)
    y, z = _fp_core(tv, weights, H, driver, h)
    return y, z


def fp_post_step(
    truncated_child_values: Tuple[float, ...],
    weights: Tuple[float, ...],
    H: Tuple[float, ...],
    trunc: TruncationConfig,
    driver: DriverSpec,
    h: float,
) -> Tuple[float, float]:
    """Post-truncation variant: children arrive truncated, output is too."""
    y, z = _fp_core(truncated_child_values, weights, H, driver, h)
    return truncate(trunc, h, y), z


# ---------------------------------------------------------------------------
# Backward induction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelDiagnostics:
    level: int
    t: float
    y_max: float
    y_min: float
    l2: float
    finite: bool


@dataclass(frozen=True)
class ValueFunctions:
    """Backward-induction output on the lattice.

    y[i] holds the level-i values on the support of the lattice;
    z[i] exists for i < N.  finite is False as soon as any level
    contains a non-finite entry.
    """

    kind: str
    y: Tuple[Tuple[float, ...], ...]
    z: Tuple[Tuple[float, ...], ...]
    diagnostics: Tuple[LevelDiagnostics, ...]
    finite: bool
    Lambda: float
    solver_iterations_total: int
    solver_iterations_max: int

    @property
    def y0(self) -> float:
        return self.y[0][0]


def _level_diag(level, t, vals, law) -> LevelDiagnostics:
    finite = all(math.isfinite(v) for v in vals)
    if finite:
        y_max = max(vals)
        y_min = min(vals)
    else:
        y_max = math.nan
        y_min = math.nan
    return LevelDiagnostics(
        level=level,
        t=t,
        y_max=y_max,
        y_min=y_min,
        l2=l2_norm(vals, law, level),
        finite=finite,
    )


def run_backward(
    cfg: SchemeConfig,
    lattice: Lattice,
    spec: ModelSpec,
    terminal: Optional[Callable] = None,
) -> ValueFunctions:
    """Backward induction of the configured scheme over the lattice.

    terminal overrides spec.g when supplied (perturbed-terminal
    stability studies).  The run is deterministic: identical inputs
    give bit-identical outputs.  Implicit solver failures raise
    SolverError tagged with the level and node; explicit explosions are
    recorded in the values and the finite flag instead.
    """
    tg = lattice.time_grid
    h = tg.h
    driver = spec.driver
    g = spec.g if terminal is None else terminal

    kind = cfg.kind
    if kind in _FP_KINDS:
        check_alpha(cfg.truncation, driver.m)
    wcfg = make_weight_config(h, cfg.weight_rule)
    H, lam = weight_values(wcfg, lattice.dist, h)
    weights = lattice.weights
    law = chain_law(lattice)
    times = tg.times

    vals = [float(g(x)) for x in lattice.supports[tg.N]]
    if kind == "full_projection_post":
        vals = [truncate(cfg.truncation, h, v) for v in vals]
    y_levels = [tuple(vals)]
    z_levels = []
    diags = [_level_diag(tg.N, times[tg.N], vals, law)]
    iters_total = 0
    iters_max = 0

    for i in range(tg.N - 1, -1, -1):
        nxt = y_levels[-1]
        ys = []
        zs = []
        for pos in range(len(lattice.supports[i])):
            children = lattice.child_indices(i, pos)
            cv = tuple(nxt[c] for c in children)
            try:
                if kind == "explicit_euler":
                    z = z_step(cv, weights, H)
                    y = explicit_y_step(cv, weights, z, driver, h)
                elif kind == "implicit_euler":
                    z = z_step(cv, weights, H)
                    y, it = implicit_y_step(cv, weights, z, driver, h, cfg.solver)
                    iters_total += it
                    iters_max = max(iters_max, it)
                elif kind == "theta":
                    z = z_step(cv, weights, H)
                    y, it = theta_y_step(
                        cv, weights, z, driver, h, cfg.theta, cfg.solver
                    )
                    iters_total += it
                    iters_max = max(iters_max, it)
                elif kind == "full_projection_pre":
                    y, z = fp_pre_step(cv, weights, H, cfg.truncation, driver, h)
                else:
                    y, z = fp_post_step(cv, weights, H, cfg.truncation, driver, h)
            except SolverError as err:
                raise SolverError(
                    "implicit solve failed at level %d node %d: %s"
                    % (i, pos, err),
                    level=i,
                    node=pos,
                ) from err
            ys.append(y)
            zs.append(z)
        y_levels.append(tuple(ys))
        z_levels.append(tuple(zs))
        diags.append(_level_diag(i, times[i], ys, law))

    y_levels.reverse()
    z_levels.reverse()
    diags.reverse()
    return ValueFunctions(
        kind=kind,
        y=tuple(y_levels),
        z=tuple(z_levels),
        diagnostics=tuple(diags),
        finite=all(d.finite for d in diags),
        Lambda=lam,
        solver_iterations_total=iters_total,
        solver_iterations_max=iters_max,
    )
