"""Forward chains and the recombining lattice.

The forward component X is discretized by the Euler step; replacing the
Gaussian increment with the moment-matched trinomial distribution turns
the chain into a recombining lattice on which conditional expectations
are finite sums.  With constant b and sigma no spatial projection is
needed and level i carries exactly 2i+1 states.  With state-dependent
coefficients recombination is lost, so each step is projected onto a
uniform spatial grid; saturation at the grid hull is tolerated but
counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .grids import (
    ConfigurationError,
    IncrementDistribution,
    SpatialGrid,
    TimeGrid,
    grid_project_index,
)
from .model import ModelSpec

__all__ = [
    "Lattice",
    "euler_step",
    "quantized_forward_step",
    "build_lattice",
    "dump_lattice",
]


def euler_step(spec: ModelSpec, t: float, x: float, dw: float, h: float) -> float:
    """One Euler step x + b(t,x) h + sigma(t,x) dw.

    Non-finite outputs are returned as-is; explosion is data here, not
    an exception.
    """
    if not h > 0:
        raise ConfigurationError("h must be positive, got %r" % (h,))
    return x + spec.b(t, x) * h + spec.sigma(t, x) * dw


def quantized_forward_step(
    spec: ModelSpec,
    grid: SpatialGrid,
    t: float,
    x: float,
    dw_bar: float,
    h: float,
) -> Tuple[float, bool]:
    """Euler step followed by grid projection.

    Returns the projected state and a flag saying whether the raw step
    left the grid hull (boundary clamp).
    """
    raw = euler_step(spec, t, x, dw_bar, h)
    k, saturated = grid_project_index(grid, raw)
    return grid.point(k), saturated


def _is_trinomial_support(dist: IncrementDistribution) -> bool:
    # the projection-free fast path relies on equally spaced symmetric
    # support (-g, 0, g); that is exactly the built-in trinomial
    if len(dist.points) != 3:
        return False
    a, b, c = dist.points
    return b == 0.0 and a == -c and c > 0.0


@dataclass(frozen=True)
class Lattice:
    """Recombining state tree of the quantized forward chain.

    supports[i] lists the states of level i in increasing order.  When
    children is None the lattice is the constant-coefficient trinomial
    tree and node p at level i has children (p, p+1, p+2) at level
    i+1, in the order of dist.points; otherwise children[i][p] stores
    the projected child indices explicitly.  Branch weights and
    increments are those of dist at every node.
    """

    time_grid: TimeGrid
    dist: IncrementDistribution
    supports: Tuple[Tuple[float, ...], ...]
    children: Optional[Tuple[Tuple[Tuple[int, ...], ...], ...]]
    grid: Optional[SpatialGrid]
    saturation_count: int

    @property
    def n_levels(self) -> int:
        return len(self.supports)

    def child_indices(self, level: int, pos: int) -> Tuple[int, ...]:
        if self.children is None:
            return (pos, pos + 1, pos + 2)
        return self.children[level][pos]

    @property
    def weights(self) -> Tuple[float, ...]:
        return self.dist.weights

    @property
    def increments(self) -> Tuple[float, ...]:
        return self.dist.points


def build_lattice(
    spec: ModelSpec,
    tg: TimeGrid,
    dist: IncrementDistribution,
    grid: Optional[SpatialGrid] = None,
) -> Lattice:
    """Build the forward lattice for the given time grid and increments.

    Without a spatial grid the coefficients must be constant (and the
    increment support trinomial), which is what guarantees
    recombination; level i then holds x0 + b t_i + sigma k sqrt(3h) for
    k in {-i..i}.  With a grid, every Euler step is projected and the
    reachable set is tracked level by level.
    """
    h = tg.h
    if grid is None:
        if not spec.has_constant_coefficients:
            raise ConfigurationError(
                "non-constant coefficients require a spatial grid: "
                "recombination is not guaranteed without projection"
            )
        if not _is_trinomial_support(dist):
            raise ConfigurationError(
                "projection-free lattice requires the trinomial support"
            )
        b0 = spec.b_const
        s0 = spec.sigma_const
        step = dist.points[-1]
        supports = []
        for i in range(tg.N + 1):
            t = i * h
            base = spec.x0 + b0 * t
            supports.append(tuple(base + s0 * (k * step) for k in range(-i, i + 1)))
        return Lattice(
            time_grid=tg,
            dist=dist,
            supports=tuple(supports),
            children=None,
            grid=grid,
            saturation_count=0,
        )

    root_k, root_sat = grid_project_index(grid, spec.x0)
    saturation = int(root_sat)
    level_states = [root_k]
    supports = [(grid.point(root_k),)]
    children_all = []
    times = tg.times
    for i in range(tg.N):
        t = times[i]
        next_keys = set()
        child_keys = []
        for k in level_states:
            x = grid.point(k)
            row = []
            for dw in dist.points:
                raw = euler_step(spec, t, x, dw, h)
                kk, sat = grid_project_index(grid, raw)
                saturation += int(sat)
                row.append(kk)
                next_keys.add(kk)
            child_keys.append(row)
        nxt = sorted(next_keys)
        index_of = {k: j for j, k in enumerate(nxt)}
        children_all.append(
            tuple(tuple(index_of[k] for k in row) for row in child_keys)
        )
        level_states = nxt
        supports.append(tuple(grid.point(k) for k in nxt))
    return Lattice(
        time_grid=tg,
        dist=dist,
        supports=tuple(supports),
        children=tuple(children_all),
        grid=grid,
        saturation_count=saturation,
    )


def dump_lattice(lattice: Lattice) -> dict:
    """JSON-ready description of the lattice (debugging artifact)."""
    tg = lattice.time_grid
    levels = []
    for i, states in enumerate(lattice.supports):
        entry = {
            "level": i,
            "t": tg.times[i],
            "states": list(states),
        }
        if i < tg.N:
            if lattice.children is None:
                entry["children"] = "uniform"
            else:
                entry["children"] = [list(c) for c in lattice.children[i]]
        levels.append(entry)
    return {
        "T": tg.T,
        "N": tg.N,
        "h": tg.h,
        "weights": list(lattice.weights),
        "increments": list(lattice.increments),
        "saturation_count": lattice.saturation_count,
        "levels": levels,
    }
