"""Dyadic grids on a cube, measure snapping, and center-to-center plans.

The cube [0, L]^d is cut into 2^{kd} closed cells per level k; a measure is
snapped to the level-n cell centers, then irrigated from the cube center
through the chain of coarser centers.  Level-k branches all have length
sqrt(d) L / 2^{k+1}.  The hybrid variant diverts any center whose gathered
mass reaches a threshold straight to the cube center, which caps how much
weight a power-law flux can pile up on the remaining dyadic branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import fsum

from .core import (
    COORD_TOL,
    AtomicMeasure,
    Branch,
    DomainError,
    FluxFunction,
    LebesgueCube,
    Measure,
    MultiplicityProfile,
    Network,
    RegimeError,
    ValidationError,
)


@dataclass(frozen=True, slots=True)
class DyadicGrid:
    """Level hierarchy on [0, L]^d, cells indexed row-major per level."""

    d: int
    L: float
    n: int

    def __post_init__(self) -> None:
        if not (isinstance(self.d, int) and self.d >= 1):
            raise ValidationError(f"dimension must be a positive integer, got {self.d}")
        if not self.L > 0.0:
            raise ValidationError(f"edge length must be positive, got {self.L}")
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ValidationError(f"depth must be a positive integer, got {self.n}")

    def cells(self, k: int) -> int:
        return 1 << (k * self.d)

    def coords(self, k: int, idx: int) -> tuple[int, ...]:
        side = 1 << k
        out = []
        for _ in range(self.d):
            out.append(idx % side)
            idx //= side
        return tuple(reversed(out))

    def index(self, k: int, coords) -> int:
        side = 1 << k
        idx = 0
        for c in coords:
            idx = idx * side + c
        return idx

    def center(self, k: int, idx: int) -> tuple[float, ...]:
        h = self.L / (1 << k)
        return tuple((c + 0.5) * h for c in self.coords(k, idx))

    def parent_index(self, k: int, idx: int) -> int:
        return self.index(k - 1, tuple(c // 2 for c in self.coords(k, idx)))

    def cell_of_point(self, k: int, point) -> int:
        """Index of the level-k cell owning the point.

        Cells are closed; a point on a shared face goes to the cell with
        the smallest index, which row-major order makes the componentwise
        smaller one.
        """
        if len(point) != self.d:
            raise DomainError(f"point has dimension {len(point)}, grid has {self.d}")
        side = 1 << k
        h = self.L / side
        coords = []
        for x in point:
            if x < 0.0 or x > self.L:
                raise DomainError(f"point coordinate {x} outside [0, {self.L}]")
            u = x / h
            if u == math.floor(u):
                coords.append(max(0, int(u) - 1))
            else:
                coords.append(min(int(math.floor(u)), side - 1))
        return self.index(k, coords)

    def branch_length(self, k: int) -> float:
        return math.sqrt(self.d) * self.L / (1 << (k + 1))

    @property
    def origin(self) -> tuple[float, ...]:
        return self.center(0, 0)


@dataclass(frozen=True, slots=True)
class HybridResult:
    """Hybrid plan with its diverted and residual straight branches."""

    network: Network
    shortcut_ids: tuple[int, ...]
    final_ids: tuple[int, ...]
    n0: int


def approximate_measure(mu: Measure, grid: DyadicGrid) -> AtomicMeasure:
    """Snap a measure to the level-n cell centers, conserving mass."""
    if isinstance(mu, LebesgueCube):
        if mu.dim != grid.d:
            raise DomainError(f"cube dimension {mu.dim} does not match grid {grid.d}")
        if abs(mu.edge - grid.L) > COORD_TOL:
            raise DomainError(f"cube edge {mu.edge} does not match grid edge {grid.L}")
        share = mu.mass / grid.cells(grid.n)
        return AtomicMeasure(
            tuple((grid.center(grid.n, i), share) for i in range(grid.cells(grid.n)))
        )
    per_cell: dict[int, list[float]] = {}
    for point, mass in mu.atoms:
        if len(point) != grid.d:
            raise DomainError(f"atom dimension {len(point)} does not match grid {grid.d}")
        per_cell.setdefault(grid.cell_of_point(grid.n, point), []).append(mass)
    return AtomicMeasure(
        tuple((grid.center(grid.n, i), fsum(per_cell[i])) for i in sorted(per_cell))
    )


def _cell_masses(mu_n: AtomicMeasure, grid: DyadicGrid) -> dict[int, float]:
    """Map level-n cell index to mass, requiring atoms to sit on centers."""
    h = grid.L / (1 << grid.n)
    out: dict[int, float] = {}
    for point, mass in mu_n.atoms:
        if len(point) != grid.d:
            raise DomainError(f"atom dimension {len(point)} does not match grid {grid.d}")
        coords = []
        for x in point:
            c = round(x / h - 0.5)
            if not 0 <= c < (1 << grid.n) or abs(x - (c + 0.5) * h) > COORD_TOL:
                raise DomainError(f"atom at {point} is not a level-{grid.n} center")
            coords.append(c)
        idx = grid.index(grid.n, coords)
        out[idx] = out.get(idx, 0.0) + mass
    return out


def _subtree_masses(grid: DyadicGrid, leaf: dict[int, float]) -> list[dict[int, float]]:
    """levels[k] maps level-k cell index to its subtree mass, k = 0..n."""
    levels = [leaf]
    cur = leaf
    for k in range(grid.n, 0, -1):
        parents: dict[int, list[float]] = {}
        for idx, m in cur.items():
            parents.setdefault(grid.parent_index(k, idx), []).append(m)
        cur = {p: fsum(ms) for p, ms in parents.items()}
        levels.append(cur)
    levels.reverse()
    return levels


def build_dyadic_plan(mu_n: AtomicMeasure, grid: DyadicGrid) -> Network:
    """Irrigate the snapped measure center to center from the cube middle.

    One branch per occupied (parent center, child center) pair, constant
    multiplicity equal to the child's subtree mass; empty subtrees leave
    no branches.
    """
    levels = _subtree_masses(grid, _cell_masses(mu_n, grid))
    branches = []
    ids: dict[tuple[int, int], int] = {}
    next_id = 1
    for k in range(1, grid.n + 1):
        for idx in sorted(levels[k]):
            parent_idx = grid.parent_index(k, idx)
            parent_id = ids.get((k - 1, parent_idx))
            branches.append(
                Branch(
                    next_id,
                    parent_id,
                    grid.center(k - 1, parent_idx),
                    grid.center(k, idx),
                    MultiplicityProfile.constant(levels[k][idx]),
                )
            )
            ids[(k, idx)] = next_id
            next_id += 1
    return Network.from_branches(grid.origin, branches)


def required_hybrid_depth(d: int, L: float, f: FluxFunction, z0: float) -> int:
    """Smallest stopping level from which the threshold keeps dyadic weights bounded."""
    if f.kind != "power":
        raise DomainError("hybrid plans need a power-law flux")
    if not z0 > 0.0:
        raise DomainError(f"threshold must be positive, got {z0}")
    e = 1.0 - f.beta
    r = 1.0 - d * e
    if r <= 0.0:
        raise RegimeError(
            f"beta {f.beta} needs to exceed 1 - 1/d = {1.0 - 1.0 / d} in dimension {d}"
        )
    geo = 1.0 - 2.0 ** (-r)
    n0 = 1
    while f.c * e * math.sqrt(d) * L / ((1 << n0) * geo) >= z0**e:
        n0 += 1
    return n0


def build_hybrid_plan(
    mu_n: AtomicMeasure, grid: DyadicGrid, f: FluxFunction, z0: float
) -> HybridResult:
    """Dyadic plan with heavy centers diverted straight to the cube middle.

    Sweeping from the leaves, any center whose gathered non-diverted mass
    reaches z0 sends it to the origin on its own straight branch; what is
    left at the stopping level goes straight to the origin as well.
    """
    n0 = required_hybrid_depth(grid.d, grid.L, f, z0)
    if grid.n < n0:
        raise DomainError(
            f"grid depth {grid.n} is below the required stopping level {n0}"
        )
    acc = _cell_masses(mu_n, grid)
    # kind: per level a dict idx -> (mass, diverted?)
    kept: dict[int, dict[int, tuple[float, bool]]] = {}
    for k in range(grid.n, n0, -1):
        parents: dict[int, list[float]] = {}
        here: dict[int, tuple[float, bool]] = {}
        for idx, m in acc.items():
            if m >= z0:
                here[idx] = (m, True)
            else:
                here[idx] = (m, False)
                parents.setdefault(grid.parent_index(k, idx), []).append(m)
        kept[k] = here
        acc = {p: fsum(ms) for p, ms in parents.items()}

    branches = []
    ids: dict[tuple[int, int], int] = {}
    shortcut_ids = []
    final_ids = []
    next_id = 1
    origin = grid.origin
    for idx in sorted(acc):
        branches.append(
            Branch(
                next_id, None, origin, grid.center(n0, idx),
                MultiplicityProfile.constant(acc[idx]),
            )
        )
        ids[(n0, idx)] = next_id
        final_ids.append(next_id)
        next_id += 1
    for k in range(n0 + 1, grid.n + 1):
        for idx in sorted(kept[k]):
            mass, diverted = kept[k][idx]
            if diverted:
                start = origin
                parent_id = None
                shortcut_ids.append(next_id)
            else:
                parent_idx = grid.parent_index(k, idx)
                start = grid.center(k - 1, parent_idx)
                parent_id = ids[(k - 1, parent_idx)]
            branches.append(
                Branch(
                    next_id, parent_id, start, grid.center(k, idx),
                    MultiplicityProfile.constant(mass),
                )
            )
            ids[(k, idx)] = next_id
            next_id += 1
    net = Network.from_branches(origin, branches)
    return HybridResult(net, tuple(shortcut_ids), tuple(final_ids), n0)


def branch_levels(net: Network, grid: DyadicGrid) -> dict[int, int]:
    """Recover the construction level of every arc of a dyadic plan.

    Only works on pure dyadic plans: a level-k arc spans half the diagonal
    of a level-k cell, and those lengths separate by factors of two.
    """
    lengths = [grid.branch_length(k) for k in range(grid.n + 1)]
    levels: dict[int, int] = {}
    for bid in sorted(net.branches):
        ell = net.branches[bid].length
        k = min(range(1, grid.n + 1), key=lambda j: abs(lengths[j] - ell))
        if abs(ell - lengths[k]) > 1e-9 * lengths[k]:
            raise DomainError(f"branch {bid} length {ell} is not a dyadic arc length")
        levels[bid] = k
    return levels
