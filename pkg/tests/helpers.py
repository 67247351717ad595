"""Deterministic random fixtures shared across test modules."""

from __future__ import annotations

import numpy as np

from irrigate.core import Branch, MultiplicityProfile, Network


def random_network(
    rng: np.random.Generator,
    max_branches: int = 50,
    dim_choices=(2, 3),
    length_range=(0.02, 0.12),
    depth_cap: int = 5,
    two_piece_prob: float = 0.3,
    deposit_range=(0.05, 1.0),
) -> Network:
    """Random flux-consistent tree with step multiplicities."""
    d = int(rng.choice(dim_choices))
    n = int(rng.integers(3, max_branches + 1))
    parents: list[int | None] = [None]
    depths = [1]
    for i in range(1, n):
        candidates = [j for j in range(i) if depths[j] < depth_cap]
        if not candidates or rng.random() < 0.15:
            parents.append(None)
            depths.append(1)
        else:
            j = int(candidates[int(rng.integers(len(candidates)))])
            parents.append(j)
            depths.append(depths[j] + 1)
    root = (0.0,) * d
    ends: list[tuple[float, ...]] = []
    lengths: list[float] = []
    for i in range(n):
        start = root if parents[i] is None else ends[parents[i]]
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        length = float(rng.uniform(*length_range))
        lengths.append(length)
        ends.append(tuple(float(start[k] + direction[k] * length) for k in range(d)))
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    for i, p in enumerate(parents):
        if p is not None:
            children[p].append(i)
    profiles: list[MultiplicityProfile | None] = [None] * n
    start_vals = [0.0] * n
    for i in sorted(range(n), key=lambda k: -depths[k]):
        pull = sum(start_vals[j] for j in children[i])
        deposit = float(rng.uniform(*deposit_range))
        if children[i] and rng.random() < 0.3:
            deposit = 0.0
        end_val = pull + deposit
        if end_val <= 0.0:
            end_val = float(rng.uniform(*deposit_range))
        if rng.random() < two_piece_prob:
            jump = float(rng.uniform(0.01, 0.5))
            brk = float(rng.uniform(0.25, 0.75)) * lengths[i]
            profiles[i] = MultiplicityProfile((0.0, brk), (end_val + jump, end_val))
            start_vals[i] = end_val + jump
        else:
            profiles[i] = MultiplicityProfile.constant(end_val)
            start_vals[i] = end_val
    branches = [
        Branch(i, parents[i], root if parents[i] is None else ends[parents[i]], ends[i], profiles[i])
        for i in range(n)
    ]
    return Network.from_branches(root, branches)


def random_power_params(rng: np.random.Generator) -> tuple[float, float]:
    return float(rng.uniform(0.1, 5.0)), float(rng.uniform(0.3, 0.95))


def random_plan_paths(
    rng: np.random.Generator,
    dim: int = 2,
    depth_cap: int = 3,
    fanout=(1, 3),
    seg_range=(0.3, 1.0),
):
    """Random path tree from the origin; returns (vertices, mass) per leaf.

    Prefixes shared between leaves reuse the same float coordinates, so
    shared-prefix detection sees them exactly.
    """
    paths: list[tuple[list[tuple[float, ...]], float]] = []

    def grow(prefix: list[tuple[float, ...]], depth: int) -> None:
        if depth >= depth_cap or (depth > 0 and rng.random() < 0.3):
            paths.append((prefix, float(rng.uniform(0.1, 1.0))))
            return
        n_kids = int(rng.integers(fanout[0], fanout[1] + 1))
        if n_kids == 0:
            paths.append((prefix, float(rng.uniform(0.1, 1.0))))
            return
        for _ in range(n_kids):
            direction = rng.normal(size=dim)
            direction /= np.linalg.norm(direction)
            step = float(rng.uniform(*seg_range))
            tip = prefix[-1]
            nxt = tuple(float(tip[k] + direction[k] * step) for k in range(dim))
            grow(prefix + [nxt], depth + 1)

    while True:
        paths.clear()
        grow([(0.0,) * dim], 0)
        if len(paths) >= 2:
            break
    return paths


def random_plan(rng: np.random.Generator, **kwargs):
    from irrigate.lagrangian import ParticleGroup, ParticlePlan

    paths = random_plan_paths(rng, **kwargs)
    return ParticlePlan.from_groups(
        ParticleGroup(mass, tuple(vertices)) for vertices, mass in paths
    )
