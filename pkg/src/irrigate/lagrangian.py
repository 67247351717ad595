"""Finite particle plans: mass-weighted polyline trajectories out of one origin.

A plan is a finite family of groups, each moving a positive mass along an
arc-length parameterized polyline.  The multiplicity seen by a group at arc
s is the mass of every group whose own trajectory still matches the given
one up to s.  Cutting each trajectory where its multiplicity drops below a
threshold, keeping the maximal surviving paths and splitting them at their
pairwise bifurcation arcs turns the plan into a branch network; the
per-particle cost integral then equals the network cost exactly.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from math import fsum

from .core import (
    COORD_TOL,
    MASS_TOL,
    Branch,
    DomainError,
    MultiplicityProfile,
    Network,
    ValidationError,
)
from .solver import FluxFunction, WeightProfile, compute_weights, network_cost

# arc comparisons downstream of bifurcation detection share this tolerance
ARC_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class ParticleGroup:
    """One trajectory with the mass that travels along it."""

    mass: float
    path: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if not self.mass > 0.0:
            raise ValidationError(f"group mass must be positive, got {self.mass}")
        if len(self.path) < 2:
            raise ValidationError("group path needs at least two vertices")
        dims = {len(p) for p in self.path}
        if len(dims) != 1:
            raise ValidationError("group path mixes dimensions")
        for a, b in zip(self.path, self.path[1:]):
            if math.dist(a, b) <= COORD_TOL:
                raise ValidationError("consecutive path vertices must be distinct")

    @property
    def length(self) -> float:
        return _cum_arcs(self.path)[-1]


@dataclass(frozen=True, slots=True)
class ParticlePlan:
    groups: tuple[ParticleGroup, ...]

    @staticmethod
    def from_groups(groups) -> "ParticlePlan":
        groups = tuple(groups)
        if not groups:
            raise ValidationError("plan needs at least one group")
        origin = groups[0].path[0]
        for g in groups:
            if len(g.path[0]) != len(origin):
                raise ValidationError("plan groups mix dimensions")
            if not _points_close(g.path[0], origin, COORD_TOL):
                raise ValidationError("all group paths must leave the same origin")
        # positive masses make every prefix carry at least its own group,
        # so the positive-multiplicity condition holds automatically
        return ParticlePlan(groups)

    @property
    def origin(self) -> tuple[float, ...]:
        return self.groups[0].path[0]

    @property
    def total_mass(self) -> float:
        return fsum(g.mass for g in self.groups)

    @property
    def dim(self) -> int:
        return len(self.origin)


@dataclass(frozen=True, slots=True)
class MaximalPath:
    """Surviving trajectory after a mass cutoff, with its multiplicity."""

    path: tuple[tuple[float, ...], ...]
    profile: MultiplicityProfile

    @property
    def length(self) -> float:
        return _cum_arcs(self.path)[-1]


@dataclass(frozen=True, slots=True)
class SplitResult:
    """Branch network plus, per input path, the branches tiling its image.

    ``covers[i]`` lists (arc_lo, arc_hi, branch_id) in arc order; removed
    duplicate pieces point at the branch kept for the earliest path.
    """

    network: Network
    covers: tuple[tuple[tuple[float, float, int], ...], ...]


def _cum_arcs(path) -> list[float]:
    arcs = [0.0]
    for a, b in zip(path, path[1:]):
        arcs.append(arcs[-1] + math.dist(a, b))
    return arcs


def _points_close(p, q, tol: float) -> bool:
    return all(abs(x - y) <= tol for x, y in zip(p, q))


def _point_at(path, arcs, s: float) -> tuple[float, ...]:
    if s <= 0.0:
        return path[0]
    if s >= arcs[-1]:
        return path[-1]
    k = min(bisect_right(arcs, s) - 1, len(path) - 2)
    t = (s - arcs[k]) / (arcs[k + 1] - arcs[k])
    return tuple(a + t * (b - a) for a, b in zip(path[k], path[k + 1]))


def shared_prefix_length(path_a, path_b, tol: float = COORD_TOL) -> float:
    """Arc length of the longest common prefix of two polylines.

    Paths are compared as curves, so vertices that merely subdivide a
    straight stretch do not matter.  Between consecutive vertex arcs both
    curves are straight, hence agreeing at every merged vertex arc is
    agreeing everywhere up to it.
    """
    if not _points_close(path_a[0], path_b[0], tol):
        return 0.0
    arcs_a = _cum_arcs(path_a)
    arcs_b = _cum_arcs(path_b)
    limit = min(arcs_a[-1], arcs_b[-1])
    events = sorted({a for a in arcs_a + arcs_b if 0.0 < a <= limit})
    shared = 0.0
    for t in events:
        pa = _point_at(path_a, arcs_a, t)
        pb = _point_at(path_b, arcs_b, t)
        if not _points_close(pa, pb, tol):
            break
        shared = t
    return shared


def _prefix_path(path, arcs, t: float, tol: float = ARC_TOL):
    out = [path[0]]
    for k in range(1, len(path)):
        if arcs[k] < t - tol:
            out.append(path[k])
        else:
            out.append(path[k] if arcs[k] <= t + tol else _point_at(path, arcs, t))
            break
    return tuple(out)


def _pairwise_taus(paths) -> list[list[float]]:
    n = len(paths)
    tau = [[0.0] * n for _ in range(n)]
    for i in range(n):
        tau[i][i] = _cum_arcs(paths[i])[-1]
        for j in range(i + 1, n):
            t = shared_prefix_length(paths[i], paths[j])
            tau[i][j] = tau[j][i] = t
    return tau


def multiplicity(plan: ParticlePlan, group_index: int, s: float) -> float:
    """Mass of all groups still sharing the group's trajectory at arc s."""
    group = plan.groups[group_index]
    length = group.length
    if s < -COORD_TOL or s > length + COORD_TOL:
        raise DomainError(f"arc {s} outside [0, {length}]")
    masses = []
    for h, other in enumerate(plan.groups):
        tau = length if h == group_index else shared_prefix_length(group.path, other.path)
        if tau + COORD_TOL >= s:
            masses.append(other.mass)
    return fsum(masses)


def _cutoff_arc_and_profile(taus, masses, g, eps):
    """Drop walk for one group: largest arc with multiplicity >= eps,
    plus the step profile on [0, cutoff]."""
    own_length = taus[g][g]
    # cluster drop arcs closer than ARC_TOL; taus come sorted ascending
    order = sorted(range(len(masses)), key=lambda h: taus[g][h])
    clusters: list[tuple[float, list[int]]] = []
    for h in order:
        a = taus[g][h]
        if clusters and a - clusters[-1][0] <= ARC_TOL:
            clusters[-1][1].append(h)
            clusters[-1] = (a, clusters[-1][1])
        else:
            clusters.append((a, [h]))
    remaining = fsum(masses)
    cutoff = 0.0
    breaks = [0.0]
    values = []
    for arc, members in clusters:
        if arc <= ARC_TOL:
            remaining -= fsum(masses[h] for h in members)
            continue
        # multiplicity equals `remaining` on (breaks[-1], arc]
        if remaining >= eps - MASS_TOL:
            cutoff = arc
            values.append(remaining)
            if arc < own_length - ARC_TOL:
                breaks.append(arc)
        else:
            break
        remaining -= fsum(masses[h] for h in members)
    if len(breaks) == len(values) + 1:
        breaks.pop()
    profile = MultiplicityProfile(tuple(breaks), tuple(values)) if values else None
    return min(cutoff, own_length), profile


def epsilon_good_maximal_paths(plan: ParticlePlan, eps: float) -> list[MaximalPath]:
    """Maximal trajectories whose multiplicity stays at or above eps.

    Each group's path is cut where its multiplicity first drops below eps;
    cuts that are prefixes of other cuts are absorbed, ties keep the lowest
    group index.  At most total_mass/eps paths survive.
    """
    if eps <= 0.0:
        raise DomainError(f"cutoff must be positive, got {eps}")
    if eps > plan.total_mass + MASS_TOL:
        raise DomainError("cutoff exceeds the plan's total mass")
    paths = [g.path for g in plan.groups]
    masses = [g.mass for g in plan.groups]
    taus = _pairwise_taus(paths)
    cuts = []
    profiles = []
    for g in range(len(paths)):
        cutoff, profile = _cutoff_arc_and_profile(taus, masses, g, eps)
        cuts.append(cutoff)
        profiles.append(profile)
    out = []
    for g in range(len(paths)):
        if cuts[g] <= ARC_TOL:
            continue
        dominated = False
        for h in range(len(paths)):
            if h == g or cuts[h] <= ARC_TOL:
                continue
            if taus[g][h] >= cuts[g] - ARC_TOL and (
                cuts[h] > cuts[g] + ARC_TOL or (abs(cuts[h] - cuts[g]) <= ARC_TOL and h < g)
            ):
                dominated = True
                break
        if not dominated:
            arcs = _cum_arcs(paths[g])
            out.append(MaximalPath(_prefix_path(paths[g], arcs, cuts[g]), profiles[g]))
    return out


def _restrict_profile(profile: MultiplicityProfile, a0: float, a1: float) -> MultiplicityProfile:
    j0 = bisect_right(profile.breaks, a0 + ARC_TOL) - 1
    breaks = [0.0]
    values = [profile.values[j0]]
    for k in range(j0 + 1, len(profile.breaks)):
        b = profile.breaks[k]
        if b >= a1 - ARC_TOL:
            break
        if b > a0 + ARC_TOL:
            breaks.append(b - a0)
            values.append(profile.values[k])
    return MultiplicityProfile(tuple(breaks), tuple(values))


def _node_key(point) -> tuple[float, ...]:
    return tuple(round(x, 9) for x in point)


def split_with_cover(maximal_paths) -> SplitResult:
    """Split maximal paths at pairwise bifurcation arcs into a network.

    Pieces a later path shares with an earlier one are dropped; the cover
    records, for every input path, which kept branches tile its image.
    """
    maximal_paths = list(maximal_paths)
    if not maximal_paths:
        raise DomainError("nothing to split")
    origin = maximal_paths[0].path[0]
    for mp in maximal_paths:
        if not _points_close(mp.path[0], origin, COORD_TOL):
            raise ValidationError("paths must share a common origin")
        if not mp.profile.is_nonincreasing():
            raise ValidationError("path multiplicity profile must be nonincreasing")
    paths = [mp.path for mp in maximal_paths]
    arcs = [_cum_arcs(p) for p in paths]
    lengths = [a[-1] for a in arcs]
    taus = _pairwise_taus(paths)
    n = len(paths)
    for i in range(n):
        for j in range(i + 1, n):
            if taus[i][j] >= min(lengths[i], lengths[j]) - ARC_TOL and abs(
                lengths[i] - lengths[j]
            ) <= ARC_TOL:
                raise ValidationError(f"paths {i} and {j} have identical geometry")

    branches: list[Branch] = []
    end_at: dict[tuple[float, ...], int] = {}
    start_at: dict[tuple[float, ...], list[int]] = {}
    next_id = 1
    for j in range(n):
        inner = sorted({taus[i][j] for i in range(n) if i != j})
        cutpoints = [0.0]
        for t in inner:
            if t > cutpoints[-1] + ARC_TOL and t < lengths[j] - ARC_TOL:
                cutpoints.append(t)
        pieces = list(zip(cutpoints, cutpoints[1:] + [lengths[j]]))
        for lo, hi in pieces:
            if any(hi <= taus[i][j] + ARC_TOL for i in range(j)):
                continue
            stops = [lo]
            for k in range(1, len(paths[j])):
                if lo + ARC_TOL < arcs[j][k] < hi - ARC_TOL:
                    stops.append(arcs[j][k])
            stops.append(hi)
            for a0, a1 in zip(stops, stops[1:]):
                start = _point_at(paths[j], arcs[j], a0)
                end = _point_at(paths[j], arcs[j], a1)
                parent = end_at.get(_node_key(start))
                branch = Branch(
                    next_id,
                    parent,
                    start,
                    end,
                    _restrict_profile(maximal_paths[j].profile, a0, a1),
                )
                branches.append(branch)
                end_at[_node_key(end)] = next_id
                start_at.setdefault(_node_key(start), []).append(next_id)
                next_id += 1

    net = Network.from_branches(origin, branches)
    table = {br.id: br for br in branches}
    covers = []
    for j in range(n):
        cover = []
        cur = 0.0
        while cur < lengths[j] - ARC_TOL:
            here = _point_at(paths[j], arcs[j], cur)
            match = None
            for bid in start_at.get(_node_key(here), ()):
                br = table[bid]
                ahead = cur + br.length
                if ahead <= lengths[j] + ARC_TOL and _points_close(
                    br.end, _point_at(paths[j], arcs[j], ahead), 1e-8
                ):
                    match = bid
                    break
            if match is None:
                raise ValidationError(f"path {j} leaves the split network at arc {cur}")
            cover.append((cur, cur + table[match].length, match))
            cur += table[match].length
        covers.append(tuple(cover))
    return SplitResult(net, tuple(covers))


def path_split(maximal_paths) -> Network:
    return split_with_cover(maximal_paths).network


@dataclass(frozen=True, slots=True)
class TruncationWeights:
    """Weights of the cutoff plan, addressable per group and arc."""

    plan: ParticlePlan
    eps: float
    maximal: tuple[MaximalPath, ...]
    split: SplitResult
    weights: dict[int, WeightProfile]
    cutoff_arcs: tuple[float, ...]
    carriers: tuple[int, ...]

    @property
    def network(self) -> Network:
        return self.split.network

    def weight_at(self, group_index: int, s: float) -> float:
        """Weight felt by the group at arc s; zero past its cutoff."""
        if s < -COORD_TOL:
            raise DomainError(f"arc {s} is negative")
        cutoff = self.cutoff_arcs[group_index]
        if cutoff <= ARC_TOL or s > cutoff + ARC_TOL:
            return 0.0
        for lo, hi, bid in self.split.covers[self.carriers[group_index]]:
            if s <= hi + COORD_TOL:
                wp = self.weights[bid]
                return wp.weight_at(min(max(s - lo, 0.0), hi - lo))
        return 0.0


def truncation_weights(plan: ParticlePlan, eps: float, f: FluxFunction) -> TruncationWeights:
    """Cut the plan at multiplicity eps, split it and solve for weights."""
    maximal = epsilon_good_maximal_paths(plan, eps)
    if not maximal:
        raise DomainError(f"no trajectory keeps multiplicity {eps}")
    split = split_with_cover(maximal)
    weights = compute_weights(split.network, f)
    taus_to_max = [
        [shared_prefix_length(g.path, mp.path) for mp in maximal] for g in plan.groups
    ]
    masses = [g.mass for g in plan.groups]
    paths = [g.path for g in plan.groups]
    taus = _pairwise_taus(paths)
    cutoffs = []
    carriers = []
    for g in range(len(plan.groups)):
        cutoff, _ = _cutoff_arc_and_profile(taus, masses, g, eps)
        cutoffs.append(cutoff)
        carrier = -1
        for i, tau in enumerate(taus_to_max[g]):
            if tau >= cutoff - ARC_TOL:
                carrier = i
                break
        if carrier < 0 and cutoff > ARC_TOL:
            raise ValidationError(f"group {g} lost its carrier path")
        carriers.append(carrier)
    return TruncationWeights(
        plan, eps, tuple(maximal), split, weights, tuple(cutoffs), tuple(carriers)
    )


def stabilizing_eps(plan: ParticlePlan) -> float:
    """A cutoff low enough that no trajectory gets truncated."""
    tips = [multiplicity(plan, g, plan.groups[g].length) for g in range(len(plan.groups))]
    return 0.5 * min(tips)


def plan_cost(plan: ParticlePlan, f: FluxFunction, alpha: float) -> float:
    """Per-particle cost of the untruncated plan.

    Every group integrates weight^alpha / multiplicity along its own
    trajectory; group ends always land on profile breakpoints of the kept
    branches, so the sum closes over whole profile pieces.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    tw = truncation_weights(plan, stabilizing_eps(plan), f)
    table = tw.network.branches
    terms = []
    for g, group in enumerate(plan.groups):
        length = group.length
        for lo, hi, bid in tw.split.covers[tw.carriers[g]]:
            if lo >= length - ARC_TOL:
                break
            wp = tw.weights[bid]
            for p_lo, p_hi, integral in wp.piece_integrals(alpha):
                if lo + p_hi <= length + ARC_TOL:
                    m = table[bid].multiplicity.value_at(0.5 * (p_lo + p_hi))
                    terms.append(group.mass * integral / m)
                else:
                    # a group may never stop inside a profile piece
                    assert lo + p_lo >= length - ARC_TOL
    return fsum(terms)


def plan_to_dict(plan: ParticlePlan) -> dict:
    return {
        "groups": [
            {"mass": g.mass, "path": [list(map(float, p)) for p in g.path]}
            for g in plan.groups
        ]
    }


def plan_from_dict(data: dict) -> ParticlePlan:
    if not isinstance(data, dict) or "groups" not in data:
        raise ValidationError("plan JSON needs a 'groups' list")
    raw = data["groups"]
    if not isinstance(raw, list):
        raise ValidationError("plan JSON needs a 'groups' list")
    groups = []
    for entry in raw:
        try:
            mass = float(entry["mass"])
            path = tuple(tuple(float(x) for x in p) for p in entry["path"])
        except (TypeError, KeyError, ValueError) as exc:
            raise ValidationError(f"malformed plan group: {exc}") from exc
        groups.append(ParticleGroup(mass, path))
    return ParticlePlan.from_groups(groups)
