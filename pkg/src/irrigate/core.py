"""Data model for branched irrigation networks.

A network is a finite tree of straight branches rooted at a source point.
Each branch carries a nonincreasing step multiplicity (the mass flowing
through it), parameterized by arc length from the branch start.  Curved
routes are chains of straight branches.  Measures to irrigate are finite
atom lists or a uniform-mass cube generator.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Callable, Iterable

MASS_TOL = 1e-12
COORD_TOL = 1e-12

# beta this close to 1 makes 1/(1-beta) exponents meaningless in float64
BETA_CAP = 0.999


class ValidationError(ValueError):
    """Structurally invalid network, measure, or plan input."""


class TopologyError(ValidationError):
    """Branch graph is not a tree (cycle or dangling parent)."""


class DomainError(ValueError):
    """Numeric argument outside the domain an operation accepts."""


class FluxError(ValueError):
    """Flux law violated a required property during evaluation."""


class RegimeError(ValueError):
    """Parameter combination outside the regime a formula is valid in."""


@dataclass(frozen=True, slots=True)
class FluxFunction:
    """Concave production law z -> f(z) driving weight growth.

    Kinds: "zero" (plain Gilbert cost, no weight growth), "power"
    (f(z) = c * z**beta with c > 0, 0 < beta < 1), and "custom"
    (arbitrary callable, solved numerically).
    """

    kind: str
    c: float = 0.0
    beta: float = 0.0
    fn: Callable[[float], float] | None = None

    @staticmethod
    def zero() -> "FluxFunction":
        return FluxFunction("zero")

    @staticmethod
    def power_law(c: float, beta: float) -> "FluxFunction":
        if not c > 0.0:
            raise ValidationError(f"power law needs c > 0, got {c}")
        if not 0.0 < beta < 1.0:
            raise ValidationError(f"power law needs 0 < beta < 1, got {beta}")
        if beta >= BETA_CAP:
            raise ValidationError(
                f"beta = {beta} too close to 1 for float64 exponents (cap {BETA_CAP})"
            )
        return FluxFunction("power", c=c, beta=beta)

    @staticmethod
    def custom(fn: Callable[[float], float]) -> "FluxFunction":
        return FluxFunction("custom", fn=fn)

    def __call__(self, z: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "power":
            return self.c * z**self.beta
        value = self.fn(z)
        if value < 0.0:
            raise FluxError(f"custom flux returned negative value {value} at z={z}")
        return value


@dataclass(frozen=True, slots=True)
class MultiplicityProfile:
    """Left-continuous nonincreasing step function on a branch.

    ``values[k]`` holds on the arc interval (breaks[k], breaks[k+1]] with
    breaks[0] == 0; the last value extends to the branch end.  The value
    at arc 0 is the right limit values[0].
    """

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.breaks) != len(self.values) or not self.breaks:
            raise ValidationError("profile needs matching nonempty breaks and values")
        if self.breaks[0] != 0.0:
            raise ValidationError(f"first break must be 0, got {self.breaks[0]}")
        for a, b in zip(self.breaks, self.breaks[1:]):
            if not b > a:
                raise ValidationError(f"breaks must strictly increase, got {a} then {b}")

    @staticmethod
    def constant(value: float) -> "MultiplicityProfile":
        return MultiplicityProfile((0.0,), (float(value),))

    def value_at(self, s: float) -> float:
        if s <= 0.0:
            return self.values[0]
        return self.values[bisect_left(self.breaks, s) - 1]

    @property
    def start_value(self) -> float:
        """Right limit at the branch start, the flux handed to the parent."""
        return self.values[0]

    @property
    def end_value(self) -> float:
        return self.values[-1]

    def is_nonincreasing(self, tol: float = MASS_TOL) -> bool:
        return all(b <= a + tol for a, b in zip(self.values, self.values[1:]))


@dataclass(frozen=True, slots=True)
class Branch:
    """Straight oriented segment of the tree, parameterized by arc length.

    ``parent`` is the id of the branch whose end this branch starts at,
    or None for branches leaving the root.  The multiplicity profile
    lives on [0, length].
    """

    id: int
    parent: int | None
    start: tuple[float, ...]
    end: tuple[float, ...]
    multiplicity: MultiplicityProfile

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)


@dataclass(frozen=True, slots=True)
class Network:
    """Tree of branches with a children index; treat as immutable."""

    root: tuple[float, ...]
    branches: dict[int, Branch]
    children: dict[int, tuple[int, ...]] = field(default_factory=dict)

    @staticmethod
    def from_branches(root: Iterable[float], branches: Iterable[Branch]) -> "Network":
        table = {}
        for br in branches:
            if br.id in table:
                raise ValidationError(f"duplicate branch id {br.id}")
            table[br.id] = br
        kids: dict[int, list[int]] = {bid: [] for bid in table}
        for br in table.values():
            if br.parent is not None:
                if br.parent not in table:
                    raise TopologyError(f"branch {br.id} references missing parent {br.parent}")
                kids[br.parent].append(br.id)
        children = {bid: tuple(sorted(ids)) for bid, ids in kids.items()}
        return Network(tuple(float(x) for x in root), table, children)

    @property
    def dim(self) -> int:
        return len(self.root)

    def roots(self) -> list[int]:
        return sorted(b.id for b in self.branches.values() if b.parent is None)


def topo_layers(net: Network) -> list[list[int]]:
    """Group branch ids into evaluation layers, leaves first.

    Layer 1 holds branches with no children; every later layer holds
    branches whose children all sit in earlier layers.  Raises
    TopologyError when parent links contain a cycle.

    Returns
    -------
    list of lists of branch ids, each layer sorted ascending.
    """
    remaining_children = {bid: len(net.children.get(bid, ())) for bid in net.branches}
    ready = sorted(bid for bid, n in remaining_children.items() if n == 0)
    layers: list[list[int]] = []
    seen = 0
    while ready:
        layers.append(ready)
        seen += len(ready)
        nxt = []
        for bid in ready:
            parent = net.branches[bid].parent
            if parent is None:
                continue
            remaining_children[parent] -= 1
            if remaining_children[parent] == 0:
                nxt.append(parent)
        ready = sorted(nxt)
    if seen != len(net.branches):
        raise TopologyError("cycle detected: branch parents do not form a tree")
    return layers


def validate_network(net: Network, tol: float = MASS_TOL) -> list[str]:
    """Check structural invariants; return one message per violation.

    Covers parent links, geometry continuity, branch lengths, profile
    shape, and flux consistency (each branch end value must cover the
    sum of its children's start values).
    """
    problems: list[str] = []
    dim = net.dim
    for bid in sorted(net.branches, key=repr):
        br = net.branches[bid]
        if len(br.start) != dim or len(br.end) != dim:
            problems.append(f"branch {bid}: point dimension differs from root")
            continue
        if br.parent is not None and br.parent not in net.branches:
            problems.append(f"branch {bid}: missing parent {br.parent}")
            continue
        if br.parent is None:
            anchor = net.root
        else:
            anchor = net.branches[br.parent].end
        if max(abs(a - b) for a, b in zip(br.start, anchor)) > COORD_TOL:
            problems.append(f"branch {bid}: start detached from parent end")
        if br.length <= COORD_TOL:
            problems.append(f"branch {bid}: zero-length branch")
            continue
        prof = br.multiplicity
        if prof.breaks[-1] >= br.length - COORD_TOL and len(prof.breaks) > 1:
            problems.append(f"branch {bid}: profile break at or past branch end")
        if any(v < -MASS_TOL for v in prof.values):
            problems.append(f"branch {bid}: negative multiplicity")
        if not prof.is_nonincreasing(tol):
            problems.append(f"branch {bid}: multiplicity increases along the branch")
        child_draw = sum(
            net.branches[cid].multiplicity.start_value for cid in net.children.get(bid, ())
        )
        if br.multiplicity.end_value < child_draw - tol:
            problems.append(
                f"branch {bid}: end multiplicity {br.multiplicity.end_value} "
                f"below children total {child_draw}"
            )
    try:
        topo_layers(net)
    except TopologyError as exc:
        problems.append(str(exc))
    return problems


@dataclass(frozen=True, slots=True)
class AtomicMeasure:
    """Finite positive measure given by point masses."""

    atoms: tuple[tuple[tuple[float, ...], float], ...]

    @staticmethod
    def from_points(points_masses: Iterable[tuple[Iterable[float], float]]) -> "AtomicMeasure":
        merged: dict[tuple[float, ...], float] = {}
        order: list[tuple[float, ...]] = []
        for point, mass in points_masses:
            if not mass > 0.0:
                raise ValidationError(f"atom mass must be positive, got {mass}")
            key = tuple(float(x) for x in point)
            if key not in merged:
                merged[key] = 0.0
                order.append(key)
            merged[key] += float(mass)
        if not order:
            raise ValidationError("measure needs at least one atom")
        if len({len(p) for p in order}) != 1:
            raise ValidationError("atoms have inconsistent dimensions")
        return AtomicMeasure(tuple((p, merged[p]) for p in order))

    @property
    def dim(self) -> int:
        return len(self.atoms[0][0])

    @property
    def total_mass(self) -> float:
        return math.fsum(m for _, m in self.atoms)


@dataclass(frozen=True, slots=True)
class LebesgueCube:
    """Uniform mass spread over a cube centered at the origin."""

    dim: int
    edge: float
    mass: float

    def __post_init__(self) -> None:
        if self.dim < 1 or self.edge <= 0.0 or self.mass <= 0.0:
            raise ValidationError(
                f"cube needs dim >= 1, edge > 0, mass > 0; got {self.dim}, {self.edge}, {self.mass}"
            )


Measure = AtomicMeasure | LebesgueCube


# ---------------------------------------------------------------------------
# JSON interchange

def _point_list(point: tuple[float, ...]) -> list[float]:
    return [float(x) for x in point]


def network_to_dict(net: Network) -> dict:
    branches = []
    for bid in sorted(net.branches):
        br = net.branches[bid]
        branches.append(
            {
                "id": br.id,
                "parent": br.parent,
                "end": _point_list(br.end),
                "multiplicity": [
                    {"from_s": b, "value": v}
                    for b, v in zip(br.multiplicity.breaks, br.multiplicity.values)
                ],
            }
        )
    return {"root": _point_list(net.root), "branches": branches}


def _branch_id(raw) -> int:
    if isinstance(raw, bool) or not isinstance(raw, (int, str)):
        raise ValidationError(f"branch id must be an integer, got {raw!r}")
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"branch id must be an integer, got {raw!r}") from None


def network_from_dict(data: dict) -> Network:
    """Rebuild a Network from its JSON form; starts come from parent ends."""
    try:
        root = tuple(float(x) for x in data["root"])
        raw_branches = data["branches"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed network JSON: {exc}") from exc
    ends: dict[int, tuple[float, ...]] = {}
    parents: dict[int, int | None] = {}
    profiles: dict[int, MultiplicityProfile] = {}
    for raw in raw_branches:
        bid = _branch_id(raw["id"])
        parent = raw.get("parent")
        parents[bid] = None if parent is None else _branch_id(parent)
        ends[bid] = tuple(float(x) for x in raw["end"])
        steps = raw.get("multiplicity")
        if not steps:
            raise ValidationError(f"branch {bid}: missing multiplicity")
        breaks = tuple(float(e["from_s"]) for e in steps)
        values = tuple(float(e["value"]) for e in steps)
        profiles[bid] = MultiplicityProfile(breaks, values)
    branches = []
    for bid, parent in parents.items():
        if parent is None:
            start = root
        elif parent in ends:
            start = ends[parent]
        else:
            raise TopologyError(f"branch {bid} references missing parent {parent}")
        branches.append(Branch(bid, parent, start, ends[bid], profiles[bid]))
    net = Network.from_branches(root, branches)
    problems = validate_network(net)
    if problems:
        raise ValidationError("; ".join(problems))
    return net


def measure_to_dict(measure: Measure) -> dict:
    if isinstance(measure, LebesgueCube):
        return {"lebesgue": {"dim": measure.dim, "edge": measure.edge, "mass": measure.mass}}
    return {"atoms": [{"point": _point_list(p), "mass": m} for p, m in measure.atoms]}


def measure_from_dict(data: dict) -> Measure:
    if "lebesgue" in data:
        spec = data["lebesgue"]
        try:
            return LebesgueCube(int(spec["dim"]), float(spec["edge"]), float(spec["mass"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed lebesgue spec: {exc}") from exc
    if "atoms" in data:
        try:
            return AtomicMeasure.from_points(
                (atom["point"], atom["mass"]) for atom in data["atoms"]
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed atom list: {exc}") from exc
    raise ValidationError("measure JSON needs an 'atoms' or 'lebesgue' key")


def dump_json(obj: dict) -> str:
    """Canonical byte-stable JSON text: sorted keys, full float precision."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_json(text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("top-level JSON value must be an object")
    return data
