"""Backward weight solves and weighted costs on a network.

The weight on a branch satisfies, in arc length s with branch end L,

    W(s) = integral_s^L f(W(u)) du + m(s) + tip_load,

where m is the branch multiplicity and tip_load collects the weight
excess of the child branches hanging at the end.  Solving runs from the
tree leaves toward the root, one topological layer at a time.  Power-law
and zero flux get exact closed-form solutions; custom flux goes through
fixed-step RK4 with step halving until the base value is stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Branch,
    DomainError,
    FluxError,
    FluxFunction,
    Network,
    ValidationError,
    topo_layers,
    validate_network,
)

# relative change of W(0) under step halving that counts as converged
RK4_REL_TOL = 1e-9
# Simpson quadrature on sampled profiles wants at least this many nodes
MIN_COST_NODES = 1025
MAX_RK4_STEPS = 1 << 21


def power_advance(base: float, c: float, beta: float, dt: float) -> float:
    """Exact solution of dW/dt = c W**beta after time dt from W = base."""
    if c == 0.0 or dt == 0.0:
        return base
    e = 1.0 - beta
    return (base**e + c * e * dt) ** (1.0 / e)


def power_segment_cost(top: float, c: float, beta: float, alpha: float, width: float) -> float:
    """integral_0^width (top**(1-beta) + c (1-beta) u)**(alpha/(1-beta)) du.

    This is the alpha-power cost of one closed-form weight segment,
    measured from its top value downward.  c = 0 degenerates to a
    constant integrand.
    """
    if width <= 0.0:
        return 0.0
    if c == 0.0:
        return top**alpha * width
    e = 1.0 - beta
    p = (1.0 + alpha - beta) / e
    lo = top**e
    hi = lo + c * e * width
    return (hi**p - lo**p) / (c * (1.0 + alpha - beta))


@dataclass(frozen=True, slots=True)
class WeightProfile:
    """Solved weight along one branch.

    Closed-form profiles hold segments (s_lo, s_hi, top) meaning
    W(s) = (top**(1-beta) + c (1-beta) (s_hi - s))**(1/(1-beta)) on
    (s_lo, s_hi], where top is the value at s_hi after adding any
    multiplicity jump there.  Sampled profiles hold per-piece RK4 grids
    (s ascending, W descending in s).  Weights are nonincreasing, so the
    maximum sits at the base: W(0) = base_weight.
    """

    branch_id: int
    kind: str
    tip_load: float
    base_weight: float
    c: float = 0.0
    beta: float = 0.0
    segments: tuple[tuple[float, float, float], ...] = ()
    samples: tuple[tuple[np.ndarray, np.ndarray], ...] = ()

    def weight_at(self, s: float) -> float:
        """Evaluate W at arc s; the value at a jump is the left limit."""
        pieces = self.segments if self.kind == "closed" else self.samples
        lo0 = pieces[0][0] if self.kind == "closed" else float(pieces[0][0][0])
        hi_last = pieces[-1][1] if self.kind == "closed" else float(pieces[-1][0][-1])
        if s < lo0 - 1e-9 or s > hi_last + 1e-9:
            raise DomainError(f"arc {s} outside branch interval [{lo0}, {hi_last}]")
        s = min(max(s, lo0), hi_last)
        if self.kind == "closed":
            for s_lo, s_hi, top in self.segments:
                if s <= s_hi:
                    return power_advance(top, self.c, self.beta, s_hi - s)
        else:
            for s_arr, w_arr in self.samples:
                if s <= s_arr[-1]:
                    return float(np.interp(s, s_arr, w_arr))
        raise DomainError(f"arc {s} not covered")  # pragma: no cover

    def piece_integrals(self, alpha: float) -> list[tuple[float, float, float]]:
        """Per-piece (s_lo, s_hi, integral of W**alpha) along the branch."""
        out = []
        if self.kind == "closed":
            for s_lo, s_hi, top in self.segments:
                out.append(
                    (s_lo, s_hi, power_segment_cost(top, self.c, self.beta, alpha, s_hi - s_lo))
                )
            return out
        for s_arr, w_arr in self.samples:
            out.append((float(s_arr[0]), float(s_arr[-1]), _simpson(s_arr, w_arr**alpha)))
        return out

    def cost_integral(self, alpha: float) -> float:
        return math.fsum(v for _, _, v in self.piece_integrals(alpha))

    def to_dict(self) -> dict:
        data = {
            "branch_id": self.branch_id,
            "kind": self.kind,
            "tip_load": self.tip_load,
            "base_weight": self.base_weight,
        }
        if self.kind == "closed":
            data["segments"] = [
                {"s_lo": lo, "s_hi": hi, "top": top, "c": self.c, "beta": self.beta}
                for lo, hi, top in self.segments
            ]
        else:
            data["samples"] = [
                {"s": [float(x) for x in s_arr], "w": [float(x) for x in w_arr]}
                for s_arr, w_arr in self.samples
            ]
        return data


def _simpson(x: np.ndarray, y: np.ndarray) -> float:
    # composite Simpson on a uniform grid with an even interval count
    n = len(x) - 1
    h = (x[-1] - x[0]) / n
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def _branch_pieces(branch: Branch) -> list[tuple[float, float, float]]:
    length = branch.length
    prof = branch.multiplicity
    if prof.breaks[-1] >= length - 1e-12 and len(prof.breaks) > 1:
        raise ValidationError(f"branch {branch.id}: profile break at or past branch end")
    bounds = list(prof.breaks) + [length]
    return [(bounds[k], bounds[k + 1], prof.values[k]) for k in range(len(prof.values))]


def solve_branch(branch: Branch, flux: FluxFunction, tip_load: float) -> WeightProfile:
    """Solve the backward weight equation on one branch.

    Parameters
    ----------
    branch : Branch
        Geometry and multiplicity; the profile must fit inside the branch.
    flux : FluxFunction
        Production law f.
    tip_load : float
        Nonnegative weight excess delivered by child branches at the end.

    Returns
    -------
    WeightProfile with the value at the branch start exposed as
    base_weight (the right limit, which the parent consumes).
    """
    if not tip_load >= 0.0:
        raise DomainError(f"branch {branch.id}: tip_load must be >= 0, got {tip_load}")
    pieces = _branch_pieces(branch)
    if flux.kind in ("zero", "power"):
        c = flux.c if flux.kind == "power" else 0.0
        beta = flux.beta if flux.kind == "power" else 0.0
        segments: list[tuple[float, float, float]] = []
        top = pieces[-1][2] + tip_load
        for k in range(len(pieces) - 1, -1, -1):
            s_lo, s_hi, value = pieces[k]
            segments.append((s_lo, s_hi, top))
            bottom = power_advance(top, c, beta, s_hi - s_lo)
            if k > 0:
                top = bottom + (pieces[k - 1][2] - value)  # multiplicity jump
        segments.reverse()
        return WeightProfile(
            branch_id=branch.id,
            kind="closed",
            tip_load=tip_load,
            base_weight=bottom,
            c=c,
            beta=beta,
            segments=tuple(segments),
        )
    if flux.kind != "custom":
        raise ValidationError(f"unknown flux kind {flux.kind!r}")
    return _solve_custom(branch, flux, tip_load, pieces)


def _rk4_sweep(
    flux: FluxFunction,
    pieces: list[tuple[float, float, float]],
    tip_load: float,
    steps: list[int],
    keep_grids: bool,
):
    """One backward RK4 pass over all pieces; returns (base, grids)."""
    grids = []
    w = pieces[-1][2] + tip_load
    for k in range(len(pieces) - 1, -1, -1):
        s_lo, s_hi, value = pieces[k]
        n = steps[k]
        h = (s_hi - s_lo) / n
        ws = np.empty(n + 1) if keep_grids else None
        if keep_grids:
            ws[n] = w
        for i in range(n):
            k1 = flux(w)
            k2 = flux(w + 0.5 * h * k1)
            k3 = flux(w + 0.5 * h * k2)
            k4 = flux(w + h * k3)
            w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if keep_grids:
                ws[n - 1 - i] = w
        if keep_grids:
            grids.append((np.linspace(s_lo, s_hi, n + 1), ws))
        if k > 0:
            w += pieces[k - 1][2] - value
    grids.reverse()
    return w, grids


def _solve_custom(branch, flux, tip_load, pieces) -> WeightProfile:
    # start dense enough for the cost quadrature, then halve the step
    # until the base value moves by less than RK4_REL_TOL
    base_n = math.ceil((MIN_COST_NODES - 1) / len(pieces))
    steps = []
    for s_lo, s_hi, _ in pieces:
        n = max(32, base_n, math.ceil((s_hi - s_lo) / 0.01))
        steps.append(n + n % 2)
    prev, _ = _rk4_sweep(flux, pieces, tip_load, steps, keep_grids=False)
    while True:
        steps = [2 * n for n in steps]
        if max(steps) > MAX_RK4_STEPS:
            raise FluxError(f"branch {branch.id}: RK4 failed to converge to {RK4_REL_TOL}")
        cur, grids = _rk4_sweep(flux, pieces, tip_load, steps, keep_grids=True)
        if abs(cur - prev) <= RK4_REL_TOL * max(abs(cur), 1e-300):
            return WeightProfile(
                branch_id=branch.id,
                kind="sampled",
                tip_load=tip_load,
                base_weight=cur,
                samples=tuple(grids),
            )
        prev = cur


def compute_weights(net: Network, flux: FluxFunction) -> dict[int, WeightProfile]:
    """Solve every branch, leaves first, wiring tip loads from children.

    The tip load of a branch is the children's summed base weights minus
    their summed start multiplicities; leaves carry zero.  Evaluation
    order is layer by layer, ascending id inside a layer, so results are
    bitwise reproducible.
    """
    problems = validate_network(net)
    if problems:
        raise ValidationError("; ".join(problems[:5]))
    weights: dict[int, WeightProfile] = {}
    for layer in topo_layers(net):
        for bid in layer:
            branch = net.branches[bid]
            load = 0.0
            for cid in net.children.get(bid, ()):
                child = weights[cid]
                load += child.base_weight - net.branches[cid].multiplicity.start_value
            load = max(load, 0.0)
            try:
                weights[bid] = solve_branch(branch, flux, load)
            except FluxError as exc:
                raise FluxError(f"branch {bid}: {exc}") from exc
    return weights


def network_cost(net: Network, weights: dict[int, WeightProfile], alpha: float) -> float:
    """Total cost integral of W**alpha over all branch arcs."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    totals = []
    for bid in sorted(net.branches):
        if bid not in weights:
            raise ValidationError(f"missing weight profile for branch {bid}")
        totals.append(weights[bid].cost_integral(alpha))
    return math.fsum(totals)
