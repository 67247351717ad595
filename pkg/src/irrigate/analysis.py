"""Parameter regimes, explicit bounds, and convergence sweeps.

Everything here is closed-form arithmetic on top of the dyadic builders:
a `Regime` bundles the exponents and scales, the bound functions evaluate
the geometric-series certificates those builders are designed to satisfy,
and `sweep` runs the refinement experiment that checks them empirically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from math import fsum

from .core import (
    AtomicMeasure,
    DomainError,
    FluxFunction,
    Measure,
    RegimeError,
    ValidationError,
)
from .dyadic import DyadicGrid, approximate_measure, build_dyadic_plan, build_hybrid_plan
from .solver import compute_weights, network_cost, power_segment_cost


@dataclass(frozen=True, slots=True)
class Regime:
    """Exponents and scales of one experiment.

    d is the ambient dimension, alpha the cost concavity, (c, beta) the
    power-law weight flux, L the cube edge, and M the total mass.
    """

    d: int
    alpha: float
    beta: float
    c: float
    L: float = 1.0
    M: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.d, int) or self.d < 1:
            raise ValidationError(f"dimension must be a positive integer, got {self.d}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha = {self.alpha} outside [0, 1]")
        if not 0.0 < self.beta < 1.0:
            raise ValidationError(f"beta = {self.beta} outside (0, 1)")
        if self.c <= 0.0:
            raise ValidationError(f"flux coefficient must be positive, got {self.c}")
        if self.L <= 0.0:
            raise ValidationError(f"cube edge must be positive, got {self.L}")
        if self.M <= 0.0:
            raise ValidationError(f"total mass must be positive, got {self.M}")

    @property
    def critical_exponent(self) -> float:
        return 1.0 - 1.0 / self.d

    def flux(self) -> FluxFunction:
        return FluxFunction.power_law(self.c, self.beta)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "alpha": self.alpha,
            "beta": self.beta,
            "c": self.c,
            "L": self.L,
            "M": self.M,
        }


def regime_from_dict(data: dict) -> Regime:
    try:
        return Regime(
            d=int(data["d"]),
            alpha=float(data["alpha"]),
            beta=float(data["beta"]),
            c=float(data["c"]),
            L=float(data.get("L", 1.0)),
            M=float(data.get("M", 1.0)),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed regime record: {exc}") from exc


def _branching_gap(d: int, beta: float) -> float:
    """1 - 2**-(1 - d (1-beta)), the denominator of the level series.

    Finite only above the critical exponent: each dyadic refinement
    multiplies cell mass by 2**-d and arc length by 1/2, so the summed
    flux contribution per level scales by 2**-(1 - d (1-beta)); the
    series converges iff that ratio is below one.
    """
    r = 1.0 - d * (1.0 - beta)
    if r <= 0.0:
        raise RegimeError(
            f"beta = {beta} at or below the critical exponent "
            f"1 - 1/d = {1.0 - 1.0 / d} for d = {d}: level series diverges"
        )
    return 1.0 - 2.0 ** (-r)


def unit_lebesgue_weight_bound(regime: Regime) -> float:
    """Weight ceiling for the uniform unit measure on the unit cube.

    Every branch weight of every dyadic plan for that measure stays below
    (1 + c (1-beta) sqrt(d) / gap)**(1/(1-beta)), uniformly in the depth n.
    Requires beta above the critical exponent 1 - 1/d.
    """
    gap = _branching_gap(regime.d, regime.beta)
    e = 1.0 - regime.beta
    return (1.0 + regime.c * e * math.sqrt(regime.d) / gap) ** (1.0 / e)


def general_weight_bound(regime: Regime) -> float:
    """Weight ceiling for any mass-M measure on the edge-L cube.

    Scales the unit bound: the worst subtree mass is M and the worst
    accumulated arc length below any point is sqrt(d) L / gap.  Requires
    beta above the critical exponent.
    """
    gap = _branching_gap(regime.d, regime.beta)
    e = 1.0 - regime.beta
    inner = regime.M**e + regime.c * e * math.sqrt(regime.d) * regime.L / gap
    return inner ** (1.0 / e)


def _cost_series_pieces(regime: Regime) -> tuple[float, float]:
    """Coefficients (C1, C2) with dyadic cost <= C1 M^alpha L + C2 L^(1+p).

    Splitting each level weight into its mass part and its flux part with
    (a + b)**p <= K (a**p + b**p) leaves two geometric series: the mass
    series with ratio 2**-(1 - d (1-alpha)) and the flux series with
    ratio 2**-(1 + p - d), p = alpha / (1-beta).  Both converge iff alpha
    and beta exceed the critical exponent.
    """
    d, alpha, beta, c = regime.d, regime.alpha, regime.beta, regime.c
    gap = _branching_gap(d, beta)
    x1 = 1.0 - d * (1.0 - alpha)
    if x1 <= 0.0:
        raise RegimeError(
            f"alpha = {alpha} at or below the critical exponent "
            f"1 - 1/d = {1.0 - 1.0 / d} for d = {d}: cost series diverges"
        )
    e = 1.0 - beta
    p = alpha / e
    prefix = 2.0 ** max(0.0, p - 1.0) * math.sqrt(d) / 2.0
    q1 = 2.0 ** (-x1)
    q2 = 2.0 ** (-(1.0 + p - d))
    c1 = prefix * q1 / (1.0 - q1)
    c2 = prefix * (c * e * math.sqrt(d) / (2.0 * gap)) ** p * q2 / (1.0 - q2)
    return c1, c2


def dyadic_cost_bound(regime: Regime) -> float:
    """Cost ceiling for every dyadic plan of a mass-M measure on the cube.

    Requires alpha and beta above the critical exponent.  The bound is
    uniform in the refinement depth, which is what makes the regime
    irrigable: refined plan costs form a bounded monotone sequence.
    """
    c1, c2 = _cost_series_pieces(regime)
    p = regime.alpha / (1.0 - regime.beta)
    return c1 * regime.M**regime.alpha * regime.L + c2 * regime.L ** (1.0 + p)


def cost_ceiling_constant(regime: Regime) -> float:
    """Single constant C with dyadic cost <= C (M^alpha L + L^(1+p))."""
    return max(_cost_series_pieces(regime))


def zero_flux_cost_bound(regime: Regime) -> float:
    """Cost ceiling for dyadic plans of the uniform measure with no flux.

    With the flux switched off the weight equals the multiplicity, so the
    per-level cost is exactly count * length * mass**alpha and the levels
    form a geometric series with ratio 2**-(1 - d (1-alpha)).  Requires
    alpha above the critical exponent.
    """
    d, alpha = regime.d, regime.alpha
    x = 1.0 - d * (1.0 - alpha)
    if x <= 0.0:
        raise RegimeError(
            f"alpha = {alpha} at or below the critical exponent "
            f"1 - 1/d = {1.0 - 1.0 / d} for d = {d}: cost series diverges"
        )
    return math.sqrt(d) * regime.L * regime.M**alpha / (2.0 * (2.0**x - 1.0))


def shortcut_weight_bound(regime: Regime) -> float:
    """Weight ceiling exp(c sqrt(d) L) M for diverted straight branches.

    Valid when every diverted mass is at least one: above weight one the
    power flux is dominated by the linear flux c z, whose growth over a
    branch of length at most sqrt(d) L is the exponential factor.
    """
    return math.exp(regime.c * math.sqrt(regime.d) * regime.L) * regime.M


def hybrid_dyadic_weight_cap(beta: float, z0: float) -> float:
    """Weight ceiling 2**(1/(1-beta)) z0 for retained dyadic branches.

    The hybrid stopping level is chosen so the accumulated flux under any
    retained branch stays below its subtree mass term, and subtree masses
    of non-diverted cells stay below z0; doubling the mass term and
    taking the profile exponent gives the cap.
    """
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta = {beta} outside (0, 1)")
    if z0 <= 0.0:
        raise DomainError(f"diversion threshold must be positive, got {z0}")
    return 2.0 ** (1.0 / (1.0 - beta)) * z0


def tail_bound(total_cost: float, alpha: float, r: float) -> float:
    """Mass ceiling (cost / r)**(1/alpha) outside the radius-r ball.

    A unit of mass ending at distance r from the source contributes at
    least r * mass**alpha to the cost, whatever the network does.
    """
    if r <= 0.0:
        raise DomainError(f"radius must be positive, got {r}")
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha = {alpha} outside (0, 1]")
    if total_cost < 0.0:
        raise DomainError(f"cost must be nonnegative, got {total_cost}")
    return (total_cost / r) ** (1.0 / alpha)


def tail_mass(mu: AtomicMeasure, center: tuple[float, ...], r: float) -> float:
    """Mass of mu outside the closed ball of radius r around center."""
    if r < 0.0:
        raise DomainError(f"radius must be nonnegative, got {r}")
    return fsum(m for x, m in mu.atoms if math.dist(x, center) > r)


def nonirrigability_lower_bound(
    regime: Regime, delta: float, include_mass_term: bool = True
) -> float:
    """Per-volume cost floor of moving the uniform measure off a delta cell.

    Averages the alpha-power of the comparison weight over a travel
    distance delta:

        (1/delta^d) * integral_0^delta
            (delta^(d (1-beta)) + c (1-beta) (delta - t))**(alpha/(1-beta)) dt

    evaluated in closed form.  With include_mass_term=False the cell-mass
    term is dropped, leaving the pure flux power whose log-log slope in
    delta is exactly (1 + alpha - beta)/(1 - beta) - d; a negative slope
    certifies that refining cells make the total cost diverge.
    """
    if delta <= 0.0 or delta > 1.0:
        raise DomainError(f"cell size delta = {delta} outside (0, 1]")
    d, alpha, beta, c = regime.d, regime.alpha, regime.beta, regime.c
    if include_mass_term:
        return power_segment_cost(delta**d, c, beta, alpha, delta) / delta**d
    e = 1.0 - beta
    p = alpha / e
    return (c * e) ** p * delta ** (p + 1.0) / ((p + 1.0) * delta**d)


@dataclass(frozen=True, slots=True)
class Classification:
    """Verdict for a regime, with the parameter comparison that drove it."""

    verdict: str
    reason: str

    def __str__(self) -> str:
        return f"{self.verdict} ({self.reason})"


def classify(regime: Regime) -> Classification:
    """Sort a regime into Irrigable / NonIrrigable / Undetermined.

    Irrigable when both exponents strictly exceed 1 - 1/d, in which case
    the dyadic construction has bounded cost for every finite measure on
    the cube.  NonIrrigable when alpha falls strictly below 1 - 1/d or
    beta falls strictly below 1 - 1/(d-1), each of which forces diverging
    costs for the uniform measure.  Everything else, boundary equalities
    included, is Undetermined: the two conditions do not meet, and this
    module takes no side in the gap.  Depends on d, alpha, beta only.
    """
    d, alpha, beta = regime.d, regime.alpha, regime.beta
    upper = 1.0 - 1.0 / d
    lower = -math.inf if d == 1 else 1.0 - 1.0 / (d - 1)
    if alpha > upper and beta > upper:
        return Classification(
            "Irrigable",
            f"alpha = {alpha} and beta = {beta} both exceed 1 - 1/d = {upper}",
        )
    if alpha < upper:
        return Classification(
            "NonIrrigable", f"alpha = {alpha} below 1 - 1/d = {upper}"
        )
    if beta < lower:
        return Classification(
            "NonIrrigable", f"beta = {beta} below 1 - 1/(d-1) = {lower}"
        )
    return Classification(
        "Undetermined",
        f"alpha = {alpha}, beta = {beta} sit between the sufficient "
        f"threshold 1 - 1/d = {upper} and the necessary one",
    )


@dataclass(frozen=True, slots=True)
class SweepRow:
    """One refinement depth of a sweep.

    bound_weight and bound_cost are NaN when the regime admits no finite
    ceiling of that kind.
    """

    n: int
    max_weight: float
    cost: float
    shortcut_count: int
    bound_weight: float
    bound_cost: float


@dataclass(frozen=True, slots=True)
class SweepResult:
    """Rows of a refinement sweep, one per depth, depths strictly increasing."""

    regime: Regime
    rows: tuple[SweepRow, ...]

    def __post_init__(self) -> None:
        ns = [row.n for row in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValidationError(f"sweep depths {ns} not strictly increasing")

    def costs(self) -> tuple[float, ...]:
        return tuple(row.cost for row in self.rows)

    def to_csv(self) -> str:
        lines = ["n,max_weight,cost,shortcut_count,bound_weight,bound_cost"]
        for row in self.rows:
            lines.append(
                f"{row.n},{row.max_weight:.17g},{row.cost:.17g},"
                f"{row.shortcut_count},{row.bound_weight:.17g},{row.bound_cost:.17g}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        def cell(x: float) -> float | None:
            return None if math.isnan(x) else x

        return {
            "regime": self.regime.to_dict(),
            "rows": [
                {
                    "n": row.n,
                    "max_weight": row.max_weight,
                    "cost": row.cost,
                    "shortcut_count": row.shortcut_count,
                    "bound_weight": cell(row.bound_weight),
                    "bound_cost": cell(row.bound_cost),
                }
                for row in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def sweep(
    regime: Regime,
    mu: Measure,
    n_values: tuple[int, ...] | list[int] | range,
    flux: FluxFunction | None = None,
    hybrid: bool = False,
    z0: float | None = None,
) -> SweepResult:
    """Run the refinement experiment at every depth in n_values.

    Builds the dyadic (or hybrid, when hybrid=True with a threshold z0)
    plan of mu at each depth, solves its weights under flux (the regime's
    power law by default), and records cost, peak weight, diverted branch
    count, and the regime's ceilings.  Ceilings the regime does not admit
    are recorded as NaN; they bound any flux dominated by the regime's
    power law, the zero flux included.  Failures during a depth are
    re-raised tagged with the offending n.
    """
    ns = list(n_values)
    if not ns:
        raise ValidationError("sweep needs at least one depth")
    if any(not isinstance(n, int) or n < 1 for n in ns):
        raise ValidationError(f"sweep depths must be positive integers, got {ns}")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValidationError(f"sweep depths {ns} not strictly increasing")
    if hybrid and (z0 is None or z0 <= 0.0):
        raise ValidationError(f"hybrid sweep needs a positive threshold, got {z0}")
    f = regime.flux() if flux is None else flux
    try:
        bound_weight = general_weight_bound(regime)
    except RegimeError:
        bound_weight = math.nan
    try:
        bound_cost = dyadic_cost_bound(regime)
    except RegimeError:
        bound_cost = math.nan
    rows = []
    for n in ns:
        try:
            grid = DyadicGrid(regime.d, regime.L, n)
            mu_n = approximate_measure(mu, grid)
            if hybrid:
                built = build_hybrid_plan(mu_n, grid, f, z0)
                net = built.network
                shortcut_count = len(built.shortcut_ids)
            else:
                net = build_dyadic_plan(mu_n, grid)
                shortcut_count = 0
            weights = compute_weights(net, f)
            cost = network_cost(net, weights, regime.alpha)
            max_weight = max(w.base_weight for w in weights.values())
        except (ValidationError, DomainError, RegimeError) as exc:
            raise type(exc)(f"depth n = {n}: {exc}") from exc
        rows.append(
            SweepRow(n, max_weight, cost, shortcut_count, bound_weight, bound_cost)
        )
    return SweepResult(regime, tuple(rows))
