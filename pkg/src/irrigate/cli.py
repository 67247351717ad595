"""Command-line front end: file I/O, experiment orchestration, table emission.

Every subcommand is deterministic: identical invocations produce identical
bytes.  Randomized exercises live in the test suite, not here.  JSON goes
out with sorted keys and full float precision so emitted artifacts can be
diffed and re-parsed losslessly.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .analysis import (
    Regime,
    classify,
    cost_ceiling_constant,
    dyadic_cost_bound,
    general_weight_bound,
    shortcut_weight_bound,
    sweep,
    unit_lebesgue_weight_bound,
    zero_flux_cost_bound,
)
from .core import (
    DomainError,
    FluxError,
    FluxFunction,
    LebesgueCube,
    RegimeError,
    ValidationError,
    dump_json,
    load_json,
    measure_from_dict,
    network_from_dict,
    network_to_dict,
)
from .dyadic import DyadicGrid, approximate_measure, build_dyadic_plan, build_hybrid_plan
from .lagrangian import (
    epsilon_good_maximal_paths,
    plan_from_dict,
    split_with_cover,
    stabilizing_eps,
)
from .solver import compute_weights, network_cost

USAGE_ERROR = 64


class _Parser(argparse.ArgumentParser):
    """argparse with the sysexits-style usage code instead of 2."""

    def error(self, message: str) -> None:  # pragma: no cover - thin shim
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _flux_spec(text: str) -> FluxFunction:
    """Parse 'zero' or 'power:c,beta' into a flux function."""
    if text == "zero":
        return FluxFunction.zero()
    if text.startswith("power:"):
        parts = text[len("power:") :].split(",")
        if len(parts) == 2:
            try:
                return FluxFunction.power_law(float(parts[0]), float(parts[1]))
            except (ValueError, ValidationError) as exc:
                raise argparse.ArgumentTypeError(str(exc)) from exc
    raise argparse.ArgumentTypeError(
        f"flux spec {text!r} is neither 'zero' nor 'power:c,beta'"
    )


def _apply_thread_cap() -> None:
    """Honor IRRIGATE_THREADS by capping the numeric libraries' pools."""
    raw = os.environ.get("IRRIGATE_THREADS")
    if raw is None:
        return
    try:
        threads = int(raw)
    except ValueError:
        raise ValidationError(
            f"IRRIGATE_THREADS must be a positive integer, got {raw!r}"
        ) from None
    if threads < 1:
        raise ValidationError(
            f"IRRIGATE_THREADS must be a positive integer, got {raw!r}"
        )
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _load(path: str) -> dict:
    try:
        return load_json(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def _measure_mass(mu) -> float:
    return mu.mass if isinstance(mu, LebesgueCube) else mu.total_mass


def _cmd_solve(args: argparse.Namespace) -> int:
    net = network_from_dict(_load(args.network))
    weights = compute_weights(net, args.f)
    cost = network_cost(net, weights, args.alpha)
    out = {
        "cost": cost,
        "weights": {str(bid): weights[bid].to_dict() for bid in sorted(weights)},
    }
    _emit(dump_json(out) + "\n", args.out)
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    plan = plan_from_dict(_load(args.plan))
    eps = stabilizing_eps(plan) if args.eps is None else args.eps
    maximal = epsilon_good_maximal_paths(plan, eps)
    net = split_with_cover(maximal).network
    _emit(dump_json(network_to_dict(net)) + "\n", args.out)
    return 0


def _build_network(args: argparse.Namespace, hybrid: bool):
    mu = measure_from_dict(_load(args.measure))
    edge = mu.edge if isinstance(mu, LebesgueCube) else args.edge
    grid = DyadicGrid(mu.dim, edge, args.n)
    mu_n = approximate_measure(mu, grid)
    if hybrid:
        built = build_hybrid_plan(mu_n, grid, args.f, args.z0)
        return built.network, built
    return build_dyadic_plan(mu_n, grid), None


def _cmd_dyadic(args: argparse.Namespace) -> int:
    net, _ = _build_network(args, hybrid=False)
    weights = compute_weights(net, args.f)
    out = {
        "network": network_to_dict(net),
        "cost": network_cost(net, weights, args.alpha),
        "max_weight": max(w.base_weight for w in weights.values()),
    }
    _emit(dump_json(out) + "\n", args.out)
    return 0


def _cmd_hybrid(args: argparse.Namespace) -> int:
    net, built = _build_network(args, hybrid=True)
    weights = compute_weights(net, args.f)
    out = {
        "network": network_to_dict(net),
        "cost": network_cost(net, weights, args.alpha),
        "max_weight": max(w.base_weight for w in weights.values()),
        "stopping_level": built.n0,
        "shortcut_ids": list(built.shortcut_ids),
        "final_ids": list(built.final_ids),
    }
    _emit(dump_json(out) + "\n", args.out)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    mu = measure_from_dict(_load(args.measure))
    edge = mu.edge if isinstance(mu, LebesgueCube) else args.edge
    regime = Regime(
        d=mu.dim,
        alpha=args.alpha,
        beta=args.beta,
        c=args.c,
        L=edge,
        M=_measure_mass(mu),
    )
    result = sweep(
        regime,
        mu,
        range(args.n_min, args.n_max + 1),
        flux=args.f,
        hybrid=args.hybrid,
        z0=args.z0,
    )
    _emit(result.to_json() if args.json else result.to_csv(), args.out)
    return 0


def _cmd_classify(args: argparse.Namespace) -> int:
    verdict = classify(Regime(d=args.d, alpha=args.alpha, beta=args.beta, c=1.0))
    sys.stdout.write(str(verdict) + "\n")
    return 0


def _cmd_bounds(args: argparse.Namespace) -> int:
    regime = Regime(
        d=args.d, alpha=args.alpha, beta=args.beta, c=args.c, L=args.edge, M=args.mass
    )
    out: dict[str, float | None] = {}
    for name, fn in (
        ("unit_lebesgue_weight", unit_lebesgue_weight_bound),
        ("general_weight", general_weight_bound),
        ("dyadic_cost", dyadic_cost_bound),
        ("cost_ceiling_constant", cost_ceiling_constant),
        ("zero_flux_cost", zero_flux_cost_bound),
        ("shortcut_weight", shortcut_weight_bound),
    ):
        try:
            out[name] = fn(regime)
        except RegimeError:
            out[name] = None
    _emit(dump_json(out) + "\n", args.out)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="irrigate", description=__doc__.split("\n", 1)[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_out(p: _Parser) -> None:
        p.add_argument("--out", help="write to this file instead of stdout")

    p = sub.add_parser("solve", help="solve weights and cost of a network file")
    p.add_argument("--network", required=True)
    p.add_argument("--f", required=True, type=_flux_spec)
    p.add_argument("--alpha", required=True, type=float)
    add_out(p)
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("split", help="split a particle plan into elementary branches")
    p.add_argument("--plan", required=True)
    p.add_argument("--eps", type=float, help="truncation level; stabilizing by default")
    add_out(p)
    p.set_defaults(fn=_cmd_split)

    for name, fn in (("dyadic", _cmd_dyadic), ("hybrid", _cmd_hybrid)):
        p = sub.add_parser(name, help=f"build the {name} plan of a measure file")
        p.add_argument("--measure", required=True)
        p.add_argument("--n", required=True, type=int)
        p.add_argument("--edge", type=float, default=1.0, help="cube edge for atoms")
        p.add_argument("--f", required=True, type=_flux_spec)
        p.add_argument("--alpha", required=True, type=float)
        if name == "hybrid":
            p.add_argument("--z0", required=True, type=float)
        add_out(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("sweep", help="refinement sweep over dyadic depths")
    p.add_argument("--measure", required=True)
    p.add_argument("--alpha", required=True, type=float)
    p.add_argument("--beta", required=True, type=float)
    p.add_argument("--c", required=True, type=float)
    p.add_argument("--edge", type=float, default=1.0, help="cube edge for atoms")
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", required=True, type=int)
    p.add_argument("--f", type=_flux_spec, help="override the regime's power law")
    p.add_argument("--hybrid", action="store_true")
    p.add_argument("--z0", type=float)
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    add_out(p)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("classify", help="sort exponents into the known regimes")
    p.add_argument("--d", required=True, type=int)
    p.add_argument("--alpha", required=True, type=float)
    p.add_argument("--beta", required=True, type=float)
    p.set_defaults(fn=_cmd_classify)

    p = sub.add_parser("bounds", help="evaluate the explicit ceilings of a regime")
    p.add_argument("--d", required=True, type=int)
    p.add_argument("--alpha", required=True, type=float)
    p.add_argument("--beta", required=True, type=float)
    p.add_argument("--c", required=True, type=float)
    p.add_argument("--edge", type=float, default=1.0)
    p.add_argument("--mass", type=float, default=1.0)
    add_out(p)
    p.set_defaults(fn=_cmd_bounds)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _apply_thread_cap()
        return args.fn(args)
    except RegimeError as exc:
        sys.stderr.write(f"regime error: {exc}\n")
        return 3
    except (ValidationError, DomainError, FluxError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
