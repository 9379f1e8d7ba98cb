"""Command-line interface.

Exit codes: 0 success, 1 input or usage error, 2 domain error (invalid network,
solver failure, oracle cap).
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import platform
import sys
import time

import numpy as np

from . import __version__, _backend, export
from .errors import DomainError, InputError, MalformedInput, SolverError
from .moments import build_basis, export_equations, generate_equations
from .network import ConservationLaw, conservation_laws, load_network, save_network, to_open_form, validate_over
from .oracle import DEFAULT_CAP, SsaConfig, cme_stationary, ssa_sample
from .solver import SolverConfig, solve_adaptive
from .statespace import parse_space


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def build_parser():
    p = _Parser(prog="zics", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"zics {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="print the reactions and check propensities over a state space")
    v.add_argument("--network", required=True)
    v.add_argument("--space", help="bounds such as X=0:50,Y=0:40")

    t = sub.add_parser("transform", help="eliminate conserved species to obtain an open network")
    t.add_argument("--network", required=True)
    t.add_argument("--totals", nargs="*", default=[], metavar="NAME=VALUE",
                   help="conserved totals, matched to a law by its expression (e.g. E+S:E=10) "
                        "or else in the order the laws are listed")
    t.add_argument("--dependent", nargs="*", default=[], metavar="NAME")
    t.add_argument("--out", required=True)
    t.add_argument("--format", choices=["json", "tsv"])

    m = sub.add_parser("moments", help="export the stationary moment equations")
    m.add_argument("--network", required=True)
    m.add_argument("--order", type=_positive_int, required=True)
    m.add_argument("--format", choices=["text", "json", "csv"], default="text")
    m.add_argument("--out", help="output file (default: stdout)")

    s = sub.add_parser("solve", help="solve for the stationary distribution")
    s.add_argument("--network", required=True)
    s.add_argument("--space", required=True)
    s.add_argument("--max-order", type=_positive_int, default=8)
    s.add_argument("--initial-order", type=_positive_int, default=2)
    s.add_argument("--no-adaptive", action="store_true", help="always run up to --max-order")
    s.add_argument("--tol", type=_positive_float, default=1e-9, help="relative residual tolerance")
    s.add_argument("--escalation-tol", type=_positive_float, default=1e-4,
                   help="stop raising the order once successive distributions differ by less than this in L1")
    s.add_argument("--max-iter", type=_positive_int, default=200)
    s.add_argument("--warm-start", metavar="PATH", help="lambdas.json from a previous run")
    s.add_argument("--out", required=True, metavar="DIR")
    s.add_argument("--plot", action="store_true", help="write SVG marginal plots")
    s.add_argument("--overlay", metavar="PATH", help="marginals CSV (e.g. from 'zics oracle') to draw on the plots")
    s.add_argument("--threads", type=_positive_int)

    o = sub.add_parser("oracle", help="reference distribution from the truncated CME or SSA")
    o.add_argument("--network", required=True)
    o.add_argument("--space", required=True)
    mode = o.add_mutually_exclusive_group(required=True)
    mode.add_argument("--cme", action="store_true")
    mode.add_argument("--ssa", action="store_true")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--time", type=_positive_float, default=1e4, help="SSA time after burn-in")
    o.add_argument("--burn-in", type=_positive_float, default=100.0)
    o.add_argument("--interval", type=_positive_float, help="SSA batch length for standard errors (default time/100)")
    o.add_argument("--trajectories", type=_positive_int, default=1)
    o.add_argument("--cap", type=_positive_int, default=DEFAULT_CAP, help="largest lattice for --cme")
    o.add_argument("--order", type=_positive_int, default=4, help="highest factorial moment order to report")
    o.add_argument("--out", required=True, metavar="DIR")
    o.add_argument("--plot", action="store_true")
    o.add_argument("--threads", type=_positive_int)
    return p


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(args, out):
    net = load_network(args.network)
    for line in net.reaction_strings():
        print(line, file=out)
    if args.space is None:
        return 0
    space = parse_space(args.space, net.species)
    report = validate_over(net, space)
    print(f"state space {space.describe(net.species)} ({space.size} states)", file=out)
    for line in report.lines(net.species):
        print(line, file=out)
    if report.valid:
        print("valid", file=out)
        return 0
    w = report.worst
    where = ", ".join(f"{s}={x}" for s, x in zip(net.species, w.argmin))
    print(f"invalid: minimum propensity {w.minimum:g} at ({where})", file=out)
    return 2


def _assign_totals(net, laws, totals):
    """Attach ``NAME=VALUE`` totals to laws: by expression when it names a law, else in order."""
    by_label = {law.label(net.species): i for i, law in enumerate(laws)}
    assigned = {}
    pending = []
    for item in totals:
        name, sep, value = item.rpartition("=")
        if not sep or not name:
            raise MalformedInput(f"--totals entry {item!r} is not NAME=VALUE")
        try:
            val = float(value)
        except ValueError:
            raise MalformedInput(f"--totals entry {item!r}: {value!r} is not a number") from None
        if name in by_label:
            assigned[by_label[name]] = val
        else:
            pending.append(val)
    free = [i for i in range(len(laws)) if i not in assigned]
    if len(pending) > len(free):
        raise MalformedInput(f"{len(totals)} totals for {len(laws)} conservation laws")
    for i, val in zip(free, pending):
        assigned[i] = val
    return [laws[i].with_total(assigned[i]) for i in sorted(assigned)]


def cmd_transform(args, out):
    net = load_network(args.network)
    laws = conservation_laws(net)
    for law in laws:
        print(f"conservation law: {law.label(net.species)}", file=out)
    chosen = _assign_totals(net, laws, args.totals)
    if args.dependent and not chosen:
        chosen = [ConservationLaw(law.coefficients) for law in laws]  # to_open_form reports the missing totals
    result = to_open_form(net, chosen, list(args.dependent))
    fmt = args.format or ("tsv" if args.out.lower().endswith(".tsv") else "json")
    export.write_text(args.out, save_network(result, fmt))
    for line in result.reaction_strings():
        print(line, file=out)
    return 0


def cmd_moments(args, out):
    net = load_network(args.network)
    eqs = generate_equations(net, build_basis(net.n_species, args.order))
    text = export_equations(eqs, net.species, args.format)
    if args.out:
        export.write_text(args.out, text)
    else:
        out.write(text)
    return 0


def _threads(args):
    n = args.threads if args.threads is not None else _backend.default_threads()
    return _backend.set_threads(n)


def _manifest(args, net_path, config, started, outcome, extra=None):
    doc = {
        "tool": "zics",
        "version": __version__,
        "backend": _backend.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "network": {"path": os.path.abspath(net_path), "sha256": export.sha256_file(net_path)},
        "config": config,
        "timing_seconds": round(time.perf_counter() - started, 6),
        "outcome": outcome,
    }
    if extra:
        doc.update(extra)
    return doc


def cmd_solve(args, out):
    started = time.perf_counter()
    net = load_network(args.network)
    space = parse_space(args.space, net.species)
    threads = _threads(args)
    warm = export.read_lambdas(args.warm_start, net.species) if args.warm_start else None
    try:
        config = SolverConfig(
            max_order=args.max_order,
            initial_order=min(args.initial_order, args.max_order),
            residual_tol=args.tol,
            max_newton_iters=args.max_iter,
            order_escalation_tol=args.escalation_tol,
            adaptive=not args.no_adaptive,
            initial_lambdas=warm,
        )
    except ValueError as exc:
        raise MalformedInput(str(exc)) from exc
    os.makedirs(args.out, exist_ok=True)
    echo = {
        **{k: v for k, v in dataclasses.asdict(config).items() if k != "initial_lambdas"},
        "warm_start": os.path.abspath(args.warm_start) if args.warm_start else None,
        "space": [list(b) for b in space.bounds],
        "threads": threads,
    }
    try:
        sol = solve_adaptive(net, space, config)
    except SolverError as exc:
        outcome = {"status": "failed", "error": type(exc).__name__, "message": str(exc)}
        if exc.lambdas is not None:
            outcome["last_lambdas"] = [float(v) for v in exc.lambdas]
        export.write_json(os.path.join(args.out, "manifest.json"), _manifest(args, args.network, echo, started, outcome))
        raise
    species = net.species
    export.write_text(os.path.join(args.out, "marginals.csv"), export.marginals_csv(sol.distribution, species))
    export.write_text(os.path.join(args.out, "moments.csv"), export.solution_moments_csv(sol, species))
    export.write_text(os.path.join(args.out, "distribution.csv"), export.distribution_csv(sol.distribution, species))
    export.write_json(os.path.join(args.out, "lambdas.json"), export.lambdas_document(sol, species))
    history = [dataclasses.asdict(r) for r in sol.per_order_history]
    result = {
        "order_used": sol.order_used,
        "residual_norm": sol.residual_norm,
        "residual_abs": sol.residual_abs,
        "iterations": sol.iterations,
        "boundary_mass": sol.boundary_mass,
        "lambda0": sol.lambda0,
        "per_order": history,
        "escalation_failed": sol.escalation_failed,
        "warnings": list(sol.warnings),
    }
    export.write_json(os.path.join(args.out, "result.json"), result)
    plots = []
    if args.plot or args.overlay:
        plots = [os.path.basename(p) for p in export.plot_marginals(sol.distribution, species, args.out, args.overlay)]
    outcome = {
        "status": "converged",
        "order_used": sol.order_used,
        "residual_norm": sol.residual_norm,
        "newton_iterations": sol.iterations,
        "newton_iterations_per_order": [r.iterations for r in sol.per_order_history],
        "boundary_mass": sol.boundary_mass,
        "warnings": list(sol.warnings),
    }
    export.write_json(
        os.path.join(args.out, "manifest.json"),
        _manifest(args, args.network, echo, started, outcome, {"files": sorted(
            ["marginals.csv", "moments.csv", "distribution.csv", "lambdas.json", "result.json", *plots])}),
    )
    print(
        f"order {sol.order_used}, residual {sol.residual_norm:.3e}, {sol.iterations} Newton iterations, "
        f"boundary mass {sol.boundary_mass:.3e}",
        file=out,
    )
    for w in sol.warnings:
        print(f"warning: {w}", file=out)
    return 0


def cmd_oracle(args, out):
    started = time.perf_counter()
    net = load_network(args.network)
    space = parse_space(args.space, net.species)
    threads = _threads(args)
    os.makedirs(args.out, exist_ok=True)
    indices = list(build_basis(net.n_species, args.order).lower)
    echo = {"space": [list(b) for b in space.bounds], "threads": threads, "order": args.order}
    result = {}
    if args.cme:
        echo.update(method="cme", cap=args.cap)
        dist = cme_stationary(net, space, cap=args.cap)
    else:
        interval = args.interval if args.interval is not None else args.time / 100
        cfg = SsaConfig(seed=args.seed, n_trajectories=args.trajectories, burn_in_time=args.burn_in,
                        sample_interval=interval, total_time=args.time)
        echo.update(method="ssa", **{k: v for k, v in dataclasses.asdict(cfg).items() if k != "initial_state"})
        res = ssa_sample(net, cfg, space)
        if res.distribution is None:
            raise DomainError("no simulated time was spent inside the state space")
        dist = res.distribution
        result = {
            "outside_mass": res.outside_mass,
            "means": dict(zip(net.species, map(float, res.means))),
            "means_stderr": dict(zip(net.species, map(float, res.means_stderr))),
            "factorial2": dict(zip(net.species, map(float, res.factorial2))),
            "factorial2_stderr": dict(zip(net.species, map(float, res.factorial2_stderr))),
            "frozen_windows": res.events_frozen,
            "batches": res.n_batches,
        }
    species = net.species
    export.write_text(os.path.join(args.out, "marginals.csv"), export.marginals_csv(dist, species))
    export.write_text(os.path.join(args.out, "moments.csv"), export.moments_csv(species, indices, dist.moments(indices)))
    export.write_text(os.path.join(args.out, "distribution.csv"), export.distribution_csv(dist, species))
    result["boundary_mass"] = dist.boundary_mass()
    export.write_json(os.path.join(args.out, "result.json"), result)
    plots = []
    if args.plot:
        label = "CME" if args.cme else "SSA"
        plots = [os.path.basename(p) for p in export.plot_marginals(dist, species, args.out, label=label)]
    export.write_json(
        os.path.join(args.out, "manifest.json"),
        _manifest(args, args.network, echo, started, {"status": "ok", "boundary_mass": result["boundary_mass"]},
                  {"files": sorted(["marginals.csv", "moments.csv", "distribution.csv", "result.json", *plots])}),
    )
    print(f"wrote {args.out} ({space.size} states, boundary mass {result['boundary_mass']:.3e})", file=out)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "transform": cmd_transform,
    "moments": cmd_moments,
    "solve": cmd_solve,
    "oracle": cmd_oracle,
}


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=err)
        return 1
    except InputError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=err)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=err)
        return 1
    except DomainError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=err)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
