"""Command line entry point: ``eqgraph-bench {solve,bench,compare}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .bench import (
    DEFAULT_HORIZONS,
    DEFAULT_SCENARIOS,
    BenchConfig,
    Scenario,
    compare_methods,
    emit_report,
    run_grid,
    run_scenario,
)
from .constraints import ALConfig
from .errors import GraphError
from .solvers import SolverConfig
from .vehicle import OCPWeights, VehicleParams, load_reference_csv, save_reference_csv

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_USAGE = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ref-csv", metavar="PATH", help="reference velocity CSV with header t,velocity")
    p.add_argument("--seed", type=int, default=42, help="seed for the synthetic reference")
    p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true")

    s = p.add_argument_group("solver")
    s.add_argument("--tol", type=float, default=1e-6, help="step-norm tolerance")
    s.add_argument("--constraint-tol", type=float, default=1e-6, help="AL constraint tolerance")
    s.add_argument("--max-iters", type=int, default=100)
    s.add_argument("--rho-init", type=float, default=10.0)
    s.add_argument("--rho-max", type=float, default=50000.0)
    s.add_argument("--alpha", type=float, default=10.0)
    s.add_argument("--inner-max", type=int, default=1)
    s.add_argument("--linearize-at", type=float, help="linearization velocity (default: reference mean)")

    defaults = VehicleParams()
    v = p.add_argument_group("vehicle")
    v.add_argument("--mass", type=float, default=defaults.m, help="effective mass, kg")
    v.add_argument("--vehicle-mass", type=float, default=defaults.m_v, help="kg")
    v.add_argument("--gravity", type=float, default=defaults.g)
    v.add_argument("--slope", type=float, default=defaults.theta, help="road slope, rad")
    v.add_argument("--air-density", type=float, default=defaults.rho_a)
    v.add_argument("--frontal-area", type=float, default=defaults.A_f)
    v.add_argument("--drag-coeff", type=float, default=defaults.c_a)
    v.add_argument("--roll-coeff", type=float, default=defaults.c_r)
    v.add_argument("--dt", type=float, default=defaults.dt, help="sampling time, s")

    weights = OCPWeights()
    w = p.add_argument_group("weights")
    w.add_argument("--P", dest="weight_p", type=float, default=weights.P)
    w.add_argument("--Q", dest="weight_q", type=float, default=weights.Q)
    w.add_argument("--R", dest="weight_r", type=float, default=weights.R)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqgraph-bench",
        description="Velocity-tracking optimal control benchmarks on equality-constrained factor graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one scenario")
    solve.add_argument("--scenario", default="kkt-nonlinear", help="e.g. kkt-nonlinear, al-linear, soft:1e6")
    solve.add_argument("--n", type=int, default=385)
    solve.add_argument("--repeats", type=int, default=1)
    solve.add_argument("--trajectory", metavar="PATH", help="also write the optimal velocity/input trajectory as CSV")
    _add_common(solve)

    bench = sub.add_parser("bench", help="scenario x horizon grid")
    bench.add_argument("--scenario", action="append", help="repeatable; default: unconstrained, kkt-linear, kkt-nonlinear, al-linear, al-nonlinear")
    bench.add_argument("--n", type=int, nargs="+", default=list(DEFAULT_HORIZONS))
    bench.add_argument("--repeats", type=int, default=100)
    bench.add_argument("--parallel", action="store_true", help="run scenarios on separate threads")
    _add_common(bench)

    compare = sub.add_parser("compare", help="KKT vs augmented Lagrangian on the nonlinear problem")
    compare.add_argument("--n", type=int, default=385)
    compare.add_argument("--repeats", type=int, default=1)
    _add_common(compare)

    synth = sub.add_parser("reference", help="write the synthetic reference profile as CSV")
    synth.add_argument("--n", type=int, default=385)
    synth.add_argument("--seed", type=int, default=42)
    synth.add_argument("--dt", type=float, default=1.0)
    synth.add_argument("--out", metavar="PATH", required=True)
    return parser


def config_from_args(args) -> BenchConfig:
    reference = None
    dt = args.dt
    if args.ref_csv:
        reference = load_reference_csv(args.ref_csv)
        dt = reference.dt
    params = VehicleParams(
        m=args.mass,
        m_v=args.vehicle_mass,
        g=args.gravity,
        theta=args.slope,
        rho_a=args.air_density,
        A_f=args.frontal_area,
        c_a=args.drag_coeff,
        c_r=args.roll_coeff,
        dt=dt,
    )
    return BenchConfig(
        params=params,
        weights=OCPWeights(P=args.weight_p, Q=args.weight_q, R=args.weight_r),
        solver=SolverConfig(max_iterations=args.max_iters, step_norm_tol=args.tol),
        al=ALConfig(
            rho_init=args.rho_init,
            rho_max=args.rho_max,
            alpha=args.alpha,
            inner_max_iterations=args.inner_max,
            constraint_tol=args.constraint_tol,
            outer_max_iterations=args.max_iters,
            step_norm_tol=args.tol,
        ),
        seed=args.seed,
        reference=reference,
        linearization_point=args.linearize_at,
    )


def _emit(reports, args) -> None:
    emit_report(reports, args.format, args.out if args.out else sys.stdout)


def _write_trajectory(run, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "reference", "velocity", "input"])
        ref = run.ocp.problem.reference.samples
        inputs = list(run.inputs) + [""]
        for k, (r, v, u) in enumerate(zip(ref, run.velocities, inputs)):
            writer.writerow([k, repr(float(r)), repr(float(v)), u if u == "" else repr(float(u))])


def _cmd_solve(args) -> int:
    config = config_from_args(args)
    run = run_scenario(Scenario.parse(args.scenario), args.n, args.repeats, config)
    _emit([run.report], args)
    if args.trajectory:
        _write_trajectory(run, args.trajectory)
    return EXIT_OK if run.report.ok else EXIT_SOLVER_FAILURE


def _cmd_bench(args) -> int:
    config = config_from_args(args)
    scenarios = [Scenario.parse(s) for s in args.scenario] if args.scenario else list(DEFAULT_SCENARIOS)
    reports = run_grid(scenarios, args.n, args.repeats, config, parallel=args.parallel)
    _emit(reports, args)
    return EXIT_OK if all(r.ok for r in reports) else EXIT_SOLVER_FAILURE


def _cmd_compare(args) -> int:
    config = config_from_args(args)
    result = compare_methods(args.n, args.repeats, config)
    if args.format == "json":
        text = json.dumps(dataclasses.asdict(result), indent=2) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    else:
        _emit([result.kkt, result.al], args)
    print(
        f"N={result.N}: rmse={result.rmse:.6g} m/s, iterations KKT={result.kkt_iterations} "
        f"AL={result.al_iterations} (ratio {result.iteration_ratio:.2f}), "
        f"time/iteration KKT/AL={result.time_per_iteration_ratio:.2f}",
        file=sys.stderr,
    )
    ok = result.kkt.ok and result.al.ok
    return EXIT_OK if ok else EXIT_SOLVER_FAILURE


def _cmd_reference(args) -> int:
    from .bench import synthesize_reference

    save_reference_csv(synthesize_reference(args.n, args.dt, args.seed), args.out)
    return EXIT_OK


COMMANDS = {
    "solve": _cmd_solve,
    "bench": _cmd_bench,
    "compare": _cmd_compare,
    "reference": _cmd_reference,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE


if __name__ == "__main__":
    sys.exit(main())
