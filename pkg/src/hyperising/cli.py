"""Command-line entry point: ``hyperising <subcommand> [options]``.

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from . import ci, classical, fermion, sweep
from .errors import (CapacityError, ConvergenceError, DegenerateModeError, IsingError,
                     MalformedInputError, ValidationError)
from .model import GridConvention, build_power_law_couplings, load_coupling_set

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


def parse_gamma_range(text):
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad gamma range {text!r}") from None
    if len(values) == 1:
        return values[0], values[0], 1.0
    if len(values) != 3:
        raise argparse.ArgumentTypeError("gamma range must be <value> or <start:end:step>")
    return tuple(values)


def parse_power_law(text):
    """``a=<x>[,staggered]``"""
    exponent, staggered = None, False
    for item in text.split(","):
        item = item.strip()
        if item == "staggered":
            staggered = True
        elif item.startswith("a="):
            try:
                exponent = float(item[2:])
            except ValueError:
                raise argparse.ArgumentTypeError(f"bad exponent in {text!r}") from None
        else:
            raise argparse.ArgumentTypeError(f"unknown power-law option {item!r}")
    if exponent is None:
        raise argparse.ArgumentTypeError("power law needs a=<exponent>")
    return exponent, staggered


def _couplings(args):
    if args.couplings:
        return load_coupling_set(args.couplings, allow_wrap=args.allow_wrap)
    if args.power_law:
        if args.n is None or args.r is None:
            raise ValidationError("--power-law needs --n and --r")
        exponent, staggered = args.power_law
        return build_power_law_couplings(args.n, args.r, exponent, staggered, allow_wrap=args.allow_wrap)
    raise ValidationError("give --couplings <path> or --power-law a=<x>[,staggered]")


def _plan(args, couplings):
    start, end, step = args.gamma
    return sweep.SweepPlan(
        couplings=couplings,
        solver=args.solver,
        gamma_start=start,
        gamma_end=end,
        gamma_step=step,
        seed=args.seed,
        ed_states=args.ed_states,
        ci_level=args.ci_level,
        ci_references=args.references,
        tau_grid=args.tau_grid,
        energy_constant=args.energy_constant,
        coupling_source=args.couplings or f"power-law {args.power_law}",
    )


def _out_dir(args):
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_classical(args):
    c = _couplings(args)
    levels = classical.enumerate_low_lying(c, args.levels)
    for i, level in enumerate(levels):
        reps = " ".join(r.bitstring for r in level.representatives)
        print(f"level {i}: energy={level.energy!r} degeneracy={level.degeneracy} representatives={reps}")
    if args.out:
        classical.dump_levels(levels, _out_dir(args) / "levels.txt")
    return EXIT_OK


def cmd_solve(args):
    c = _couplings(args)
    plan = _plan(args, c)
    point = sweep.solve_point(plan, plan.gamma_start)
    if not point.ok:
        print(point.status, file=sys.stderr)
        return EXIT_SOLVER
    payload = {name: getattr(point.record, name) for name in sweep.RECORD_FIELDS}
    payload.update(status=point.status, solver=plan.solver.value, **point.extra)
    print(json.dumps(payload, indent=2, default=float))
    return EXIT_OK


def cmd_sweep(args):
    plan = _plan(args, _couplings(args))
    result = sweep.run_sweep(plan)
    manifest = sweep.emit_outputs(result, _out_dir(args))
    for entry in manifest["files"]:
        print(f"{entry['name']}: {entry['rows']} rows")
    for iv in result.intervals:
        print(f"critical interval [{iv.gamma_low!r}, {iv.gamma_high!r}] via {iv.observable} (jump {iv.jump_size:.4g})")
    return EXIT_OK if result.gaps == 0 else EXIT_SOLVER


def cmd_fermion(args):
    c = _couplings(args)
    fermion.require_even_chain(c)
    report = fermion.count_transitions(c)
    print(f"pairwise model: {report.count} transition(s)")
    for gc, mech in zip(report.critical_gammas, report.mechanisms):
        print(f"  Gamma_c = {gc!r} ({', '.join(mech)})")
    if args.mean_field:
        start, end, step = args.gamma
        grid = sweep.gamma_grid(start, end, step)
        mf = fermion.mean_field_transition_count(c, grid, energy_constant=args.energy_constant)
        print(f"mean-field scan: {mf.count} occupation change(s)")
        for (low, high), mech in zip(mf.brackets, mf.mechanisms):
            print(f"  between {low!r} and {high!r} ({', '.join(mech)})")
    return EXIT_OK


def cmd_ci_scan(args):
    c = _couplings(args)
    start, end, step = args.gamma
    refs = sweep.select_references(c, args.ci_level, args.references)
    scan = ci.multi_reference_scan(c, refs, args.ci_level, sweep.gamma_grid(start, end, step))
    out = _out_dir(args)
    ci.write_scan_csv(scan, out / "ci_scan.csv")
    ci.write_crossover_report(scan, out / "crossovers.txt")
    print((out / "crossovers.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_refine(args):
    plan = _plan(args, _couplings(args))
    low, high = args.bracket
    if args.observable == "h_x-max":
        a, b = sweep.refine_hx_maximum(plan, low, high, args.passes)
        print(f"h_x maximum within [{a!r}, {b!r}]")
        return EXIT_OK
    interval = sweep.CriticalInterval(low, high, args.observable, 0.0)
    refined = sweep.refine_interval(plan, interval, args.passes)
    print(f"[{refined.gamma_low!r}, {refined.gamma_high!r}] {refined.observable} "
          f"jump={refined.jump_size:.6g} {refined.annotation}")
    return EXIT_OK


def _bracket(text):
    try:
        low, high = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("bracket must be <low:high>") from None
    return low, high


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("couplings")
    src.add_argument("--couplings", help="coupling file (N/R/a header, then '<r> <J_r>' lines)")
    src.add_argument("--power-law", type=parse_power_law, help="J_r = r^-a, optionally staggered")
    src.add_argument("--n", type=int, help="number of sites (with --power-law)")
    src.add_argument("--r", type=int, help="cutoff radius (with --power-law)")
    src.add_argument("--allow-wrap", action="store_true", help="accept R >= N/2")
    common.add_argument("--gamma", type=parse_gamma_range, default=(0.0, 2.0, 0.05),
                        help="<value> or <start:end:step> (default 0:2:0.05)")
    common.add_argument("--solver", choices=[s.value for s in sweep.Solver], default="exact")
    common.add_argument("--ci-level", type=int, default=2)
    common.add_argument("--references", type=int, default=1, help="number of classical CI references")
    common.add_argument("--ed-states", type=int, default=2, help="eigenpairs per exact solve")
    common.add_argument("--tau-grid", choices=[g.value for g in GridConvention], default="closed")
    common.add_argument("--energy-constant", choices=[e.value for e in fermion.EnergyConstant],
                        default="calibrated",
                        help="pairwise energy offset: eq15 (-N*Gamma), eq17 (none), calibrated (+2*Gamma)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hyperising", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classical", parents=[common], help="enumerate low-lying zero-field levels")
    p.add_argument("--levels", type=int, default=4)
    p.set_defaults(func=cmd_classical)

    p = sub.add_parser("solve", parents=[common], help="solve a single field value")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", parents=[common], help="sweep the transverse field")
    p.set_defaults(func=cmd_sweep, out="sweep-out")

    p = sub.add_parser("fermion", parents=[common], help="free-fermion transition report")
    p.add_argument("--mean-field", action="store_true", help="also scan the mean-field model over --gamma")
    p.set_defaults(func=cmd_fermion)

    p = sub.add_parser("ci-scan", parents=[common], help="multi-reference CI scan")
    p.set_defaults(func=cmd_ci_scan, out="ci-out")

    p = sub.add_parser("refine", parents=[common], help="bisect a critical bracket")
    p.add_argument("--bracket", type=_bracket, required=True, help="<low:high>")
    p.add_argument("--observable", default="h_x",
                   help="record field, 'occupation' (fermion solvers) or 'h_x-max'")
    p.add_argument("--passes", type=int, default=10)
    p.set_defaults(func=cmd_refine)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MalformedInputError, ValidationError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError, DegenerateModeError, IsingError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
