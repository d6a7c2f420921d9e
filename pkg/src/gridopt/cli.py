"""Command-line front end: ``gridopt parse | powerflow | study``.

Exit codes: 0 success, 2 usage or configuration error, 3 case-data error,
4 numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from .grid_model import (
    CaseError,
    Network,
    ValidationError,
    ieee30,
    load_cost_file,
    load_ratings_file,
    parse_ieee_cdf,
    scale_loads,
)
from .pipeline import REFERENCE_VALUES, ConfigurationError, PlacementReport, StudyConfig, StudyError, run_study
from .power_flow import PowerFlowError, SolverOptions, solve

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CASE = 3
EXIT_DIVERGED = 4

BUILTIN_CASES = {"ieee30": ieee30}

log = logging.getLogger("gridopt")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Case loading
# ---------------------------------------------------------------------------

def load_case(case: str, costs: str | None = None, ratings: str | None = None) -> Network:
    """Load a CDF file (or a built-in case name) and attach optional cost and rating data."""
    if case in BUILTIN_CASES and not Path(case).exists():
        network = BUILTIN_CASES[case]()
    else:
        try:
            text = Path(case).read_text()
        except (OSError, UnicodeDecodeError) as exc:
            raise CliError(f"cannot read case file {case}: {exc}", EXIT_USAGE) from exc
        network = _parse(text, case)
    for path, attach in ((costs, load_cost_file), (ratings, load_ratings_file)):
        if path is None:
            continue
        try:
            network = attach(network, path)
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc}", EXIT_USAGE) from exc
        except (KeyError, ValueError, TypeError) as exc:
            raise CliError(f"bad data in {path}: {exc}", EXIT_CASE) from exc
    return network


def _parse(text: str, source: str) -> Network:
    try:
        return parse_ieee_cdf(text)
    except ValidationError as exc:
        details = "\n".join(f"  {v}" for v in exc.violations)
        raise CliError(f"{source}: case is invalid\n{details}", EXIT_CASE) from exc
    except CaseError as exc:
        raise CliError(f"{source}: {exc}", EXIT_CASE) from exc


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_parse(args) -> int:
    network = load_case(args.case, args.costs, args.ratings)
    print(f"{network.name or args.case}: {network.summary()}")
    print(f"base MVA {network.base_mva:g}, total load {network.total_load_mw():.2f} MW")
    print("valid")
    return EXIT_OK


def _solver_options(args) -> SolverOptions:
    try:
        return SolverOptions(tolerance=args.tolerance, max_iterations=args.max_iterations,
                             enforce_q_limits=not args.no_q_limits)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc


def cmd_powerflow(args) -> int:
    options = _solver_options(args)
    network = load_case(args.case, args.costs, args.ratings)
    if args.load_factor <= 0:
        raise CliError("--load-factor must be > 0", EXIT_USAGE)
    network = scale_loads(network, args.load_factor)
    try:
        sol = solve(network, options=options)
    except PowerFlowError as exc:
        raise CliError(f"power flow failed: {exc}", EXIT_DIVERGED) from exc
    if not sol.converged:
        raise CliError(f"power flow did not converge after {sol.iterations} iterations "
                       f"(max mismatch {sol.max_mismatch:.3e} pu)", EXIT_DIVERGED)
    print(f"{'bus':>5} {'type':>5} {'V (pu)':>9} {'angle (deg)':>12}")
    for bus, kind, vm, va in zip(network.buses, sol.bus_kinds, sol.v_mag, sol.v_angle):
        kind = getattr(kind, "value", kind)
        print(f"{bus.id:>5} {kind:>5} {vm:>9.4f} {math.degrees(va):>12.4f}")
    print(f"converged in {sol.iterations} iterations, max mismatch {sol.max_mismatch:.2e} pu")
    print(f"total generation {sol.total_generation_mw:.4f} MW, loss {sol.total_loss:.4f} MW")
    return EXIT_OK


def study_config(args) -> StudyConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EXIT_USAGE) from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"config {args.config} is not valid JSON: {exc}", EXIT_USAGE) from exc
        if not isinstance(doc, dict):
            raise CliError(f"config {args.config} must hold a JSON object", EXIT_USAGE)
    try:
        if args.load_factor is not None:
            doc["load_factor"] = args.load_factor
        if args.no_dispatch:
            doc["run_dispatch"] = False
        config = StudyConfig.from_dict(doc)
        if args.tolerance is not None:
            config = replace(config, solver=replace(config.solver, tolerance=args.tolerance))
        return config.with_overrides(seed=args.seed, population=args.population, iterations=args.iterations)
    except (ConfigurationError, ValueError, TypeError) as exc:
        raise CliError(f"invalid study configuration: {exc}", EXIT_USAGE) from exc


def cmd_study(args) -> int:
    config = study_config(args)
    network = load_case(args.case, args.costs, args.ratings)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_USAGE) from exc
    try:
        report = run_study(network, config)
    except StudyError as exc:
        raise CliError(str(exc), EXIT_DIVERGED) from exc
    except ConfigurationError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    if args.format in ("json", "both"):
        write_atomic(out / "report.json", report.to_json())
    if args.format in ("csv", "both"):
        write_atomic(out / "voltage_profile.csv", report.voltage_profile_csv())
    print(format_summary(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Summary table
# ---------------------------------------------------------------------------

_COLUMNS = (("base", "Base case"), ("stressed_no_tcsc", "Loaded, no TCSC"), ("with_tcsc", "Loaded, with TCSC"))


def _cell(value, fmt="{:.4f}") -> str:
    if value is None or value != value:
        return "-"
    return fmt.format(value)


def format_summary(report: PlacementReport) -> str:
    """Plain-text table in the layout of the published results, reference values alongside."""
    scen = {"base": report.base, "stressed_no_tcsc": report.stressed_no_tcsc,
            "with_tcsc": report.stressed_with_tcsc}
    ref = REFERENCE_VALUES
    head = f"{'':34}" + "".join(f"{title:>20}" for _, title in _COLUMNS)
    lines = [head, "-" * len(head)]

    def row(label, getter, ref_key=None):
        lines.append(f"{label:34}" + "".join(f"{_cell(getter(scen[k])):>20}" for k, _ in _COLUMNS))
        if ref_key:
            lines.append(f"{'  published':34}" + "".join(f"{_cell(ref[ref_key][k]):>20}" for k, _ in _COLUMNS))

    def opt(attr):
        return lambda s: getattr(s.optimized, attr) if s.optimized else None

    row("Total generation (MW)", lambda s: s.total_generation_mw, "generation_mw")
    row("Real power loss (MW)", lambda s: s.loss_mw, "loss_mw")
    row("Fuel cost, scheduled ($/hr)", lambda s: s.fuel_cost)
    row("Fuel cost, optimized ($/hr)", opt("fuel_cost"), "fuel_cost_per_hr")
    row("  optimized loss (MW)", opt("loss_mw"))
    row("  optimized penalty", opt("penalty"))
    dev = report.device
    lines += [
        "",
        f"TCSC location        branch {dev.branch_index} (bus {report.branch[0]} - bus {report.branch[1]}), "
        f"PFI {report.pfi:.4f}   [published: {ref['location']}]",
        f"TCSC reactance       {dev.x_tcsc:+.6f} pu",
        f"Operating range      {dev.operating_range_mvar:.4f} MVAr",
        f"TCSC unit cost       {report.tcsc_unit_cost:.4f} $/kVAr   [published: {ref['tcsc_unit_cost']}]",
        f"TCSC total cost      {report.tcsc_total_cost:,.2f} $",
        f"Voltage deviation    {report.voltage_deviation_no_tcsc:.6f} without TCSC, "
        f"{report.voltage_deviation_with_tcsc:.6f} with TCSC",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridopt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def case_args(p):
        p.add_argument("--case", required=True,
                       help="IEEE common-format case file, or 'ieee30' for the bundled case")
        p.add_argument("--costs", help="JSON generator cost table")
        p.add_argument("--ratings", help="JSON branch ratings (MVA)")

    p = sub.add_parser("parse", help="parse and validate a case file")
    case_args(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("powerflow", help="run one Newton-Raphson power flow")
    case_args(p)
    p.add_argument("--load-factor", type=float, default=1.0)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--max-iterations", type=int, default=30)
    p.add_argument("--no-q-limits", action="store_true", help="keep PV buses regardless of var limits")
    p.set_defaults(func=cmd_powerflow)

    p = sub.add_parser("study", help="run the TCSC placement and sizing study")
    case_args(p)
    p.add_argument("--config", help="JSON file with study configuration fields")
    p.add_argument("--load-factor", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--population", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--no-dispatch", action="store_true", help="skip the per-scenario dispatch optimization")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("--format", choices=("json", "csv", "both"), default="both")
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
