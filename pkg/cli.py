"""
Command-line surface: validate, simulate, analyze, checks, print-defaults.

Exit codes: 0 ok, 1 condition violation (or a failed check), 2 config error,
3 missing input.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from base import CONFIG_FILE_PATH, DEFAULT_THREADS, OUTPUT_ROOT
from checks import run_checks, throughput_probe
from config.defaults import DEFAULT_CONFIG
from config.types import ExitCode, KernelKind, PathStorage
from ensemble import RunManifest, replica_seeds, run_ensemble
from environment import validate_uniform_ellipticity, validate_uniform_excitation
from estimators import (
    BlockSample,
    EstimatorReport,
    advance_check,
    clt_test,
    covariance_estimate,
    direct_speed,
    escape_report,
    lag_autocorrelation,
    local_time_check,
    range_exponent,
    regen_tail,
    regeneration_rate,
    site_local_time_check,
    speed_estimate,
    submartingale_search,
)
from model import (
    excitation_strength,
    validate_condition_B,
    validate_condition_C_plus,
    validate_condition_E,
)
from renewal import blocks_header, blocks_rows
from trajectory import StatsSummary, trajectory_header
from utils.config_loader import (
    build_direction,
    build_kernel,
    cross_check_declared,
    declared_constants,
    load_config,
    run_horizons,
)
from utils.errors import (
    ConditionViolation,
    ConfigError,
    InsufficientDataError,
    InvalidEnvironmentError,
    LabError,
    MissingInputError,
    ValidationError,
)
from utils.helpers import log, print_highlighted, set_quiet
from utils.output_writer import OutputWriter, read_csv, read_json, require_files

STATS_FILE = "stats.json"
BLOCKS_FILE = "blocks.csv"
MANIFEST_FILE = "manifest.json"


def horizon_dir(n: int) -> str:
    return f"h{n}"


# ---- config plumbing ---------------------------------------------------------

def resolve_config(args) -> dict:
    path = Path(args.config) if args.config else (CONFIG_FILE_PATH if CONFIG_FILE_PATH.exists() else None)
    overrides = {"RUN_CONFIG": {}, "OUTPUT_CONFIG": {}}
    if args.seed is not None:
        overrides["RUN_CONFIG"]["master_seed"] = args.seed
    if args.threads is not None:
        overrides["RUN_CONFIG"]["threads"] = args.threads
    elif DEFAULT_THREADS > 1:
        overrides["RUN_CONFIG"]["threads"] = DEFAULT_THREADS
    if args.out is not None:
        overrides["OUTPUT_CONFIG"]["directory"] = args.out
    if args.format is not None:
        overrides["OUTPUT_CONFIG"]["formats"] = [args.format]
    return load_config(path, overrides)


def output_directory(config: dict) -> Path:
    """Relative OUTPUT_CONFIG.directory values resolve under ERW_LAB_OUTPUT_DIR."""
    directory = Path(config["OUTPUT_CONFIG"]["directory"])
    return directory if directory.is_absolute() else OUTPUT_ROOT / directory


def _kernel_and_direction(config: dict):
    direction = build_direction(config)
    try:
        kernel = build_kernel(config, direction)
    except ValidationError as err:
        raise ConfigError(f"MODEL_CONFIG: {err}")
    return kernel, direction


# ---- validate ------------------------------------------------------------------

def validation_report(config: dict) -> dict:
    kernel, direction = _kernel_and_direction(config)
    analysis = config["ANALYSIS_CONFIG"]
    report = {"kernel": kernel.name, "d": kernel.d, "ell": list(direction.ell), "cookie_set": kernel.cookie_set.label}
    report["K"] = validate_condition_B(kernel)
    certificate = validate_condition_C_plus(kernel, direction)
    report["condition_C"] = certificate.condition
    report["lambda"] = certificate.lam
    if kernel.kind == KernelKind.ERWRE:
        report["kappa"] = validate_uniform_ellipticity(kernel.environment)
        report["lambda"] = validate_uniform_excitation(kernel.environment, direction)
    h, r = validate_condition_E(kernel, direction, analysis["probe_count"])
    report["h"], report["r"] = h, r
    cross_check_declared(declared_constants(config), report)
    return report


def cmd_validate(args) -> int:
    config = resolve_config(args)
    report = validation_report(config)
    print_highlighted(f"kernel {report['kernel']} on Z^{report['d']}, cookie set {report['cookie_set']}")
    print(f"K = {report['K']:.12g}")
    if report["lambda"] is None:
        print("lambda = (no excited context: the walk is a martingale)")
    else:
        print(f"lambda = {report['lambda']:.12g} ({report['condition_C']})")
    print(f"(h, r) = ({report['h']:.12g}, {report['r']:.12g})")
    if "kappa" in report:
        print(f"kappa = {report['kappa']:.12g}")
    return ExitCode.OK.value


# ---- simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = resolve_config(args)
    kernel, direction = _kernel_and_direction(config)
    validate_condition_B(kernel)
    run, analysis, output = config["RUN_CONFIG"], config["ANALYSIS_CONFIG"], config["OUTPUT_CONFIG"]
    storage = PathStorage(run["store_path"])
    if output["trajectory_dump"] and storage == PathStorage.NONE:
        storage = PathStorage.FULL
    directory = output_directory(config)
    manifest = RunManifest(config=config, seeds=[])

    print_highlighted(f"simulate {kernel.name}: {run['replicas']} replicas, horizons {run_horizons(config)}")
    with OutputWriter(directory, output["formats"]) as writer:
        for n in run_horizons(config):
            log(f"horizon {n}: running")
            results = run_ensemble(
                kernel, direction, n, run["replicas"], run["master_seed"], run["threads"],
                analysis["confirm_margin"], storage, run["ring_size"],
            )
            records = []
            for result in results:
                record = result.summary.to_record()
                record["taus"] = result.sequence.taus
                records.append(record)
            base = horizon_dir(n)
            writer.write_json(f"{base}/{STATS_FILE}", {"horizon": n, "d": kernel.d, "replicas": records})
            rows = [row for result in results for row in blocks_rows(result.sequence)]
            writer.write_csv(f"{base}/{BLOCKS_FILE}", blocks_header(kernel.d), rows)
            if output["trajectory_dump"]:
                for result in results:
                    writer.write_csv(f"{base}/trajectories/replica_{result.replica:05d}.csv",
                                     trajectory_header(kernel.d), result.trajectory)
            manifest.seeds.append({"horizon": n, "replicas": replica_seeds(results)})
            log(f"horizon {n}: {sum(len(r.sequence.taus) for r in results)} regenerations")
        manifest.finish(writer.data_hashes())
        writer.write_json(MANIFEST_FILE, manifest.to_json(), hashed=False, force=True)
    log(f"wrote {directory}")
    return ExitCode.OK.value


# ---- analyze -------------------------------------------------------------------

def load_stats(directory: Path, horizons: list[int]) -> dict:
    expected = [f"{horizon_dir(n)}/{name}" for n in horizons for name in (STATS_FILE, BLOCKS_FILE)]
    require_files(directory, expected)
    loaded = {}
    for n in horizons:
        stats = read_json(directory / horizon_dir(n) / STATS_FILE)
        loaded[n] = {
            "d": stats["d"],
            "summaries": [StatsSummary.from_record(r) for r in stats["replicas"]],
            "taus": [r["taus"] for r in stats["replicas"]],
            "rows": read_csv(directory / horizon_dir(n) / BLOCKS_FILE),
        }
    return loaded


def _attempt(reports: dict, name: str, build):
    try:
        reports[name] = build()
    except InsufficientDataError as err:
        log(f"{name}: skipped ({err})")
        reports[name] = EstimatorReport(name, None, None, (None, None), 0, {"skipped": str(err)})


def analyze_horizon(config: dict, kernel, direction, n: int, data: dict) -> dict:
    analysis, run = config["ANALYSIS_CONFIG"], config["RUN_CONFIG"]
    wanted = set(analysis["estimators"])
    level = analysis["ci_level"]
    per_block = kernel.kind == KernelKind.ERWRE
    d = data["d"]
    blocks = BlockSample.from_rows(data["rows"], d, n, run["safety_window"], data["taus"])
    summaries = data["summaries"]
    reports = {}

    if wanted & {"speed", "covariance", "clt", "direct_speed"}:
        _attempt(reports, "speed", lambda: speed_estimate(blocks, level, per_block, direction))
    speed = reports.get("speed")
    have_speed = speed is not None and speed.estimate is not None
    if "direct_speed" in wanted:
        _attempt(reports, "direct_speed", lambda: direct_speed(summaries, direction, level, speed if have_speed else None))
    if have_speed and wanted & {"covariance", "clt"}:
        _attempt(reports, "covariance", lambda: covariance_estimate(blocks, speed.estimate, level, per_block))
    if "clt" in wanted and have_speed and reports["covariance"].estimate is not None:
        _attempt(reports, "clt", lambda: clt_test(blocks, speed.estimate, reports["covariance"].estimate,
                                                  analysis["batch_size"]))
    if "regen_tail" in wanted:
        _attempt(reports, "regen_tail", lambda: regen_tail(blocks, level=level))
    if "local_time" in wanted:
        _attempt(reports, "local_time", lambda: local_time_check(summaries, analysis["delta"], level))
    if "escape" in wanted:
        times = [s.first_backtrack_time for s in summaries]
        _attempt(reports, "escape", lambda: escape_report(times, [n], level))
    if "advance" in wanted:
        try:
            lam = excitation_strength(kernel, direction)
        except ConditionViolation as err:
            log(f"advance: skipped ({err})")
            lam = 0.0
        if lam > 0:
            _attempt(reports, "advance", lambda: advance_check(summaries, direction, lam, analysis["alpha0"], level))
    if "lag_autocorrelation" in wanted:
        _attempt(reports, "lag_autocorrelation", lambda: lag_autocorrelation(blocks))
    if "site_local_time" in wanted and kernel.kind == KernelKind.MARTINGALE:
        search = submartingale_search(kernel, analysis["b_grid"], analysis["radius_max"])
        reports["submartingale"] = search
        if search.passed:
            _attempt(reports, "site_local_time",
                     lambda: site_local_time_check(summaries, search.estimate, analysis["delta"], level))
    return reports


def cmd_analyze(args) -> int:
    stats_dir = Path(args.stats) if args.stats else None
    if stats_dir is None:
        stats_dir = output_directory(resolve_config(args))
    manifest_path = stats_dir / MANIFEST_FILE
    if args.config is None and manifest_path.exists():
        config = load_config(None, read_json(manifest_path)["config"])
    else:
        config = resolve_config(args)
    kernel, direction = _kernel_and_direction(config)
    horizons = run_horizons(config)
    if not stats_dir.exists():
        raise MissingInputError([stats_dir / f"{horizon_dir(n)}/{name}" for n in horizons for name in (STATS_FILE, BLOCKS_FILE)])
    data = load_stats(stats_dir, horizons)

    out_dir = Path(args.out) if args.out else stats_dir / "reports"
    print_highlighted(f"analyze {stats_dir}")
    with OutputWriter(out_dir, config["OUTPUT_CONFIG"]["formats"]) as writer:
        for n in horizons:
            log(f"horizon {n}")
            for name, report in analyze_horizon(config, kernel, direction, n, data[n]).items():
                _write_report(writer, f"{horizon_dir(n)}/{name}", report)
        overall = analyze_across_horizons(config, horizons, data)
        for name, report in overall.items():
            _write_report(writer, name, report)
    log(f"wrote {out_dir}")
    return ExitCode.OK.value


def analyze_across_horizons(config: dict, horizons: list[int], data: dict) -> dict:
    analysis = config["ANALYSIS_CONFIG"]
    wanted = set(analysis["estimators"])
    reports = {}
    if "range_exponent" in wanted and len(horizons) >= 3:
        ranges = {n: [s.range_size for s in data[n]["summaries"]] for n in horizons}
        _attempt(reports, "range_exponent", lambda: range_exponent(ranges, analysis["alpha0"], analysis["ci_level"]))
    if "regeneration_rate" in wanted and len(horizons) >= 2:
        _attempt(reports, "regeneration_rate", lambda: regeneration_rate({n: data[n]["taus"] for n in horizons}))
    if "escape" in wanted and len(horizons) >= 2:
        # first_backtrack_time of the longest run answers every shorter horizon too
        times = [s.first_backtrack_time for s in data[horizons[-1]]["summaries"]]
        _attempt(reports, "escape", lambda: escape_report(times, horizons, analysis["ci_level"]))
    return reports


def _write_report(writer: OutputWriter, stem: str, report: EstimatorReport):
    writer.write_json(f"{stem}.json", report.to_json())
    for plot, (header, rows) in report.plots.items():
        writer.write_csv(f"{stem}_{plot}.csv", header, rows)


# ---- checks --------------------------------------------------------------------

def cmd_checks(args) -> int:
    config = resolve_config(args)
    run = config["RUN_CONFIG"]
    directory = Path(args.out) if args.out else output_directory(config).with_name("checks")
    manifest = RunManifest(config=config, seeds=[{"master_seed": run["master_seed"]}])
    outcomes = run_checks(config["CHECKS_CONFIG"], run["master_seed"], run["threads"], args.only)
    with OutputWriter(directory, config["OUTPUT_CONFIG"]["formats"]) as writer:
        for outcome in outcomes:
            writer.write_json(f"{outcome.name}.json", outcome.to_json())
            for key, report in outcome.reports.items():
                for plot, (header, rows) in report.plots.items():
                    writer.write_csv(f"{outcome.name}_{key}_{plot}.csv", header, rows)
        summary = {outcome.name: outcome.passed for outcome in outcomes}
        writer.write_json("summary.json", summary, force=True)
        manifest.diagnostics["throughput"] = throughput_probe()
        manifest.finish(writer.data_hashes())
        writer.write_json(MANIFEST_FILE, manifest.to_json(), hashed=False, force=True)
    failed = [outcome.name for outcome in outcomes if not outcome.passed]
    print_highlighted("all checks passed" if not failed else f"failed: {', '.join(failed)}")
    return ExitCode.OK.value if not failed else ExitCode.CONDITION_VIOLATION.value


def cmd_print_defaults(args) -> int:
    print(json.dumps(DEFAULT_CONFIG, indent=2))
    return ExitCode.OK.value


# ---- entry -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="config file (default: config.json next to the tool)")
    common.add_argument("--seed", type=int, default=None, help="master seed, overrides RUN_CONFIG.master_seed")
    common.add_argument("--threads", type=int, default=None, help="worker processes")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--format", choices=["json", "csv"], default=None, help="write only this format")
    common.add_argument("--quiet", action="store_true", help="no progress output")

    parser = argparse.ArgumentParser(prog="erw-lab", description="Excited random walk laboratory")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("validate", parents=[common], help="check Conditions B, C/C+, E (and kappa for ERWRE)")
    commands.add_parser("simulate", parents=[common], help="run the replica ensemble and write stats")
    analyze = commands.add_parser("analyze", parents=[common], help="run estimators over simulate output")
    analyze.add_argument("--stats", default=None, help="directory written by simulate")
    checks = commands.add_parser("checks", parents=[common], help="run the theory-check suite")
    checks.add_argument("--only", nargs="*", default=None, help="run only these checks")
    commands.add_parser("print-defaults", parents=[common], help="print the default config")
    return parser


HANDLERS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "checks": cmd_checks,
    "print-defaults": cmd_print_defaults,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_quiet(args.quiet)
    try:
        return HANDLERS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return ExitCode.CONFIG_ERROR.value
    except MissingInputError as err:
        print(f"error: {err}", file=sys.stderr)
        return ExitCode.MISSING_INPUT.value
    except (ConditionViolation, InvalidEnvironmentError, ValidationError) as err:
        print(f"violation: {err}", file=sys.stderr)
        return ExitCode.CONDITION_VIOLATION.value
    except LabError as err:
        print(f"error: {err}", file=sys.stderr)
        return ExitCode.CONDITION_VIOLATION.value
