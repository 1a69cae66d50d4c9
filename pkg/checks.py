"""
The end-to-end theory-check suite. Every check draws from its own seed
(derived from the master seed and a fixed salt), so checks can be run alone
or together with identical results.
"""
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from config.kernel_tables import kernel_tables
from environment import EnvironmentModel, validate_uniform_ellipticity, validate_uniform_excitation
from ensemble import projected_displacements, run_ensemble
from estimators import (
    BlockSample,
    EstimatorReport,
    advance_check,
    azuma_bound,
    azuma_check,
    clt_test,
    covariance_estimate,
    direct_speed,
    escape_probability,
    hit_set_check,
    lag_autocorrelation,
    local_time_check,
    range_exponent,
    regen_tail,
    regeneration_rate,
    site_local_time_check,
    speed_estimate,
    submartingale_increment,
    submartingale_search,
    tail_moment_stability,
)
from model import CookieSet, Direction, KernelSpec, excitation_strength, symmetric_law
from config.types import CookieSetKind, PathStorage
from renewal import oracle_regeneration_times, regeneration_times
from trajectory import simulate
from utils.errors import InsufficientDataError
from utils.helpers import log, print_highlighted
from utils.output_writer import json_bytes, sha256_bytes
from utils.rng import RngStream, derive_seed

E1 = Direction.axis(2, 0)
DETERMINISM_THREADS = 8


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    reports: dict[str, EstimatorReport] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "notes": self.notes,
            "reports": {key: report.to_json() for key, report in self.reports.items()},
        }


def _erw(p: float = 0.75, d: int = 2) -> KernelSpec:
    return KernelSpec.standard_erw(p, d)


def _summaries(results):
    return [r.summary for r in results]


def _sequences(results):
    return [r.sequence for r in results]


# ---- renewal ---------------------------------------------------------------

def check_renewal_oracle(cfg: dict, seed: int, threads: int) -> CheckOutcome:
    combos = [(p, d) for p in (0.6, 0.75, 1.0) for d in (2, 3)]
    per_combo = math.ceil(cfg["oracle_paths"] / len(combos))
    horizon = cfg["oracle_horizon"]
    mismatches, paths, first_mismatch = 0, 0, None
    for index, (p, d) in enumerate(combos):
        results = run_ensemble(
            _erw(p, d), Direction.axis(d, 0), horizon, per_combo, derive_seed(seed, index),
            threads, storage=PathStorage.FULL,
        )
        for result in results:
            paths += 1
            if result.sequence.taus != oracle_regeneration_times(result.projections):
                mismatches += 1
                first_mismatch = first_mismatch or {"p": p, "d": d, "replica": result.replica}
    report = EstimatorReport("renewal_oracle", mismatches, 0.0, (mismatches, mismatches), paths, {
        "horizon": horizon,
        "first_mismatch": first_mismatch,
        "passed": mismatches == 0,
    })
    return CheckOutcome("renewal_oracle", mismatches == 0, {"oracle": report})


def check_hand_traces(cfg: dict, seed: int, threads: int) -> CheckOutcome:
    monotone = list(range(11))
    backtrack = [0, 1, 0, 1] + list(range(2, 12))
    got_monotone = regeneration_times(monotone).taus
    got_backtrack = regeneration_times(backtrack).taus
    expected_backtrack = list(range(4, len(backtrack)))
    ok = (
        got_monotone == list(range(1, 11))
        and got_backtrack == expected_backtrack
        and oracle_regeneration_times(monotone) == got_monotone
        and oracle_regeneration_times(backtrack) == got_backtrack
    )
    return CheckOutcome("hand_traces", ok, notes={"monotone": got_monotone, "backtrack": got_backtrack})


# ---- speed -------------------------------------------------------------------

def check_ballisticity(cfg: dict, seed: int, threads: int) -> CheckOutcome:
    results = run_ensemble(_erw(), E1, cfg["speed_horizon"], cfg["speed_replicas"], seed, threads)
    blocks = BlockSample.from_sequences(_sequences(results), 2)
    ratio = speed_estimate(blocks, level=0.99, direction=E1)
    direct = direct_speed(_summaries(results), E1, level=0.99, ratio=ratio)
    ok = direct.ci[0] > 0 and direct.diagnostics["agree_3se"]
    lam = excitation_strength(_erw(), E1)
    advance = advance_check(_summaries(results), E1, lam, alpha0=0.05)
    return CheckOutcome("ballisticity", bool(ok), {"direct_speed": direct, "speed": ratio, "advance": advance})


def check_null_control(cfg: dict, seed: int, threads: int) -> CheckOutcome:
    results = run_ensemble(_erw(0.5), E1, cfg["speed_horizon"], cfg["speed_replicas"], seed, threads)
    direct = direct_speed(_summaries(results), E1)
    ok = abs(direct.estimate) <= 4 * direct.se
    return CheckOutcome("null_control", bool(ok), {"direct_speed": direct})


# ---- range and local times ---------------------------------------------------

def _range_ensembles(kernel: KernelSpec, cfg: dict, seed: int, threads: int) -> dict:
    return {
        n: run_ensemble(kernel, E1, n, cfg["range_replicas"], derive_seed(seed, n), threads)
        for n in cfg["range_horizons"]
    }


def check_range_and_local_time(cfg: dict, seed: int, threads: int) -> list[CheckOutcome]:
    reports, ok_range, ok_local = {}, True, True
    for index, (label, kernel) in enumerate((("erw", _erw()), ("martingale", KernelSpec.symmetric(2)))):
        log(f"range ensembles: {label}")
        by_horizon = _range_ensembles(kernel, cfg, derive_seed(seed, index), threads)
        ranges = {n: [s.range_size for s in _summaries(res)] for n, res in by_horizon.items()}
        exponent = range_exponent(ranges, alpha0=0.05, level=0.99)
        reports[f"range_{label}"] = exponent
        ok_range &= exponent.ci[0] > 0.5 and all(f == 0 for f in exponent.diagnostics["fraction_below"].values())
        if label == "erw":
            for n, res in by_horizon.items():
                local = local_time_check(_summaries(res), delta=0.1)
                reports[f"local_time_{n}"] = local
                ok_local &= bool(local.passed)

    oscillator = KernelSpec.from_table(kernel_tables["strip_oscillator"], name="strip_oscillator")
    control = run_ensemble(oscillator, E1, 1000, 4, derive_seed(seed, 99), 1)
    negative = local_time_check(_summaries(control), delta=0.1)
    reports["local_time_oscillator"] = negative
    ok_local &= negative.estimate == 1.0
    range_reports = {k: v for k, v in reports.items() if k.startswith("range")}
    local_reports = {k: v for k, v in reports.items() if k.startswith("local")}
    return [
        CheckOutcome("range_growth", bool(ok_range), range_reports),
        CheckOutcome("local_time", bool(ok_local), local_reports),
    ]


# ---- regeneration tails --------------------------------------------------------

def check_regeneration_tails(cfg: dict, seed: int, threads: int) -> CheckOutcome:
    n = cfg["tail_horizon"]
    short = run_ensemble(_erw(), E1, n, cfg["tail_replicas"], seed, threads)
    long = run_ensemble(_erw(), E1, 2 * n, cfg["tail_replicas"], derive_seed(seed, 2), threads)
    short_blocks = BlockSample.from_sequences(_sequences(short), 2)
    long_blocks = BlockSample.from_sequences(_sequences(long), 2)
    stability = tail_moment_stability(short_blocks, long_blocks, tolerance=0.10)
    tail = regen_tail(long_blocks)
    rate = regeneration_rate({
        n: [r.sequence.taus for r in short],
        2 * n: [r.sequence.taus for r in long],
    })
    ok = (
        stability.passed
        and not tail.diagnostics["degenerate"]
        and tail.estimate > 0
        and tail.diagnostics["r_squared"] >= 0.95
    )
    return CheckOutcome("regeneration_tails", bool(ok), {
        "moment_stability": stability,
        "tail_fit": tail,
        "regeneration_rate": rate,
    })


def check_escape(cfg: dict, seed: int, threads: int) -> CheckOutcome:
    report = escape_probability(_erw(), E1, cfg["escape_horizons"], cfg["escape_replicas"], seed, threads, level=0.99)
    ok = report.estimate > 0 and report.diagnostics["excludes_zero"] and report.diagnostics["overlapping"]
    return CheckOutcome("escape", bool(ok), {"escape": report})


# ---- random environment ----------------------------------------------------------

def check_clt_and_independence(cfg: dict, seed: int, threads: int) -> list[CheckOutcome]:
    env_cfg = cfg["clt_env"]
    env = EnvironmentModel(2, p_lo=env_cfg["p_lo"], p_hi=env_cfg["p_hi"], master_seed=seed)
    kappa = validate_uniform_ellipticity(env)
    lam = validate_uniform_excitation(env, E1)
    kernel = KernelSpec.erwre(env)
    results = run_ensemble(kernel, E1, cfg["clt_horizon"], cfg["clt_replicas"], derive_seed(seed, 1), threads)
    blocks = BlockSample.from_sequences(_sequences(results), 2)
    notes = {"kappa": kappa, "lambda": lam, "blocks": len(blocks)}
    try:
        speed = speed_estimate(blocks, per_block=True, direction=E1)
        cov = covariance_estimate(blocks, speed.estimate, per_block=True)
        clt = clt_test(blocks, speed.estimate, cov.estimate, batch_size=32, min_blocks=cfg["clt_min_blocks"])
    except InsufficientDataError as err:
        notes["error"] = str(err)
        return [CheckOutcome("clt", False, notes=notes), CheckOutcome("block_independence", False, notes=notes)]
    symmetric = bool(np.allclose(cov.estimate, cov.estimate.T, atol=1e-12))
    ok_clt = clt.passed and symmetric and cov.diagnostics["min_eigenvalue"] > 0
    lag = lag_autocorrelation(blocks)
    return [
        CheckOutcome("clt", bool(ok_clt), {"speed": speed, "covariance": cov, "ks": clt}, notes),
        CheckOutcome("block_independence", bool(lag.passed), {"lag_autocorrelation": lag}),
    ]


# ---- martingale checks --------------------------------------------------------------

def check_azuma(cfg: dict, seed: int, threads: int) -> CheckOutcome:
    n = cfg["azuma_horizon"]
    closed_form = azuma_bound(100, 30, 1.0)
    exact = abs(closed_form - 2 * math.exp(-4.5)) <= 1e-12
    z = projected_displacements(KernelSpec.symmetric(2), E1, n, cfg["azuma_replicas"], seed, threads)
    grid = [k * math.sqrt(n) for k in cfg.get("azuma_multiples", (1.0, 2.0, 3.0))]
    report = azuma_check(z, n, grid, c=1.0)
    mean = float(z.mean())
    se = float(z.std(ddof=1) / math.sqrt(len(z)))
    notes = {"closed_form": closed_form, "closed_form_exact": exact, "mean": mean, "mean_se": se}
    ok = report.passed and exact and abs(mean) <= 4 * se
    return CheckOutcome("azuma", bool(ok), {"azuma": report}, notes)


def check_submartingale(cfg: dict, seed: int, threads: int) -> list[CheckOutcome]:
    law = symmetric_law(2)
    radius = cfg["submart_radius"]
    search = submartingale_search(law, [0.1 * k for k in range(1, 10)], radius)
    margin = submartingale_increment(law, (10, 0), 0.9)
    brute = 0.25 * (11 ** 0.9 + 9 ** 0.9 + 2 * 101 ** 0.45) - 10 ** 0.9
    agree = abs(margin - brute) <= 1e-12
    outcome = CheckOutcome(
        "submartingale", bool(search.passed and agree and 0 < search.estimate < 1), {"search": search},
        {"margin_10_0": margin, "brute_force": brute, "agree": agree},
    )

    outcomes = [outcome]
    if outcome.passed:
        b = search.estimate
        symmetric = KernelSpec.symmetric(2)
        n = cfg["range_horizons"][-1]
        walks = run_ensemble(symmetric, E1, n, cfg["range_replicas"], derive_seed(seed, 3), threads)
        site = site_local_time_check(_summaries(walks), b, 0.1)
        m = cfg["range_horizons"][-1]
        hit = hit_set_check(symmetric, E1, m, b, 0.1, cfg["range_replicas"], derive_seed(seed, 4), threads)
        oscillator = KernelSpec.from_table(kernel_tables["strip_oscillator"], name="strip_oscillator")
        control = run_ensemble(oscillator, E1, 1000, 4, derive_seed(seed, 5), 1)
        negative = site_local_time_check(_summaries(control), b, 0.1)
        ok = site.passed and hit.passed and negative.estimate == 1.0
        outcomes.append(CheckOutcome("site_local_time", bool(ok), {
            "site_local_time": site, "hit_set": hit, "oscillator": negative,
        }))
    return outcomes


def check_advance_depleted(cfg: dict, seed: int, threads: int) -> CheckOutcome:
    """Advance with cookies removed from a strip, and the cookie-free negative control."""
    n = cfg["speed_horizon"]
    lam = excitation_strength(_erw(), E1)
    strip = CookieSet(CookieSetKind.DEPLETED_STRIP, 5.0, 15.0, E1.ell)
    depleted = run_ensemble(_erw().with_cookie_set(strip), E1, n, cfg["range_replicas"], seed, threads)
    empty = run_ensemble(_erw().with_cookie_set(CookieSet(CookieSetKind.NONE)), E1, n, cfg["range_replicas"],
                         derive_seed(seed, 1), threads)
    strip_report = advance_check(_summaries(depleted), E1, lam, alpha0=0.05)
    empty_report = advance_check(_summaries(empty), E1, lam, alpha0=0.05)
    ok = strip_report.passed and empty_report.estimate > strip_report.ci[1]
    return CheckOutcome("advance", bool(ok), {"depleted_strip": strip_report, "no_cookies": empty_report})


def check_determinism(cfg: dict, seed: int, threads: int) -> CheckOutcome:
    def digest(worker_count: int) -> str:
        results = run_ensemble(_erw(), E1, 2000, 8, seed, worker_count)
        payload = [{"stats": r.summary.to_record(), "taus": r.sequence.taus} for r in results]
        return sha256_bytes(json_bytes(payload))

    one, again, many = digest(1), digest(1), digest(DETERMINISM_THREADS)
    same = one == again == many
    return CheckOutcome("determinism", same, notes={"threads_1": one, "threads_1_rerun": again, "threads_8": many})


CHECKS: dict[str, Callable] = {
    "hand_traces": check_hand_traces,
    "renewal_oracle": check_renewal_oracle,
    "ballisticity": check_ballisticity,
    "null_control": check_null_control,
    "range_and_local_time": check_range_and_local_time,
    "regeneration_tails": check_regeneration_tails,
    "escape": check_escape,
    "clt_and_independence": check_clt_and_independence,
    "azuma": check_azuma,
    "submartingale": check_submartingale,
    "advance": check_advance_depleted,
    "determinism": check_determinism,
}


def throughput_probe(steps: int = 100_000) -> dict:
    """Steps per second of the standard ERW; timing never goes into data files."""
    rng = RngStream(0, 0)
    started = time.perf_counter()
    simulate(_erw(), E1, steps, rng)
    seconds = time.perf_counter() - started
    return {"steps": steps, "seconds": round(seconds, 3), "steps_per_second": round(steps / seconds)}


def run_checks(cfg: dict, master_seed: int, threads: int, only=None) -> list[CheckOutcome]:
    outcomes = []
    for salt, (name, check) in enumerate(CHECKS.items()):
        if only and name not in only:
            continue
        print_highlighted(f"check: {name}")
        result = check(cfg, derive_seed(master_seed, salt), threads)
        for outcome in result if isinstance(result, list) else [result]:
            log(f"{outcome.name}: {'PASS' if outcome.passed else 'FAIL'}")
            outcomes.append(outcome)
    return outcomes
