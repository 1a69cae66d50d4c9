"""
Estimators and property checks over replica ensembles and regeneration blocks.

Everything here is a pure fold over immutable inputs; the only exceptions are
`escape_probability` and `hit_set_check`, which drive their own ensembles.
Standard errors for pooled blocks use one batch per replica unless the caller
asks for per-block units (allowed for ERWRE, whose blocks are i.i.d. under the
annealed law).
"""
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats as sps

from ensemble import entrance_times, first_backtrack_times
from model import DRIFT_TOL, Direction, KernelSpec, StepDistribution, drift, validate_condition_C_plus
from renewal import RegenerationSequence
from trajectory import context_free_law
from utils.errors import ConditionViolation, ContractViolation, InsufficientDataError

SURVIVAL_WINDOW = (0.01, 0.5)
KS_MIN_BATCHES = 35
DEGENERATE_VAR = 1e-15


@dataclass
class EstimatorReport:
    method: str
    estimate: object
    se: object
    ci: tuple
    n: int
    diagnostics: dict = field(default_factory=dict)
    # name -> (header, rows), written next to the JSON as plot data
    plots: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> Optional[bool]:
        return self.diagnostics.get("passed")

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "estimate": _plain(self.estimate),
            "se": _plain(self.se),
            "ci": [_plain(self.ci[0]), _plain(self.ci[1])],
            "n": int(self.n),
            "diagnostics": _plain(self.diagnostics),
        }


def _plain(value):
    """numpy-free, NaN-free JSON value."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) else value
    return value


def critical_value(level: float, n: int) -> float:
    """Two-sided quantile: normal from 30 samples on, Student t below."""
    q = 0.5 + level / 2
    if n >= 30:
        return float(sps.norm.ppf(q))
    return float(sps.t.ppf(q, df=max(n - 1, 1)))


def wilson_interval(successes: int, total: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for Bernoulli outcomes."""
    if total <= 0:
        return (0.0, 1.0)
    p = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2.0 * total)) / denom
    margin = (z * ((p * (1.0 - p) / total + z2 / (4.0 * total * total)) ** 0.5)) / denom
    return (max(0.0, center - margin), min(1.0, center + margin))


def _fraction_report(method: str, hits: int, total: int, level: float, diagnostics: dict) -> EstimatorReport:
    if total <= 0:
        raise InsufficientDataError(f"{method}: no replicas")
    z = float(sps.norm.ppf(0.5 + level / 2))
    fraction = hits / total
    se = math.sqrt(fraction * (1 - fraction) / total)
    return EstimatorReport(method, fraction, se, wilson_interval(hits, total, z), total, diagnostics)


# ---- blocks ---------------------------------------------------------------

@dataclass
class BlockSample:
    """Pooled regeneration blocks with their replica of origin."""

    dtau: np.ndarray
    dx: np.ndarray
    dproj: np.ndarray
    replica: np.ndarray
    dropped_first: int = 0
    dropped_last: int = 0
    dropped_window: int = 0

    @property
    def d(self) -> int:
        return self.dx.shape[1]

    def __len__(self) -> int:
        return len(self.dtau)

    @classmethod
    def empty(cls, d: int) -> "BlockSample":
        return cls(np.zeros(0), np.zeros((0, d)), np.zeros(0), np.zeros(0, dtype=int))

    @classmethod
    def from_sequences(cls, sequences: Iterable[RegenerationSequence], d: int, safety_window: int = 0) -> "BlockSample":
        dtau, dx, dproj, replica = [], [], [], []
        first = last = window = 0
        for sequence in sequences:
            first += int(sequence.censor.first_block_present)
            if sequence.blocks:
                last += 1
            usable = sequence.usable_blocks(safety_window)
            window += max(len(sequence.blocks) - 1, 0) - len(usable)
            for block in usable:
                dtau.append(block.dtau)
                dx.append(block.dx)
                dproj.append(block.dproj)
                replica.append(sequence.replica)
        if not dtau:
            sample = cls.empty(d)
        else:
            sample = cls(
                np.asarray(dtau, dtype=float),
                np.asarray(dx, dtype=float).reshape(len(dtau), d),
                np.asarray(dproj, dtype=float),
                np.asarray(replica, dtype=int),
            )
        sample.dropped_first, sample.dropped_last, sample.dropped_window = first, last, window
        return sample

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[dict],
        d: int,
        horizon: int,
        safety_window: int = 0,
        taus: Optional[Sequence[Sequence[int]]] = None,
    ) -> "BlockSample":
        """
        Rebuild from blocks-CSV rows (all blocks k >= 1 of every replica).
        The CSV has no line for a replica without blocks, so the first/last
        drop counts come from each replica's taus when given.
        """
        by_replica: dict[int, list[dict]] = {}
        for row in rows:
            by_replica.setdefault(int(row["replica"]), []).append(row)
        dtau, dx, dproj, replica = [], [], [], []
        last = window = 0
        limit = horizon - safety_window
        for index in sorted(by_replica):
            blocks = sorted(by_replica[index], key=lambda row: int(row["k"]))
            last += 1
            for row in blocks[:-1]:
                if int(row["tau_k"]) + int(row["dtau"]) > limit:
                    window += 1
                    continue
                dtau.append(float(row["dtau"]))
                dx.append([float(row[f"dx_{i + 1}"]) for i in range(d)])
                dproj.append(float(row["dproj"]))
                replica.append(index)
        if not dtau:
            sample = cls.empty(d)
        else:
            sample = cls(np.asarray(dtau), np.asarray(dx).reshape(len(dtau), d), np.asarray(dproj), np.asarray(replica))
        if taus is not None:
            # the block before tau_1 exists once tau_1 does; the block ending at the last tau once tau_2 does
            sample.dropped_first = sum(len(t) >= 1 for t in taus)
            last = sum(len(t) >= 2 for t in taus)
        sample.dropped_last, sample.dropped_window = last, window
        return sample

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, Sequence[float]]], replica: Optional[Sequence[int]] = None) -> "BlockSample":
        dtau = np.asarray([t for t, _ in pairs], dtype=float)
        dx = np.asarray([x for _, x in pairs], dtype=float)
        ids = np.asarray(replica if replica is not None else np.zeros(len(pairs)), dtype=int)
        return cls(dtau, dx, dx[:, 0].copy(), ids)

    def unit_sums(self, per_block: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """(sum dtau, sum dx) per statistical unit: a replica, or a single block."""
        if per_block:
            return self.dtau.copy(), self.dx.copy()
        units, inverse = np.unique(self.replica, return_inverse=True)
        T = np.bincount(inverse, weights=self.dtau, minlength=len(units))
        X = np.column_stack([
            np.bincount(inverse, weights=self.dx[:, i], minlength=len(units)) for i in range(self.d)
        ])
        return T, X

    def counts(self) -> dict:
        return {
            "blocks": len(self),
            "replicas": int(np.unique(self.replica).size),
            "dropped_first": self.dropped_first,
            "dropped_last": self.dropped_last,
            "dropped_window": self.dropped_window,
        }


def _require_blocks(blocks: BlockSample, minimum: int, method: str):
    if len(blocks) == 0:
        raise InsufficientDataError(f"{method}: no usable regeneration blocks")
    if len(blocks) < minimum:
        raise InsufficientDataError(f"{method}: {len(blocks)} blocks, need at least {minimum}")


def _ratio_se(T: np.ndarray, Y: np.ndarray, ratio: np.ndarray) -> np.ndarray:
    """Delta-method SE of sum(Y)/sum(T) from per-unit sums."""
    G = len(T)
    if G < 2:
        return np.full(np.shape(ratio), np.nan)
    residual = Y - np.multiply.outer(T, ratio) if np.ndim(ratio) else Y - T * ratio
    t_bar = T.mean()
    return np.sqrt(np.var(residual, axis=0, ddof=1) / G) / t_bar


def _jackknife(T: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Leave-one-unit-out jackknife SE of the ratio estimator."""
    G = len(T)
    if G < 2:
        return np.full(X.shape[1], np.nan)
    loo = (X.sum(axis=0) - X) / (T.sum() - T)[:, None]
    return np.sqrt((G - 1) / G * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))


def speed_estimate(
    blocks: BlockSample,
    level: float = 0.95,
    per_block: bool = False,
    direction: Optional[Direction] = None,
) -> EstimatorReport:
    _require_blocks(blocks, 2, "speed")
    T, X = blocks.unit_sums(per_block)
    if not per_block and len(T) < 2:
        # a single replica: fall back to block units
        T, X = blocks.unit_sums(True)
        per_block = True
    v = X.sum(axis=0) / T.sum()
    se = _ratio_se(T, X, v)
    z = critical_value(level, len(T))
    jk = _jackknife(T, X)
    diagnostics = {
        **blocks.counts(),
        "units": "block" if per_block else "replica",
        "n_units": len(T),
        "jackknife_se": jk,
        "jackknife_ci": [v - z * jk, v + z * jk],
        "low_power": len(blocks) < 30,
    }
    if direction is not None:
        ell = np.asarray(direction.ell)
        projected = float(v @ ell)
        diagnostics["projection"] = projected
        diagnostics["projection_se"] = float(_ratio_se(T, X @ ell, projected))
    return EstimatorReport("speed_ratio", v, se, (v - z * se, v + z * se), len(blocks), diagnostics)


def covariance_estimate(blocks: BlockSample, v, level: float = 0.95, per_block: bool = False) -> EstimatorReport:
    _require_blocks(blocks, 2, "covariance")
    v = np.asarray(v, dtype=float)
    residual = blocks.dx - blocks.dtau[:, None] * v
    total = blocks.dtau.sum()
    A = residual.T @ residual / total
    A = (A + A.T) / 2
    eigenvalues = np.linalg.eigvalsh(A)

    # entrywise SE: ratio of per-unit outer-product sums over per-unit time
    outer = residual[:, :, None] * residual[:, None, :]
    if not per_block and np.unique(blocks.replica).size < 2:
        per_block = True
    if per_block:
        T, N = blocks.dtau, outer
    else:
        units, inverse = np.unique(blocks.replica, return_inverse=True)
        T = np.bincount(inverse, weights=blocks.dtau, minlength=len(units))
        N = np.zeros((len(units),) + A.shape)
        np.add.at(N, inverse, outer)
    if len(T) >= 2:
        se = np.sqrt(np.var(N - T[:, None, None] * A, axis=0, ddof=1) / len(T)) / T.mean()
    else:
        se = np.full(A.shape, np.nan)
    z = critical_value(level, len(T))
    diagnostics = {
        **blocks.counts(),
        "eigenvalues": eigenvalues,
        "min_eigenvalue": float(eigenvalues[0]),
        "non_degenerate": bool(eigenvalues[0] > 0),
        "speed": v,
    }
    return EstimatorReport("covariance", A, se, (A - z * se, A + z * se), len(blocks), diagnostics)


def direct_speed(
    ensemble: Sequence,
    direction: Direction,
    level: float = 0.95,
    ratio: Optional[EstimatorReport] = None,
) -> EstimatorReport:
    """Mean of X_n . l / n across replicas; `ensemble` holds stats with .position and .n."""
    if len(ensemble) < 2:
        raise InsufficientDataError(f"direct speed needs >= 2 replicas, got {len(ensemble)}")
    ell = np.asarray(direction.ell)
    values = np.array([float(np.dot(s.position, ell)) / s.n for s in ensemble])
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(len(values)))
    z = critical_value(level, len(values))
    diagnostics = {"horizon": ensemble[0].n}
    if ratio is not None:
        if "projection_se" not in ratio.diagnostics:
            raise ContractViolation("direct_speed needs a ratio report built with a direction")
        projected = ratio.diagnostics["projection"]
        projected_se = ratio.diagnostics["projection_se"]
        joint = math.sqrt(se ** 2 + projected_se ** 2)
        diagnostics.update(
            ratio_projection=projected,
            ratio_projection_se=projected_se,
            joint_se=joint,
            agree_3se=bool(abs(mean - projected) <= 3 * joint),
        )
    return EstimatorReport("direct_speed", mean, se, (mean - z * se, mean + z * se), len(values), diagnostics)


# ---- regeneration tails ------------------------------------------------------

def empirical_survival(samples) -> tuple[np.ndarray, np.ndarray]:
    """Distinct values n and S(n) = fraction of samples strictly greater than n."""
    values = np.sort(np.asarray(samples, dtype=float))
    grid = np.unique(values)
    survival = 1.0 - np.searchsorted(values, grid, side="right") / len(values)
    return grid, survival


def survival_at(samples, n: float) -> float:
    values = np.asarray(samples, dtype=float)
    return float(np.mean(values > n))


def _moments(dtau: np.ndarray) -> dict:
    return {
        "mean": float(dtau.mean()),
        "second_moment": float(np.mean(dtau ** 2)),
        "max": float(dtau.max()),
    }


def regen_tail(blocks: BlockSample, min_blocks: int = 100, window=SURVIVAL_WINDOW, level: float = 0.95) -> EstimatorReport:
    """
    Stretched-exponential fit of the block-length survival: slope of
    log(-log S(n)) against log n over the points with S(n) inside `window`.
    """
    _require_blocks(blocks, min_blocks, "regen_tail")
    grid, survival = empirical_survival(blocks.dtau)
    lo, hi = window
    mask = (survival >= lo) & (survival <= hi) & (survival > 0) & (grid > 0)
    x = np.log(grid[mask])
    y = np.log(-np.log(survival[mask]))
    diagnostics = {
        **blocks.counts(),
        "moments": _moments(blocks.dtau),
        "fit_points": int(mask.sum()),
        "window": list(window),
    }
    plots = {
        "survival": (["n", "survival"], [[float(n), float(s)] for n, s in zip(grid, survival)]),
    }
    if mask.sum() < 3 or np.ptp(x) == 0:
        diagnostics["degenerate"] = True
        return EstimatorReport("regen_tail", math.nan, math.nan, (math.nan, math.nan), len(blocks), diagnostics, plots)
    fit = sps.linregress(x, y)
    z = critical_value(level, int(mask.sum()))
    diagnostics.update(
        degenerate=False,
        intercept=float(fit.intercept),
        r_squared=float(fit.rvalue ** 2),
        residuals=(y - (fit.intercept + fit.slope * x)).tolist(),
    )
    slope, se = float(fit.slope), float(fit.stderr)
    return EstimatorReport("regen_tail", slope, se, (slope - z * se, slope + z * se), len(blocks), diagnostics, plots)


def tail_moment_stability(short: BlockSample, long: BlockSample, tolerance: float = 0.10) -> EstimatorReport:
    """Relative change of the first two moments of dtau between a horizon and its double."""
    _require_blocks(short, 2, "tail_moment_stability")
    _require_blocks(long, 2, "tail_moment_stability")
    a, b = _moments(short.dtau), _moments(long.dtau)
    change = {
        key: abs(b[key] - a[key]) / a[key] for key in ("mean", "second_moment")
    }
    worst = max(change.values())
    diagnostics = {
        "short": a,
        "long": b,
        "relative_change": change,
        "tolerance": tolerance,
        "passed": worst < tolerance,
    }
    return EstimatorReport("tail_moment_stability", worst, math.nan, (worst, worst), len(short) + len(long), diagnostics)


# ---- range, local times ------------------------------------------------------

def range_exponent(
    ranges_by_horizon: Mapping[int, Sequence[int]],
    alpha0: float = 0.05,
    level: float = 0.95,
    min_replicas: int = 30,
) -> EstimatorReport:
    """Slope of mean log|R_n| against log n over a horizon grid."""
    horizons = sorted(ranges_by_horizon)
    if len(horizons) < 3:
        raise InsufficientDataError(f"range exponent needs >= 3 horizons, got {len(horizons)}")
    x, y_bar, y_var, below, rows = [], [], [], {}, []
    for n in horizons:
        ranges = np.asarray(ranges_by_horizon[n], dtype=float)
        if len(ranges) < min_replicas:
            raise InsufficientDataError(f"range exponent needs >= {min_replicas} replicas at n={n}, got {len(ranges)}")
        logs = np.log(ranges)
        x.append(math.log(n))
        y_bar.append(float(logs.mean()))
        y_var.append(float(logs.var(ddof=1) / len(logs)))
        threshold = n ** (0.5 + alpha0)
        below[str(n)] = float(np.mean(ranges < threshold))
        rows.append([n, math.log(n), float(logs.mean()), math.sqrt(y_var[-1])])
    x, y_bar, y_var = np.array(x), np.array(y_bar), np.array(y_var)
    fit = sps.linregress(x, y_bar)
    sxx = np.sum((x - x.mean()) ** 2)
    se = float(math.sqrt(np.sum((x - x.mean()) ** 2 * y_var)) / sxx)
    z = float(sps.norm.ppf(0.5 + level / 2))
    slope = float(fit.slope)
    diagnostics = {
        "alpha0": alpha0,
        "fraction_below": below,
        "intercept": float(fit.intercept),
        "r_squared": float(fit.rvalue ** 2),
        "replicas": {str(n): len(ranges_by_horizon[n]) for n in horizons},
    }
    plots = {"range_loglog": (["n", "log_n", "mean_log_range", "se"], rows)}
    return EstimatorReport("range_exponent", slope, se, (slope - z * se, slope + z * se),
                           sum(len(ranges_by_horizon[n]) for n in horizons), diagnostics, plots)


def local_time_check(ensemble: Sequence, delta: float, level: float = 0.95) -> EstimatorReport:
    """Fraction of replicas with max_m L_n(m) >= n^(1/2 + 2 delta)."""
    if not ensemble:
        raise InsufficientDataError("local time check: no replicas")
    n = ensemble[0].n
    threshold = n ** (0.5 + 2 * delta)
    maxima = [s.max_local_time for s in ensemble]
    hits = sum(m >= threshold for m in maxima)
    return _fraction_report("local_time", hits, len(ensemble), level, {
        "horizon": n,
        "delta": delta,
        "threshold": threshold,
        "max_local_time": max(maxima),
        "passed": hits == 0,
    })


def site_local_time_check(ensemble: Sequence, b: float, delta: float, level: float = 0.95) -> EstimatorReport:
    """Fraction of replicas whose busiest site is visited more than n^(b/2 + delta) times."""
    if not ensemble:
        raise InsufficientDataError("site local time check: no replicas")
    n = ensemble[0].n
    threshold = n ** (b / 2 + delta)
    maxima = [s.max_visit_count for s in ensemble]
    hits = sum(m > threshold for m in maxima)
    return _fraction_report("site_local_time", hits, len(ensemble), level, {
        "horizon": n,
        "b": b,
        "delta": delta,
        "threshold": threshold,
        "max_visit_count": max(maxima),
        "passed": hits == 0,
    })


def advance_check(ensemble: Sequence, direction: Direction, lam: float, alpha0: float = 0.05, level: float = 0.95) -> EstimatorReport:
    """Fraction of replicas with X_n . l < (lambda/3) n^(1/2 + alpha0)."""
    if not ensemble:
        raise InsufficientDataError("advance check: no replicas")
    n = ensemble[0].n
    threshold = lam / 3 * n ** (0.5 + alpha0)
    ell = np.asarray(direction.ell)
    hits = sum(float(np.dot(s.position, ell)) < threshold for s in ensemble)
    return _fraction_report("advance", hits, len(ensemble), level, {
        "horizon": n,
        "lambda": lam,
        "alpha0": alpha0,
        "threshold": threshold,
        "passed": hits == 0,
    })


# ---- escape, hitting ---------------------------------------------------------

def escape_report(
    backtrack_times: Sequence[Optional[int]],
    horizons: Sequence[int],
    level: float = 0.95,
    c_plus: Optional[bool] = None,
) -> EstimatorReport:
    """psi(h) = fraction of walks with X_n . l > 0 for all 1 <= n <= h, for every h at once."""
    total = len(backtrack_times)
    if total == 0:
        raise InsufficientDataError("escape probability: no replicas")
    z = float(sps.norm.ppf(0.5 + level / 2))
    per_horizon = {}
    for h in sorted(horizons):
        escaped = sum(t is None or t > h for t in backtrack_times)
        lo, hi = wilson_interval(escaped, total, z)
        per_horizon[str(h)] = {"psi": escaped / total, "ci": [lo, hi], "escaped": escaped}
    cis = [entry["ci"] for entry in per_horizon.values()]
    overlapping = max(lo for lo, _ in cis) <= min(hi for _, hi in cis)
    last = per_horizon[str(max(horizons))]
    psi = last["psi"]
    diagnostics = {
        "per_horizon": per_horizon,
        "overlapping": overlapping,
        "excludes_zero": all(entry["ci"][0] > 0 for entry in per_horizon.values()),
        "c_plus": c_plus,
    }
    return EstimatorReport("escape", psi, math.sqrt(psi * (1 - psi) / total), tuple(last["ci"]), total, diagnostics)


def escape_probability(
    kernel: KernelSpec,
    direction: Direction,
    horizons: Sequence[int],
    replicas: int,
    master_seed: int = 0,
    threads: int = 1,
    level: float = 0.95,
) -> EstimatorReport:
    """Escape probability under a kernel that satisfies C+ (lambda > 0)."""
    certificate = validate_condition_C_plus(kernel, direction)
    if not certificate.holds_c_plus:
        raise ConditionViolation("C+", f"escape probability needs lambda > 0, got {certificate.lam}", kernel.name)
    times = first_backtrack_times(kernel, direction, max(horizons), replicas, master_seed, threads)
    return escape_report(times, horizons, level, True)


class AvoidHoles:
    """U = the ball ||x|| <= radius minus a fixed finite set of holes."""

    def __init__(self, holes: Iterable[tuple[int, ...]], radius: float = math.inf):
        self.holes = frozenset(tuple(h) for h in holes)
        self.radius2 = radius * radius

    def __call__(self, site) -> bool:
        site = tuple(site)
        return site not in self.holes and sum(c * c for c in site) <= self.radius2


def nearest_sites(d: int, count: int) -> list[tuple[int, ...]]:
    """The `count` lattice points closest to the origin, ties broken lexicographically."""
    if count <= 0:
        return []
    radius = 0
    while (2 * radius + 1) ** d < count * 4 + 1:
        radius += 1
    axes = [np.arange(-radius, radius + 1)] * d
    points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    norms = np.einsum("ij,ij->i", points, points)
    order = np.lexsort(tuple(points[:, i] for i in reversed(range(d))) + (norms,))
    return [tuple(int(c) for c in points[i]) for i in order[:count]]


def hit_set_check(
    kernel: KernelSpec,
    direction: Direction,
    m: int,
    b: float,
    delta: float,
    replicas: int,
    master_seed: int = 0,
    threads: int = 1,
    level: float = 0.95,
) -> EstimatorReport:
    """
    For a martingale walk and U missing m^(1 - b/2 - 2 delta) sites of the
    ball B(0, sqrt m) (the ones nearest the start), the fraction of walks
    with tau_U >= m^(1 - delta).
    """
    hole_count = int(math.floor(m ** (1 - b / 2 - 2 * delta)))
    target = AvoidHoles(nearest_sites(kernel.d, hole_count), math.sqrt(m))
    limit = m ** (1 - delta)
    horizon = max(1, math.ceil(limit))
    results = entrance_times(kernel, direction, target, horizon, replicas, master_seed, threads)
    slow = sum(r.censored or r.time >= limit for r in results)
    return _fraction_report("hit_set", slow, replicas, level, {
        "m": m,
        "b": b,
        "delta": delta,
        "holes": hole_count,
        "radius": math.sqrt(m),
        "time_limit": limit,
        "censored": sum(r.censored for r in results),
        "passed": slow == 0,
    })


# ---- CLT -------------------------------------------------------------------

def clt_test(
    blocks: BlockSample,
    v,
    A,
    batch_size: int = 32,
    min_blocks: int = 200,
    alpha: float = 0.01,
) -> EstimatorReport:
    """
    Batch sums of `batch_size` consecutive blocks, standardized per component
    as (S_X - S_tau v) / sqrt(S_tau A_ii), tested against N(0, 1) by KS.
    """
    _require_blocks(blocks, min_blocks, "clt_test")
    v = np.asarray(v, dtype=float)
    A = np.asarray(A, dtype=float)
    batches = len(blocks) // batch_size
    if batches < 1:
        raise InsufficientDataError(f"clt_test: {len(blocks)} blocks make no batch of {batch_size}")
    used = batches * batch_size
    S_tau = blocks.dtau[:used].reshape(batches, batch_size).sum(axis=1)
    S_X = blocks.dx[:used].reshape(batches, batch_size, blocks.d).sum(axis=1)
    centred = (S_X - S_tau[:, None] * v) / np.sqrt(S_tau)[:, None]

    statistics, pvalues, degenerate, rows = [], [], [], []
    for i in range(blocks.d):
        variance = A[i, i]
        flat = variance <= DEGENERATE_VAR
        z = centred[:, i] if flat else centred[:, i] / math.sqrt(variance)
        result = sps.kstest(z, "norm", method="asymp")
        statistics.append(float(result.statistic))
        pvalues.append(float(result.pvalue) if batches >= KS_MIN_BATCHES and not flat else None)
        degenerate.append(bool(flat))
        sorted_z = np.sort(z)
        ecdf = np.arange(1, batches + 1) / batches
        rows.extend([i + 1, float(s), float(e), float(sps.norm.cdf(s))] for s, e in zip(sorted_z, ecdf))
    rejects = [p is not None and p < alpha for p in pvalues]
    diagnostics = {
        **blocks.counts(),
        "batch_size": batch_size,
        "batches": batches,
        "pvalues": pvalues,
        "degenerate": degenerate,
        "alpha": alpha,
        "rejects": rejects,
        "passed": not any(rejects) and all(p is not None for p in pvalues),
    }
    plots = {"ks_curve": (["component", "z", "ecdf", "normal_cdf"], rows)}
    stat = np.array(statistics)
    return EstimatorReport("clt_ks", stat, np.full(blocks.d, math.nan), (stat, stat), batches, diagnostics, plots)


def lag_autocorrelation(blocks: BlockSample, lag: int = 1) -> EstimatorReport:
    """Pooled lag autocorrelation of dtau within replicas, against the 4/sqrt(N) band."""
    series = [blocks.dtau[blocks.replica == r] for r in np.unique(blocks.replica)]
    pooled = blocks.dtau
    if pooled.size < lag + 2:
        raise InsufficientDataError(f"lag autocorrelation: {pooled.size} blocks")
    mean = pooled.mean()
    variance = np.sum((pooled - mean) ** 2)
    numerator, pairs = 0.0, 0
    for s in series:
        if s.size > lag:
            numerator += float(np.sum((s[:-lag] - mean) * (s[lag:] - mean)))
            pairs += s.size - lag
    if pairs == 0 or variance == 0:
        raise InsufficientDataError("lag autocorrelation: no within-replica pairs")
    r = numerator / variance * pooled.size / pairs
    band = 4 / math.sqrt(pairs)
    return EstimatorReport("lag_autocorrelation", r, 1 / math.sqrt(pairs), (-band, band), pairs, {
        "lag": lag,
        "band": band,
        "passed": abs(r) <= band,
    })


def regeneration_rate(
    taus_by_horizon: Mapping[int, Sequence[Sequence[int]]],
    tolerance: float = 0.15,
) -> EstimatorReport:
    """
    tau_m / m at the last confirmed m, averaged over replicas, per horizon;
    stable when it moves by less than `tolerance` between consecutive horizons.
    """
    horizons = sorted(taus_by_horizon)
    per_horizon, sup_ratio = {}, 0.0
    for n in horizons:
        ratios = []
        for taus in taus_by_horizon[n]:
            if taus:
                ratios.append(taus[-1] / len(taus))
                sup_ratio = max(sup_ratio, max(t / (k + 1) for k, t in enumerate(taus)))
        if not ratios:
            raise InsufficientDataError(f"regeneration rate: no regenerations at n={n}")
        per_horizon[str(n)] = {"mean": float(np.mean(ratios)), "replicas": len(ratios)}
    means = [per_horizon[str(n)]["mean"] for n in horizons]
    changes = [abs(b - a) / a for a, b in zip(means, means[1:])]
    diagnostics = {
        "per_horizon": per_horizon,
        "relative_change": changes,
        "sup_ratio": sup_ratio,
        "tolerance": tolerance,
        "passed": bool(np.isfinite(sup_ratio)) and all(c < tolerance for c in changes),
    }
    last = means[-1]
    return EstimatorReport("regeneration_rate", last, math.nan, (last, last), len(horizons), diagnostics)


# ---- Azuma -----------------------------------------------------------------

def azuma_bound(n: int, a: float, c: float = 1.0, one_sided: bool = False) -> float:
    """2 exp(-a^2 / (2 n c^2)) for P[|Z_n - Z_0| >= a]; one-sided: without the 2."""
    if n <= 0:
        raise ContractViolation(f"azuma bound needs n >= 1, got {n}")
    value = math.exp(-a * a / (2.0 * n * c * c))
    return value if one_sided else 2.0 * value


def azuma_check(
    displacements,
    n: int,
    a_grid: Sequence[float],
    c: float = 1.0,
    supermartingale: bool = False,
) -> EstimatorReport:
    """Empirical P[|Z_n - Z_0| >= a] against the bound plus 3 binomial SEs, per a."""
    z = np.asarray(displacements, dtype=float)
    total = len(z)
    if total == 0:
        raise InsufficientDataError("azuma check: no replicas")
    rows, frequencies, ok = [], [], True
    for a in a_grid:
        freq = float(np.mean(np.abs(z) >= a))
        bound = azuma_bound(n, a, c)
        slack = 3 * math.sqrt(freq * (1 - freq) / total)
        holds = freq <= bound + slack
        row = {"a": a, "frequency": freq, "bound": bound, "binomial_se": slack / 3, "holds": holds}
        if supermartingale:
            upper = float(np.mean(z >= a))
            one_sided = azuma_bound(n, a, c, one_sided=True)
            row.update(upper_frequency=upper, one_sided_bound=one_sided,
                       one_sided_holds=upper <= one_sided + 3 * math.sqrt(upper * (1 - upper) / total))
            holds = holds and row["one_sided_holds"]
        ok = ok and holds
        rows.append(row)
        frequencies.append(freq)
    diagnostics = {"n": n, "c": c, "grid": rows, "passed": ok}
    freq = np.array(frequencies)
    return EstimatorReport("azuma", freq, np.sqrt(freq * (1 - freq) / total), (freq, freq), total, diagnostics)


# ---- sub-martingale margin -------------------------------------------------

def _martingale_law(kernel) -> StepDistribution:
    if isinstance(kernel, StepDistribution):
        law = kernel
    else:
        law = context_free_law(kernel)
    if np.any(np.abs(drift(law)) > DRIFT_TOL):
        raise ContractViolation(f"sub-martingale margin needs a zero-drift law, drift {drift(law).tolist()}")
    return law


def submartingale_increment(law: StepDistribution, y, b: float) -> float:
    """E ||y + Z||^b - ||y||^b for one lattice point y."""
    y = np.asarray(y, dtype=float)
    terms = [prob * float(np.linalg.norm(y + np.asarray(dz, dtype=float))) ** b for dz, prob in law.outcomes]
    return math.fsum(terms) - float(np.linalg.norm(y)) ** b


def _lattice_shell(d: int, radius: float):
    """Lattice points with 1 <= ||y|| <= radius, one slab of fixed first coordinate at a time."""
    R = int(math.floor(radius))
    rest = [np.arange(-R, R + 1)] * (d - 1)
    if d > 1:
        tail = np.stack(np.meshgrid(*rest, indexing="ij"), axis=-1).reshape(-1, d - 1)
    else:
        tail = np.zeros((1, 0), dtype=int)
    for first in range(-R, R + 1):
        points = np.column_stack([np.full(len(tail), first), tail]).astype(float)
        norms = np.sqrt(np.einsum("ij,ij->i", points, points))
        keep = (norms >= 1) & (norms <= radius)
        if keep.any():
            yield points[keep], norms[keep]


def submartingale_margin(kernel, b: float, radius_max: float = 200) -> EstimatorReport:
    """
    Exact sums E||y + Z||^b - ||y||^b over every lattice point 1 <= ||y|| <= radius_max.
    gamma2 is the largest norm with a negative margin (1 when none fails); the
    pair (b, gamma2) is certified when the failures stay inside radius_max / 2.
    """
    law = _martingale_law(kernel)
    steps = np.array(law.displacements, dtype=float)
    probs = np.array(law.probabilities)
    worst, worst_beyond, gamma2, points = math.inf, math.inf, 1.0, 0
    worst_site = None
    failing = []
    for y, norms in _lattice_shell(law.d, radius_max):
        shifted = np.linalg.norm(y[:, None, :] + steps[None, :, :], axis=2) ** b
        margin = shifted @ probs - norms ** b
        points += len(y)
        j = int(np.argmin(margin))
        if margin[j] < worst:
            worst, worst_site = float(margin[j]), tuple(int(c) for c in y[j])
        bad = margin < 0
        if bad.any():
            failing.append(float(norms[bad].max()))
    if failing:
        gamma2 = max(failing)
    for y, norms in _lattice_shell(law.d, radius_max):
        beyond = norms > gamma2
        if beyond.any():
            shifted = np.linalg.norm(y[beyond][:, None, :] + steps[None, :, :], axis=2) ** b
            worst_beyond = min(worst_beyond, float((shifted @ probs - norms[beyond] ** b).min()))
    in_range = 0 < b < 1
    certified = in_range and gamma2 < radius_max / 2
    diagnostics = {
        "b": b,
        "gamma2": gamma2,
        "radius_max": radius_max,
        "points": points,
        "min_margin_site": worst_site,
        "min_margin_beyond_gamma2": worst_beyond if math.isfinite(worst_beyond) else None,
        "b_in_range": in_range,
        "certified": certified,
        "passed": certified,
    }
    return EstimatorReport("submartingale_margin", worst, math.nan, (worst, worst), points, diagnostics)


def submartingale_search(kernel, b_grid: Sequence[float], radius_max: float = 200) -> EstimatorReport:
    """Largest b on the grid with a certified gamma2."""
    results = [submartingale_margin(kernel, b, radius_max) for b in sorted(b_grid)]
    certified = [r for r in results if r.diagnostics["certified"]]
    best = certified[-1] if certified else None
    diagnostics = {
        "grid": [{"b": r.diagnostics["b"], "gamma2": r.diagnostics["gamma2"],
                  "min_margin": r.estimate, "certified": r.diagnostics["certified"]} for r in results],
        "b": best.diagnostics["b"] if best else None,
        "gamma2": best.diagnostics["gamma2"] if best else None,
        "certified": best is not None,
        "passed": best is not None,
    }
    b = diagnostics["b"] if best else math.nan
    return EstimatorReport("submartingale_search", b, math.nan, (b, b), len(results), diagnostics)
