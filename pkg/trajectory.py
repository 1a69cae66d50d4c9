"""
Streaming simulation of a walk under any KernelSpec.

Per step the engine does O(1) amortized work: one uniform, one inverse-CDF
lookup, one hash-map update for visit counts and one for the local-time
histogram. Observers (the renewal detector) are notified after every step.
"""
import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from config.types import PathStorage
from model import (
    Direction,
    KernelSpec,
    StepDistribution,
    WalkContext,
    step_distribution,
    validate_condition_B,
    NORM_TOL,
)
from utils.errors import ContractViolation, MissingContextError
from utils.rng import RngStream

FIELD_BITS = 21
FIELD_OFFSET = 1 << (FIELD_BITS - 1)


class StepObserver(Protocol):
    def observe(self, step_index: int, proj: float, position: list[int]) -> object:
        """Called after step `step_index`; `position` is live, copy it to keep it."""


class SiteCodec:
    """
    Hash keys for lattice sites. For d <= 3 and runs that stay inside
    |x_i| < 2^20 a site packs into one int (21 bits per coordinate) and a step
    updates the key by adding a precomputed delta; otherwise keys are tuples.
    """

    def __init__(self, d: int, reach: float):
        self.d = d
        self.packed = d <= 3 and reach < FIELD_OFFSET

    def key(self, site) -> object:
        if not self.packed:
            return tuple(site)
        key = 0
        for i, c in enumerate(site):
            key |= (c + FIELD_OFFSET) << (FIELD_BITS * i)
        return key

    def delta(self, dz) -> int:
        return sum(c << (FIELD_BITS * i) for i, c in enumerate(dz))

    def site(self, key) -> tuple[int, ...]:
        if not self.packed:
            return key
        mask = (1 << FIELD_BITS) - 1
        return tuple(((key >> (FIELD_BITS * i)) & mask) - FIELD_OFFSET for i in range(self.d))


class _CompiledLaw:
    __slots__ = ("law", "cumulative", "steps", "deltas", "last")

    def __init__(self, law: StepDistribution, codec: SiteCodec, max_jump: float):
        if law.max_norm > max_jump + NORM_TOL:
            raise ContractViolation(f"jump of norm {law.max_norm} exceeds K={max_jump}")
        self.law = law
        self.cumulative = list(law.cumulative)
        self.steps = law.displacements
        self.deltas = [codec.delta(dz) for dz in self.steps] if codec.packed else None
        self.last = len(self.steps) - 1


@dataclass
class TrajectoryStats:
    d: int
    codec: SiteCodec = field(repr=False)
    n: int = 0
    position: tuple[int, ...] = ()
    visit_counts: dict = field(default_factory=dict, repr=False)
    local_time_hist: dict[int, int] = field(default_factory=dict, repr=False)
    proj: float = 0.0
    min_proj: float = 0.0
    max_proj: float = 0.0
    # first n >= 1 with X_n . l <= 0, None if the walk never came back
    first_backtrack_time: Optional[int] = None
    stopped: bool = False
    path: Optional[Sequence[tuple[int, ...]]] = field(default=None, repr=False)
    path_proj: Optional[Sequence[float]] = field(default=None, repr=False)
    path_first_visit: Optional[Sequence[bool]] = field(default=None, repr=False)

    @property
    def range_size(self) -> int:
        return len(self.visit_counts)

    def visited(self) -> set[tuple[int, ...]]:
        return {self.codec.site(key) for key in self.visit_counts}

    def visit_count(self, site) -> int:
        return self.visit_counts.get(self.codec.key(site), 0)

    @property
    def max_visit_count(self) -> int:
        return max(self.visit_counts.values())

    @property
    def max_local_time(self) -> int:
        return max(self.local_time_hist.values())

    def check_invariants(self):
        assert sum(self.local_time_hist.values()) == self.n + 1
        assert self.range_size <= self.n + 1
        assert sum(self.visit_counts.values()) == self.n + 1

    def summary(self) -> "StatsSummary":
        return StatsSummary(
            n=self.n,
            range=self.range_size,
            position=list(self.position),
            proj=self.proj,
            min_proj=self.min_proj,
            max_proj=self.max_proj,
            local_time=dict(sorted(self.local_time_hist.items())),
            max_visit_count=self.max_visit_count,
            first_backtrack_time=self.first_backtrack_time,
        )


@dataclass
class StatsSummary:
    """The per-replica record written to stats JSON and read back by `analyze`."""

    n: int
    range: int
    position: list[int]
    proj: float
    min_proj: float
    max_proj: float
    local_time: dict[int, int]
    max_visit_count: int
    first_backtrack_time: Optional[int] = None
    replica: int = 0

    @property
    def range_size(self) -> int:
        return self.range

    @property
    def max_local_time(self) -> int:
        return max(self.local_time.values())

    def to_record(self) -> dict:
        return {
            "replica": self.replica,
            "n": self.n,
            "range": self.range,
            "position": self.position,
            "proj": self.proj,
            "min_proj": self.min_proj,
            "max_proj": self.max_proj,
            "max_visit_count": self.max_visit_count,
            "first_backtrack_time": self.first_backtrack_time,
            "local_time": {str(m): count for m, count in self.local_time.items()},
        }

    @classmethod
    def from_record(cls, record: dict) -> "StatsSummary":
        return cls(
            n=record["n"],
            range=record["range"],
            position=list(record["position"]),
            proj=record["proj"],
            min_proj=record["min_proj"],
            max_proj=record["max_proj"],
            local_time={int(m): count for m, count in record["local_time"].items()},
            max_visit_count=record["max_visit_count"],
            first_backtrack_time=record.get("first_backtrack_time"),
            replica=record.get("replica", 0),
        )


def simulate(
    kernel: KernelSpec,
    direction: Direction,
    horizon: int,
    rng: RngStream,
    observers: Sequence[StepObserver] = (),
    storage: PathStorage = PathStorage.NONE,
    ring_size: int = 4096,
    max_jump: Optional[float] = None,
) -> TrajectoryStats:
    """Run exactly `horizon` steps from X_0 = 0."""
    if horizon < 1:
        raise ContractViolation(f"horizon must be >= 1, got {horizon}")
    return _run_walk(kernel, direction, horizon, rng, observers, storage, ring_size, max_jump, None)


def _run_walk(
    kernel: KernelSpec,
    direction: Direction,
    horizon: int,
    rng: RngStream,
    observers: Sequence[StepObserver],
    storage: PathStorage,
    ring_size: int,
    max_jump: Optional[float],
    stop_when: Optional[Callable[[list[int], float], bool]],
) -> TrajectoryStats:
    d = kernel.d
    if direction.d != d:
        raise ContractViolation(f"direction has d={direction.d}, kernel has d={d}")
    K = max_jump if max_jump is not None else validate_condition_B(kernel)
    codec = SiteCodec(d, K * horizon)
    packed = codec.packed

    position = [0] * d
    key = codec.key(position)
    visit_counts = {key: 1}
    axis = direction.axis_index
    ell = direction.ell
    proj = direction.project(position)
    floor = math.floor
    hist = {floor(proj): 1}
    min_proj = max_proj = proj
    first_backtrack = None

    cookie_set = kernel.cookie_set
    in_cookie_const = True if cookie_set.is_full else (False if cookie_set.is_empty else None)
    context_laws = kernel.context_laws()
    fast = None
    if context_laws is not None:
        fast = {ctx_key: _CompiledLaw(law, codec, K) for ctx_key, law in context_laws.items()}
    compiled_cache = {}

    path = path_proj = path_first = None
    if storage != PathStorage.NONE:
        maxlen = ring_size if storage == PathStorage.RING else None
        path = deque([tuple(position)], maxlen=maxlen)
        path_proj = deque([proj], maxlen=maxlen)
        path_first = deque([True], maxlen=maxlen)

    n = 0
    stopped = False
    for n in range(1, horizon + 1):
        prior = visit_counts[key] - 1
        first_visit = prior == 0
        in_cookie = in_cookie_const if in_cookie_const is not None else tuple(position) in cookie_set

        if fast is not None:
            compiled = fast.get((first_visit, in_cookie))
            if compiled is None:
                raise MissingContextError(WalkContext(tuple(position), first_visit, prior, in_cookie), n)
        else:
            ctx = WalkContext(tuple(position), first_visit, prior, in_cookie)
            try:
                law = step_distribution(kernel, ctx)
            except MissingContextError:
                raise MissingContextError(ctx, n)
            compiled = compiled_cache.get(id(law))
            if compiled is None or compiled.law is not law:
                compiled = _CompiledLaw(law, codec, K)
                if len(compiled_cache) < 64:
                    compiled_cache[id(law)] = compiled

        u = rng.uniform()
        i = bisect_right(compiled.cumulative, u)
        if i > compiled.last:
            i = compiled.last
        dz = compiled.steps[i]
        for j in range(d):
            position[j] += dz[j]
        if packed:
            key += compiled.deltas[i]
        else:
            key = tuple(position)
        seen = visit_counts.get(key, 0)
        visit_counts[key] = seen + 1

        if axis is not None:
            proj = float(position[axis])
        else:
            proj = sum(c * w for c, w in zip(position, ell))
        m = floor(proj)
        hist[m] = hist.get(m, 0) + 1
        if proj < min_proj:
            min_proj = proj
        elif proj > max_proj:
            max_proj = proj
        if first_backtrack is None and proj <= 0:
            first_backtrack = n

        if path is not None:
            path.append(tuple(position))
            path_proj.append(proj)
            path_first.append(seen == 0)
        for observer in observers:
            observer.observe(n, proj, position)
        if stop_when is not None and stop_when(position, proj):
            stopped = True
            break

    stats = TrajectoryStats(
        d=d,
        codec=codec,
        n=n,
        position=tuple(position),
        visit_counts=visit_counts,
        local_time_hist=hist,
        proj=proj,
        min_proj=min_proj,
        max_proj=max_proj,
        first_backtrack_time=first_backtrack,
        stopped=stopped,
        path=list(path) if path is not None else None,
        path_proj=list(path_proj) if path_proj is not None else None,
        path_first_visit=list(path_first) if path_first is not None else None,
    )
    if __debug__:
        stats.check_invariants()
    return stats


def local_time(stats, m: int) -> int:
    hist = stats.local_time_hist if isinstance(stats, TrajectoryStats) else stats.local_time
    return hist.get(m, 0)


def range_size(stats) -> int:
    return stats.range_size


@dataclass(frozen=True)
class EntranceTime:
    """tau_U, or time=None with censored=True when U was not hit by the horizon."""

    time: Optional[int]
    censored: bool
    horizon: int

    @property
    def hit(self) -> bool:
        return self.time is not None


def entrance_time(
    kernel: KernelSpec,
    direction: Direction,
    target: Callable[[tuple[int, ...]], bool],
    horizon: int,
    rng: RngStream,
    max_jump: Optional[float] = None,
) -> EntranceTime:
    origin = tuple([0] * kernel.d)
    if target(origin):
        return EntranceTime(0, False, horizon)
    stats = _run_walk(
        kernel, direction, horizon, rng, (), PathStorage.NONE, 0, max_jump,
        lambda position, proj: target(tuple(position)),
    )
    if stats.stopped:
        return EntranceTime(stats.n, False, horizon)
    return EntranceTime(None, True, horizon)


def run_until_backtrack(
    kernel: KernelSpec, direction: Direction, horizon: int, rng: RngStream, max_jump: Optional[float] = None
) -> Optional[int]:
    """First n in 1..horizon with X_n . l <= 0, or None if the walk stays ahead."""
    stats = _run_walk(
        kernel, direction, horizon, rng, (), PathStorage.NONE, 0, max_jump,
        lambda position, proj: proj <= 0,
    )
    return stats.first_backtrack_time


def context_free_law(kernel: KernelSpec) -> StepDistribution:
    laws = kernel.context_laws()
    if laws is None:
        raise ContractViolation(f"kernel {kernel.name!r} depends on the site")
    distinct = []
    for law in laws.values():
        if law not in distinct:
            distinct.append(law)
    if len(distinct) != 1:
        raise ContractViolation(f"kernel {kernel.name!r} depends on the visit history")
    return distinct[0]


def walk_positions(kernel: KernelSpec, horizon: int, rng: RngStream) -> np.ndarray:
    """
    Positions X_0..X_horizon of a walk whose law ignores its history, drawn in
    one vectorized pass from the same uniforms `simulate` would consume.
    """
    law = context_free_law(kernel)
    u = rng.uniforms(horizon)
    index = np.searchsorted(np.array(law.cumulative), u, side="right")
    np.minimum(index, len(law.outcomes) - 1, out=index)
    steps = np.array(law.displacements, dtype=np.int64)[index]
    positions = np.zeros((horizon + 1, kernel.d), dtype=np.int64)
    np.cumsum(steps, axis=0, out=positions[1:])
    return positions


def trajectory_rows(stats: TrajectoryStats, direction: Direction) -> list[list]:
    """Rows of the trajectory CSV; the first_visit column marks steps landing on a new site."""
    if stats.path is None:
        raise ContractViolation("trajectory was simulated without path storage")
    first_step = stats.n - len(stats.path) + 1
    rows = []
    for offset, (site, proj, first) in enumerate(zip(stats.path, stats.path_proj, stats.path_first_visit)):
        rows.append([first_step + offset, *site, proj, int(first)])
    return rows


def trajectory_header(d: int) -> list[str]:
    return ["step", *[f"x{i + 1}" for i in range(d)], "proj", "first_visit"]
