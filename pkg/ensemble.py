"""
Replica fan-out. Each replica owns its RngStream (keyed on master seed and
replica index) and, for ERWRE, its own environment; workers share only the
immutable kernel and direction. joblib returns results in submission order,
so merged outputs never depend on the worker count.
"""
import platform
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from base import TOOL_VERSION
from config.types import PathStorage
from model import Direction, KernelSpec, validate_condition_B
from renewal import RegenerationSequence, RenewalDetector, finalize
from trajectory import (
    EntranceTime,
    StatsSummary,
    entrance_time,
    run_until_backtrack,
    simulate,
    trajectory_rows,
    walk_positions,
)
from utils.rng import RngStream

# replicas per joblib task for the cheap per-replica jobs
BATCH = 512


@dataclass
class ReplicaResult:
    replica: int
    summary: StatsSummary
    sequence: RegenerationSequence
    rng_state: dict
    draws: int
    trajectory: Optional[list[list]] = field(default=None, repr=False)
    projections: Optional[list[float]] = field(default=None, repr=False)


def run_replica(
    kernel: KernelSpec,
    direction: Direction,
    horizon: int,
    replica: int,
    master_seed: int,
    confirm_margin: float = 0.0,
    storage: PathStorage = PathStorage.NONE,
    ring_size: int = 4096,
    max_jump: Optional[float] = None,
) -> ReplicaResult:
    rng = RngStream(master_seed, replica)
    start = rng.state()
    detector = RenewalDetector(direction.project([0] * kernel.d))
    stats = simulate(kernel.for_replica(replica), direction, horizon, rng, [detector], storage, ring_size, max_jump)
    sequence = finalize(detector.state, horizon, confirm_margin)
    sequence.replica = replica
    summary = stats.summary()
    summary.replica = replica
    result = ReplicaResult(replica, summary, sequence, start, rng.draws)
    if storage != PathStorage.NONE:
        result.trajectory = trajectory_rows(stats, direction)
        result.projections = list(stats.path_proj)
    return result


def _parallel(threads: int) -> Parallel:
    if threads <= 1:
        return Parallel(n_jobs=1, backend="sequential")
    return Parallel(n_jobs=threads, backend="loky")


def _batches(replicas: int, start: int = 0, size: int = BATCH):
    for lo in range(start, start + replicas, size):
        yield range(lo, min(lo + size, start + replicas))


def run_ensemble(
    kernel: KernelSpec,
    direction: Direction,
    horizon: int,
    replicas: int,
    master_seed: int,
    threads: int = 1,
    confirm_margin: float = 0.0,
    storage: PathStorage = PathStorage.NONE,
    ring_size: int = 4096,
) -> list[ReplicaResult]:
    K = validate_condition_B(kernel)
    return _parallel(threads)(
        delayed(run_replica)(kernel, direction, horizon, i, master_seed, confirm_margin, storage, ring_size, K)
        for i in range(replicas)
    )


def _backtrack_batch(kernel, direction, horizon, indices, master_seed, K):
    return [
        run_until_backtrack(kernel.for_replica(i), direction, horizon, RngStream(master_seed, i), K)
        for i in indices
    ]


def first_backtrack_times(
    kernel: KernelSpec,
    direction: Direction,
    horizon: int,
    replicas: int,
    master_seed: int,
    threads: int = 1,
) -> list[Optional[int]]:
    """Per replica, the first n <= horizon with X_n . l <= 0 (None when it never happens)."""
    K = validate_condition_B(kernel)
    chunks = _parallel(threads)(
        delayed(_backtrack_batch)(kernel, direction, horizon, indices, master_seed, K)
        for indices in _batches(replicas)
    )
    return [t for chunk in chunks for t in chunk]


def _entrance_batch(kernel, direction, target, horizon, indices, master_seed, K):
    return [
        entrance_time(kernel.for_replica(i), direction, target, horizon, RngStream(master_seed, i), K)
        for i in indices
    ]


def entrance_times(
    kernel: KernelSpec,
    direction: Direction,
    target: Callable[[tuple], bool],
    horizon: int,
    replicas: int,
    master_seed: int,
    threads: int = 1,
) -> list[EntranceTime]:
    """`target` must be picklable when threads > 1."""
    K = validate_condition_B(kernel)
    chunks = _parallel(threads)(
        delayed(_entrance_batch)(kernel, direction, target, horizon, indices, master_seed, K)
        for indices in _batches(replicas)
    )
    return [t for chunk in chunks for t in chunk]


def _displacement_batch(kernel, ell, horizon, indices, master_seed):
    out = np.empty(len(indices))
    for j, i in enumerate(indices):
        positions = walk_positions(kernel, horizon, RngStream(master_seed, i))
        out[j] = positions[-1] @ ell
    return out


def projected_displacements(
    kernel: KernelSpec,
    direction: Direction,
    horizon: int,
    replicas: int,
    master_seed: int,
    threads: int = 1,
) -> np.ndarray:
    """X_n . l for `replicas` walks of a history-free kernel, via the vectorized path."""
    ell = np.asarray(direction.ell)
    chunks = _parallel(threads)(
        delayed(_displacement_batch)(kernel, ell, horizon, indices, master_seed)
        for indices in _batches(replicas)
    )
    return np.concatenate(chunks) if chunks else np.zeros(0)


def host_info() -> dict:
    return {
        "python": platform.python_version(),
        "machine": platform.machine(),
        "system": platform.system(),
        "node": platform.node(),
    }


@dataclass
class RunManifest:
    """Provenance of one run. Wall-clock and host are the only non-reproducible fields."""

    config: dict
    seeds: list[dict]
    hashes: dict = field(default_factory=dict)
    tool_version: str = TOOL_VERSION
    started: float = field(default_factory=time.time)
    seconds: Optional[float] = None
    host: dict = field(default_factory=host_info)
    diagnostics: dict = field(default_factory=dict)

    def finish(self, hashes: dict):
        self.hashes = dict(sorted(hashes.items()))
        self.seconds = round(time.time() - self.started, 3)

    def to_json(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "config": self.config,
            "seeds": self.seeds,
            "hashes": self.hashes,
            "wall_clock": {
                "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(self.started)),
                "seconds": self.seconds,
            },
            "host": self.host,
            "diagnostics": self.diagnostics,
        }


def replica_seeds(results: Sequence[ReplicaResult]) -> list[dict]:
    """Start state and draws consumed per replica; enough to replay any one of them."""
    return [{**r.rng_state, "draws_used": r.draws} for r in results]
