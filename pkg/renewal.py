"""
Online detection of regeneration times in direction l.

A candidate opens at the first time the projection reaches R + 1 (R being the
record level of the process it belongs to) and dies the first time the
projection falls strictly below the candidate's own level. A candidate that
survives to the horizon is confirmed. Because regeneration restarts the
definition on the shifted path, candidates nest: every live candidate carries
the candidates of its own shifted process above it, so the live set is a stack
with strictly increasing floors, and one drop kills a suffix of it.

Every candidate opens at a fresh global record, so the running max since any
live candidate equals the global running max; one scalar suffices.
"""
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from config.types import RenewalPhase
from utils.errors import ContractViolation

NO_EVENTS = ()


@dataclass(frozen=True)
class CandidateOpened:
    step: int
    level: float


@dataclass(frozen=True)
class CandidateKilled:
    step: int
    candidate_time: int
    floor: float


class RenewalState:
    def __init__(self, initial_proj: float = 0.0):
        self.initial_proj = initial_proj
        self.step = 0
        self.running_max = initial_proj
        self.threshold = initial_proj + 1
        self.phase = RenewalPhase.SEEKING_S
        # live candidates, floors strictly increasing
        self.times: list[int] = []
        self.floors: list[float] = []
        self.positions: list[Optional[tuple]] = []
        self.confirmed: list[int] = []
        self.opened = 0
        self.killed = 0

    @property
    def level(self) -> float:
        """R: the record level the innermost process must beat by 1."""
        return self.threshold - 1

    @property
    def candidate_time(self) -> Optional[int]:
        return self.times[-1] if self.phase == RenewalPhase.WATCHING_D else None

    @property
    def candidate_floor(self) -> Optional[float]:
        return self.floors[-1] if self.phase == RenewalPhase.WATCHING_D else None

    @property
    def base_time(self) -> int:
        """Start of the innermost shifted process (0 for the walk itself)."""
        if self.phase == RenewalPhase.WATCHING_D:
            return self.times[-2] if len(self.times) > 1 else 0
        return self.times[-1] if self.times else 0

    def observe(self, step_index: int, proj: float, position=None):
        if step_index != self.step + 1:
            raise ContractViolation(f"renewal observer expected step {self.step + 1}, got {step_index}")
        self.step = step_index
        events = NO_EVENTS
        floors = self.floors
        if floors and proj < floors[-1]:
            keep = bisect_right(floors, proj)
            events = [CandidateKilled(step_index, t, f) for t, f in zip(self.times[keep:], floors[keep:])]
            self.killed += len(events)
            del self.times[keep:]
            del floors[keep:]
            del self.positions[keep:]
            # D realized: R becomes the max observed up to the drop
            self.threshold = self.running_max + 1
            self.phase = RenewalPhase.SEEKING_S
        if proj >= self.threshold:
            self.times.append(step_index)
            floors.append(proj)
            self.positions.append(tuple(position) if position is not None else None)
            self.threshold = proj + 1
            self.phase = RenewalPhase.WATCHING_D
            self.opened += 1
            opened = CandidateOpened(step_index, proj)
            events = [opened] if events is NO_EVENTS else events + [opened]
        if proj > self.running_max:
            self.running_max = proj
        return events


class RenewalDetector:
    """Trajectory observer that feeds a RenewalState."""

    def __init__(self, initial_proj: float = 0.0):
        self.state = RenewalState(initial_proj)

    def observe(self, step_index: int, proj: float, position) -> object:
        return self.state.observe(step_index, proj, position)


def observe(state: RenewalState, step_index: int, proj: float, position=None):
    return state.observe(step_index, proj, position)


@dataclass(frozen=True)
class Censor:
    horizon: int
    tail_dropped: bool
    first_block_present: bool


@dataclass(frozen=True)
class Block:
    """Increment between consecutive regeneration times tau_k and tau_{k+1}."""

    k: int
    tau: int
    dtau: int
    dx: tuple
    dproj: float


@dataclass
class RegenerationSequence:
    taus: list[int]
    levels: list[float]
    positions: list[Optional[tuple]]
    blocks: list[Block]
    censor: Censor
    replica: int = 0
    killed: int = 0

    def usable_blocks(self, safety_window: int = 0) -> list[Block]:
        """
        Blocks for i.i.d.-style statistics: tau_k -> tau_{k+1} for k >= 1,
        without the block ending at the last confirmed tau and without blocks
        ending inside the last `safety_window` steps of the horizon.
        """
        if len(self.blocks) < 2:
            return []
        limit = self.censor.horizon - safety_window
        return [block for block in self.blocks[:-1] if block.tau + block.dtau <= limit]

    def to_record(self) -> dict:
        return {
            "replica": self.replica,
            "taus": self.taus,
            "levels": self.levels,
            "horizon": self.censor.horizon,
            "tail_dropped": self.censor.tail_dropped,
            "first_block_present": self.censor.first_block_present,
            "killed": self.killed,
        }


def finalize(state: RenewalState, horizon: int, confirm_margin: float = 0.0) -> RegenerationSequence:
    if state.step != horizon:
        raise ContractViolation(f"finalize at horizon {horizon}, but {state.step} steps were observed")
    if confirm_margin < 0:
        raise ContractViolation(f"confirm_margin must be >= 0, got {confirm_margin}")
    # floors increase, so the confirmable candidates form a prefix
    count = len(state.floors)
    while count and state.running_max - state.floors[count - 1] < confirm_margin:
        count -= 1
    taus = state.times[:count]
    levels = state.floors[:count]
    positions = state.positions[:count]
    state.confirmed = list(taus)

    blocks = []
    for k in range(1, count):
        start, end = positions[k - 1], positions[k]
        dx = tuple(b - a for a, b in zip(start, end)) if start is not None and end is not None else ()
        blocks.append(Block(k, taus[k - 1], taus[k] - taus[k - 1], dx, levels[k] - levels[k - 1]))

    if __debug__:
        for k in range(1, count):
            assert taus[k] > taus[k - 1]
            assert levels[k] - levels[k - 1] >= 1

    censor = Censor(
        horizon=horizon,
        tail_dropped=not taus or taus[-1] < horizon,
        first_block_present=bool(taus),
    )
    return RegenerationSequence(list(taus), list(levels), list(positions), blocks, censor, killed=state.killed)


def regeneration_times(projections: Sequence[float], confirm_margin: float = 0.0) -> RegenerationSequence:
    """Run the streaming detector over a stored projection path."""
    state = RenewalState(float(projections[0]))
    for step_index in range(1, len(projections)):
        state.observe(step_index, float(projections[step_index]))
    return finalize(state, len(projections) - 1, confirm_margin)


# ---- brute-force oracle -------------------------------------------------

def _first_regeneration(P: np.ndarray, base: int) -> Optional[int]:
    """tau_1 of the path shifted to `base`, by literal evaluation of S, D, R and kappa."""
    R = P[base]
    # S_0 = D_0 = 0 (finite), so kappa >= 1
    while True:
        hits = np.flatnonzero(P[base:] >= R + 1)
        if hits.size == 0:
            return None
        S = base + int(hits[0])
        drops = np.flatnonzero(P[S:] < P[S])
        if drops.size == 0:
            return S
        D = S + int(drops[0])
        R = P[base:D + 1].max()


def oracle_regeneration_times(projections: Sequence[float]) -> list[int]:
    P = np.asarray(projections, dtype=float)
    taus = []
    base = 0
    while True:
        tau = _first_regeneration(P, base)
        if tau is None:
            return taus
        taus.append(tau)
        base = tau


def check_record_property(taus: Sequence[int], projections: Sequence[float]) -> None:
    """Every confirmed tau is a record never undercut afterwards, one level above the last."""
    P = np.asarray(projections, dtype=float)
    previous = None
    for tau in taus:
        if P[tau:].min() < P[tau]:
            raise ContractViolation(f"projection drops below the level of tau={tau}")
        if P[:tau].size and P[:tau].max() >= P[tau]:
            raise ContractViolation(f"tau={tau} is not a strict record")
        if previous is not None and P[tau] - P[previous] < 1:
            raise ContractViolation(f"level gap between tau={previous} and tau={tau} is below 1")
        previous = tau


def blocks_header(d: int) -> list[str]:
    return ["replica", "k", "tau_k", "dtau", *[f"dx_{i + 1}" for i in range(d)], "dproj"]


def blocks_rows(sequence: RegenerationSequence) -> list[list]:
    return [[sequence.replica, b.k, b.tau, b.dtau, *b.dx, b.dproj] for b in sequence.blocks]
