import pytest

from config.types import PathStorage, RenewalPhase
from ensemble import run_ensemble
from model import Direction, KernelSpec
from renewal import (
    CandidateKilled,
    CandidateOpened,
    RenewalState,
    blocks_header,
    blocks_rows,
    check_record_property,
    finalize,
    oracle_regeneration_times,
    regeneration_times,
)
from utils.errors import ContractViolation

BACKTRACK = [0, 1, 0, 1] + list(range(2, 12))


def test_monotone_path_regenerates_every_step() -> None:
    path = list(range(11))
    assert regeneration_times(path).taus == list(range(1, 11))
    assert oracle_regeneration_times(path) == list(range(1, 11))


def test_backtrack_path_first_regeneration_is_four() -> None:
    taus = regeneration_times(BACKTRACK).taus
    assert taus[0] == 4
    assert taus == oracle_regeneration_times(BACKTRACK)


def test_nested_candidates_die_together() -> None:
    path = [0, 1, 2, 1, 2, 3, 4]
    sequence = regeneration_times(path)
    assert sequence.taus == [1, 5, 6]
    assert sequence.levels == [1, 3, 4]
    assert sequence.killed == 1
    assert oracle_regeneration_times(path) == [1, 5, 6]
    check_record_property(sequence.taus, path)


def test_touching_the_floor_does_not_kill() -> None:
    path = [0, 1, 1, 2]
    assert regeneration_times(path).taus == [1, 3]
    assert oracle_regeneration_times(path) == [1, 3]


def test_walk_below_start_needs_a_fresh_record() -> None:
    assert regeneration_times([0, -1, 0, 1]).taus == [3]
    assert regeneration_times([0, -1, -2, -1]).taus == []
    assert oracle_regeneration_times([0, -1, -2, -1]) == []


def test_events_and_phase() -> None:
    state = RenewalState()
    assert state.observe(1, 1.0) == [CandidateOpened(1, 1.0)]
    assert state.phase == RenewalPhase.WATCHING_D
    assert state.candidate_time == 1
    assert state.observe(2, 1.5) == ()
    events = state.observe(3, 0.0)
    assert events == [CandidateKilled(3, 1, 1.0)]
    assert state.phase == RenewalPhase.SEEKING_S
    assert state.level == 1.5


def test_steps_must_arrive_in_order() -> None:
    state = RenewalState()
    state.observe(1, 1.0)
    with pytest.raises(ContractViolation):
        state.observe(3, 2.0)


def test_finalize_checks_horizon_and_margin() -> None:
    state = RenewalState()
    state.observe(1, 1.0)
    with pytest.raises(ContractViolation):
        finalize(state, 2)
    with pytest.raises(ContractViolation):
        finalize(state, 1, confirm_margin=-1)


def test_confirm_margin_drops_recent_candidates() -> None:
    path = [0, 1, 2, 1, 2, 3, 4]
    assert regeneration_times(path, confirm_margin=1.0).taus == [1, 5]
    assert regeneration_times(path, confirm_margin=10.0).taus == []


def test_blocks_between_regenerations() -> None:
    state = RenewalState()
    positions = [(1, 0), (2, 0), (1, 0), (2, 0), (3, 0), (4, 0)]
    for step, position in enumerate(positions, start=1):
        state.observe(step, float(position[0]), position)
    sequence = finalize(state, 6)
    assert sequence.taus == [1, 5, 6]
    first, second = sequence.blocks
    assert (first.k, first.tau, first.dtau, first.dx, first.dproj) == (1, 1, 4, (2, 0), 2.0)
    assert (second.dtau, second.dx) == (1, (1, 0))
    # the block ending at the last tau is not usable
    assert sequence.usable_blocks() == [first]
    assert sequence.usable_blocks(safety_window=2) == []
    assert sequence.censor.first_block_present
    assert blocks_header(2) == ["replica", "k", "tau_k", "dtau", "dx_1", "dx_2", "dproj"]
    assert blocks_rows(sequence)[0] == [0, 1, 1, 4, 2, 0, 2.0]


@pytest.mark.parametrize("p,d", [(0.6, 2), (0.75, 3), (1.0, 2)])
def test_streaming_matches_oracle_on_random_paths(p, d) -> None:
    results = run_ensemble(
        KernelSpec.standard_erw(p, d), Direction.axis(d, 0), 500, 20, 2024, storage=PathStorage.FULL,
    )
    for result in results:
        assert result.sequence.taus == oracle_regeneration_times(result.projections)
        check_record_property(result.sequence.taus, result.projections)


@pytest.mark.slow
def test_streaming_matches_oracle_at_full_scale() -> None:
    mismatches = 0
    for index, (p, d) in enumerate((p, d) for p in (0.6, 0.75, 1.0) for d in (2, 3)):
        results = run_ensemble(
            KernelSpec.standard_erw(p, d), Direction.axis(d, 0), 2000, 167, index, storage=PathStorage.FULL,
        )
        mismatches += sum(r.sequence.taus != oracle_regeneration_times(r.projections) for r in results)
    assert mismatches == 0
