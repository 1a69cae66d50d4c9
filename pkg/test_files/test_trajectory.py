import numpy as np
import pytest

from config.types import CookieSetKind, PathStorage
from model import CookieSet, KernelSpec, StepDistribution, symmetric_law
from trajectory import (
    SiteCodec,
    entrance_time,
    local_time,
    run_until_backtrack,
    simulate,
    trajectory_header,
    trajectory_rows,
    walk_positions,
)
from utils.errors import ContractViolation, MissingContextError
from utils.rng import RngStream


def test_straight_line_walk(straight_line, e1) -> None:
    stats = simulate(straight_line, e1, 10, RngStream(0, 0))
    assert stats.position == (10, 0)
    assert stats.range_size == 11
    assert stats.max_local_time == 1
    assert stats.max_visit_count == 1
    assert stats.first_backtrack_time is None
    assert local_time(stats, 4) == 1
    assert local_time(stats, -1) == 0


def test_hand_traced_back_and_forth_path(e1) -> None:
    # (0,0) -> (1,0) -> (0,0) -> (1,0) -> (2,0)
    forward = StepDistribution.from_pairs([((1, 0), 1.0)])
    back = StepDistribution.from_pairs([((-1, 0), 1.0)])
    kernel = KernelSpec.generalized(2, {(True, True): back, (False, True): forward}, 1.0, site_overrides={(0, 0): forward})
    stats = simulate(kernel, e1, 4, RngStream(0, 0), storage=PathStorage.FULL)
    assert list(stats.path) == [(0, 0), (1, 0), (0, 0), (1, 0), (2, 0)]
    assert local_time(stats, 0) == 2
    assert local_time(stats, 1) == 2
    assert local_time(stats, 5) == 0
    assert stats.range_size == 3
    assert stats.first_backtrack_time == 2


def test_oscillator_stays_in_one_strip(oscillator, e1) -> None:
    stats = simulate(oscillator, e1, 100, RngStream(0, 0))
    assert stats.range_size == 2
    assert local_time(stats, 0) == 101
    assert stats.visit_count((0, 0)) == 51
    assert stats.first_backtrack_time == 1


def test_accumulators_are_consistent(erw, e1) -> None:
    stats = simulate(erw, e1, 2000, RngStream(5, 2))
    assert sum(stats.local_time_hist.values()) == 2001
    assert sum(stats.visit_counts.values()) == 2001
    assert stats.range_size == len(stats.visited())
    assert stats.min_proj <= stats.proj <= stats.max_proj


def test_simulation_is_deterministic(erw, e1) -> None:
    a = simulate(erw, e1, 500, RngStream(9, 4)).summary()
    b = simulate(erw, e1, 500, RngStream(9, 4)).summary()
    assert a == b


def test_one_uniform_per_step(erw, e1) -> None:
    rng = RngStream(1, 1)
    simulate(erw, e1, 321, rng)
    assert rng.draws == 321


def test_horizon_must_be_positive(erw, e1) -> None:
    with pytest.raises(ContractViolation):
        simulate(erw, e1, 0, RngStream(0, 0))


def test_path_storage(erw, e1) -> None:
    full = simulate(erw, e1, 50, RngStream(2, 0), storage=PathStorage.FULL)
    assert len(full.path) == 51
    assert full.path[0] == (0, 0)
    assert full.path[-1] == full.position
    ring = simulate(erw, e1, 50, RngStream(2, 0), storage=PathStorage.RING, ring_size=8)
    assert ring.path == full.path[-8:]
    rows = trajectory_rows(ring, e1)
    assert rows[0][0] == 43
    assert trajectory_header(2) == ["step", "x1", "x2", "proj", "first_visit"]


def test_vectorized_path_matches_streaming(e1) -> None:
    kernel = KernelSpec.symmetric(2)
    positions = walk_positions(kernel, 300, RngStream(4, 7))
    stats = simulate(kernel, e1, 300, RngStream(4, 7), storage=PathStorage.FULL)
    np.testing.assert_array_equal(positions, np.array(stats.path))


def test_vectorized_path_needs_history_free_kernel(erw) -> None:
    with pytest.raises(ContractViolation):
        walk_positions(erw, 10, RngStream(0, 0))


def test_entrance_time(straight_line, e1) -> None:
    assert entrance_time(straight_line, e1, lambda site: True, 10, RngStream(0, 0)).time == 0
    hit = entrance_time(straight_line, e1, lambda site: site[0] >= 5, 10, RngStream(0, 0))
    assert (hit.time, hit.censored) == (5, False)
    missed = entrance_time(straight_line, e1, lambda site: site[1] > 0, 10, RngStream(0, 0))
    assert missed.censored and not missed.hit


def test_first_backtrack(straight_line, oscillator, e1) -> None:
    assert run_until_backtrack(straight_line, e1, 100, RngStream(0, 0)) is None
    assert run_until_backtrack(oscillator, e1, 100, RngStream(0, 0)) == 1


def test_missing_context_reports_step(e1) -> None:
    law = symmetric_law(2)
    half = CookieSet(CookieSetKind.HALF_SPACE, 1.0, 0.0, e1.ell)
    kernel = KernelSpec.generalized(2, {(True, True): law, (False, True): law}, 1.0, half)
    with pytest.raises(MissingContextError) as err:
        simulate(kernel, e1, 10, RngStream(0, 0), max_jump=1.0)
    assert err.value.step_index == 1


@pytest.mark.parametrize("d,reach,packed", [(2, 1000, True), (3, 1000, True), (4, 10, False)])
def test_site_codec(d, reach, packed) -> None:
    codec = SiteCodec(d, reach)
    site = tuple(range(-1, d - 1))
    assert codec.packed is packed
    assert codec.site(codec.key(site)) == site
    if packed:
        step = (1,) + (0,) * (d - 1)
        shifted = tuple(c + s for c, s in zip(site, step))
        assert codec.key(site) + codec.delta(step) == codec.key(shifted)


def test_summary_record_keys(erw, e1) -> None:
    record = simulate(erw, e1, 100, RngStream(0, 0)).summary().to_record()
    assert all(isinstance(key, str) for key in record["local_time"])
    assert record["n"] == 100
