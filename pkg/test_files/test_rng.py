import numpy as np
import pytest

from utils.rng import RngStream, derive_seed, mix_words, replica_streams, splitmix64, unit_float


def test_splitmix64_matches_reference_first_output() -> None:
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_same_key_gives_same_stream() -> None:
    a, b = RngStream(42, 3), RngStream(42, 3)
    assert [a.uniform() for _ in range(10)] == [b.uniform() for _ in range(10)]


def test_distinct_replicas_give_distinct_streams() -> None:
    first, second = replica_streams(42, 2)
    assert first.uniforms(8).tolist() != second.uniforms(8).tolist()


def test_uniforms_match_single_draws_across_chunk_boundary() -> None:
    count = RngStream.CHUNK + 17
    bulk = RngStream(7, 1).uniforms(count)
    single = RngStream(7, 1)
    np.testing.assert_array_equal(bulk, [single.uniform() for _ in range(count)])


def test_draws_count_every_uniform() -> None:
    rng = RngStream(1, 0)
    rng.uniform()
    rng.uniforms(5)
    assert rng.draws == 6
    assert rng.state()["draws"] == 6


def test_replay_from_state_reproduces_tail() -> None:
    rng = RngStream(99, 5)
    rng.uniforms(1234)
    saved = rng.state()
    tail = rng.uniforms(20)
    replayed = RngStream.from_state(saved)
    np.testing.assert_array_equal(replayed.uniforms(20), tail)
    assert rng.clone().draws == rng.draws


@pytest.mark.parametrize("draws", [0, 1, RngStream.CHUNK, 3 * RngStream.CHUNK + 17, 100_000])
def test_replay_jumps_to_any_position(draws) -> None:
    rng = RngStream(7, 2)
    rng.uniforms(draws)
    tail = rng.uniforms(RngStream.CHUNK + 3)
    replayed = RngStream.from_state({"master_seed": 7, "replica_index": 2, "draws": draws})
    assert replayed.draws == draws
    np.testing.assert_array_equal(replayed.uniforms(RngStream.CHUNK + 3), tail)


def test_replay_advances_the_counter_instead_of_drawing() -> None:
    replayed = RngStream.from_state({"master_seed": 1, "replica_index": 0, "draws": 5 * RngStream.CHUNK})
    counter = replayed.generator.bit_generator.state["state"]["counter"]
    assert int(counter[0]) == 5 * RngStream.CHUNK // 4


def test_unit_float_range() -> None:
    assert unit_float(0) == 0.0
    assert 0.0 <= unit_float((1 << 64) - 1) < 1.0


def test_site_hash_depends_on_every_word() -> None:
    assert mix_words(7, (1, 2)) != mix_words(7, (2, 1))
    assert mix_words(7, (-1, 0)) != mix_words(7, (1, 0))
    assert derive_seed(7, 0) != derive_seed(7, 1)
    assert derive_seed(7, 1) == derive_seed(7, 1)
