import numpy as np
import pytest

from environment import (
    EnvironmentModel,
    site_environment,
    site_law,
    validate_uniform_ellipticity,
    validate_uniform_excitation,
)
from model import Direction, KernelSpec, biased_law, symmetric_law, validate_condition_C_plus
from utils.errors import InvalidEnvironmentError, ValidationError


@pytest.fixture
def env() -> EnvironmentModel:
    return EnvironmentModel(2, p_lo=0.6, p_hi=0.9, master_seed=11)


def test_site_law_is_stable_across_calls(env) -> None:
    assert site_law(env, (4, -3), 0) == site_law(env, (4, -3), 0)
    assert env.site_uniform((4, -3)) == EnvironmentModel(2, p_lo=0.6, p_hi=0.9, master_seed=11).site_uniform((4, -3))


def test_revisits_are_symmetric(env) -> None:
    assert site_law(env, (1, 1), 1) == symmetric_law(2)
    assert site_law(env, (1, 1), 7) == symmetric_law(2)


def test_bias_stays_in_family_range(env) -> None:
    for x in range(-20, 20):
        bias = site_environment(env, (x, 2 * x)).bias
        assert 0.6 <= bias <= 0.9


def test_replicas_get_their_own_environment(env) -> None:
    first, second = env.for_replica(0), env.for_replica(1)
    sites = [(x, 0) for x in range(50)]
    assert [first.site_uniform(s) for s in sites] != [second.site_uniform(s) for s in sites]
    assert env.for_replica(1) == second


def test_ellipticity_and_excitation(env, e1) -> None:
    assert validate_uniform_ellipticity(env) == pytest.approx(0.05)
    assert validate_uniform_excitation(env, e1) == pytest.approx(0.1)
    assert validate_condition_C_plus(KernelSpec.erwre(env), e1).lam == pytest.approx(0.1)


def test_degenerate_family_is_not_elliptic() -> None:
    with pytest.raises(InvalidEnvironmentError):
        validate_uniform_ellipticity(EnvironmentModel(2, p_lo=0.6, p_hi=1.0))


def test_unbiased_family_is_not_excited(e1) -> None:
    with pytest.raises(InvalidEnvironmentError):
        validate_uniform_excitation(EnvironmentModel(2, p_lo=0.5, p_hi=0.8), e1)


def test_declared_constants_are_lower_bounds(e1) -> None:
    with pytest.raises(InvalidEnvironmentError):
        validate_uniform_ellipticity(EnvironmentModel(2, p_lo=0.6, p_hi=0.9, kappa=0.2))
    with pytest.raises(InvalidEnvironmentError):
        validate_uniform_excitation(EnvironmentModel(2, p_lo=0.6, p_hi=0.9, lam=0.3), e1)


def test_family_parameters_are_checked() -> None:
    with pytest.raises(ValidationError):
        EnvironmentModel(2, p_lo=0.9, p_hi=0.6).law_family
    with pytest.raises(ValidationError):
        EnvironmentModel(2, family="dirichlet")


def test_site_biases_are_uncorrelated_and_uniform(env) -> None:
    grid = [(x, y) for x in range(100) for y in range(100)]
    here = np.array([site_environment(env, (x, y)).bias for x, y in grid])
    right = np.array([site_environment(env, (x + 1, y)).bias for x, y in grid])
    assert abs(np.corrcoef(here, right)[0, 1]) < 3 / np.sqrt(len(grid))
    assert here.mean() == pytest.approx(0.75, abs=0.01)


def test_every_site_law_respects_ellipticity(env) -> None:
    kappa = validate_uniform_ellipticity(env)
    for x in range(100):
        for y in range(100):
            for visit in (0, 1):
                assert min(site_law(env, (x, y), visit).probabilities) >= kappa - 1e-15


def test_site_law_is_a_pure_function_of_seed_site_and_visit() -> None:
    rng = np.random.default_rng(31)
    sites = rng.integers(-1000, 1001, size=(100_000, 2))
    visits = rng.integers(0, 4, size=100_000)
    first = EnvironmentModel(2, p_lo=0.6, p_hi=0.9, master_seed=11)
    rerun = EnvironmentModel(2, p_lo=0.6, p_hi=0.9, master_seed=11)
    for (x, y), visit in zip(sites.tolist(), visits.tolist()):
        law = site_law(first, (x, y), visit)
        assert law == site_law(first, (x, y), visit)
        assert law == site_law(rerun, (x, y), visit)


def test_three_dimensional_family() -> None:
    env = EnvironmentModel(3, p_lo=0.6, p_hi=0.9)
    assert validate_uniform_ellipticity(env) == pytest.approx(1 / 30)
    assert validate_uniform_excitation(env, Direction.axis(3, 0)) == pytest.approx(0.2 / 3)


def test_degenerate_family_is_the_standard_walk() -> None:
    env = EnvironmentModel(2, p_lo=0.75, p_hi=0.75, master_seed=3)
    for x in range(10):
        assert site_law(env, (x, -x), 0) == biased_law(2, 0.75)
