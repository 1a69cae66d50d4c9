import math

import numpy as np
import pytest
from scipy import stats as sps

from config.kernel_tables import kernel_tables
from config.types import CookieSetKind
from model import (
    CookieSet,
    Direction,
    KernelSpec,
    StepDistribution,
    WalkContext,
    certify_condition_E,
    drift,
    excitation_strength,
    sample_step,
    step_distribution,
    symmetric_law,
    validate_condition_B,
    validate_condition_C_plus,
    validate_condition_E,
)
from utils.errors import ConditionViolation, ContractViolation, ValidationError
from utils.rng import RngStream


def test_direction_is_normalized() -> None:
    direction = Direction.from_vector([3, 4])
    assert direction.ell == pytest.approx((0.6, 0.8))
    assert direction.axis_index is None
    assert direction.project((1, 1)) == pytest.approx(1.4)
    assert Direction.axis(3, 1).axis_index == 1


def test_direction_rejects_zero_vector() -> None:
    with pytest.raises(ContractViolation):
        Direction.from_vector([0, 0])


@pytest.mark.parametrize("pairs", [
    [((1, 0), 0.5), ((-1, 0), 0.4)],
    [((1, 0), 0.5), ((1, 0), 0.5)],
    [((1, 0), 1.0), ((-1, 0), 0.0)],
])
def test_step_distribution_rejects_bad_laws(pairs) -> None:
    with pytest.raises(ValidationError):
        StepDistribution.from_pairs(pairs)


def test_standard_erw_rejects_p_below_half() -> None:
    with pytest.raises(ValidationError):
        KernelSpec.standard_erw(0.4, 2)


def test_standard_erw_constants(erw, e1) -> None:
    assert validate_condition_B(erw) == 1.0
    certificate = validate_condition_C_plus(erw, e1)
    assert certificate.lam == pytest.approx(0.25)
    assert certificate.condition == "C+"
    h, r = validate_condition_E(erw, e1)
    assert (h, r) == (pytest.approx(0.25), pytest.approx(0.5))
    assert certify_condition_E(erw, e1, h, r)


def test_revisit_law_has_zero_drift(erw) -> None:
    ctx = WalkContext((3, -2), False, 4, True)
    assert np.all(np.abs(drift(step_distribution(erw, ctx))) <= 1e-15)


def test_first_visit_law_pushes_along_e1(erw) -> None:
    law = step_distribution(erw, WalkContext((0, 0), True, 0, True))
    assert law.prob((1, 0)) == pytest.approx(0.375)
    assert law.prob((-1, 0)) == pytest.approx(0.125)
    assert drift(law)[0] == pytest.approx(0.25)


def test_first_visit_outside_cookie_set_is_symmetric(e1) -> None:
    half = CookieSet(CookieSetKind.HALF_SPACE, 5.0, 0.0, e1.ell)
    kernel = KernelSpec.standard_erw(0.75, 2, half)
    law = step_distribution(kernel, WalkContext((0, 0), True, 0, (0, 0) in half))
    assert law == symmetric_law(2)


def test_depleted_strip_membership(e1) -> None:
    strip = CookieSet(CookieSetKind.DEPLETED_STRIP, 5.0, 15.0, e1.ell)
    assert (4, 7) in strip
    assert (5, 0) not in strip
    assert (14, 3) not in strip
    assert (15, 0) in strip


def test_symmetric_kernel_has_vacuous_excitation(e1) -> None:
    certificate = validate_condition_C_plus(KernelSpec.symmetric(2), e1)
    assert certificate.lam is None
    assert certificate.condition == "C_empty"
    assert excitation_strength(KernelSpec.symmetric(2), e1) == 0.0


def test_knight_push_needs_declared_bound() -> None:
    kernel = KernelSpec.from_table(kernel_tables["knight_push"])
    assert validate_condition_B(kernel) == pytest.approx(math.sqrt(5))
    too_small = KernelSpec.generalized(2, kernel.table, declared_K=2.0)
    with pytest.raises(ValidationError):
        validate_condition_B(too_small)


def test_diagonal_push_lambda(e1) -> None:
    kernel = KernelSpec.from_table(kernel_tables["diagonal_push"])
    assert validate_condition_C_plus(kernel, e1).lam == pytest.approx(0.4)


def test_incomplete_table_is_rejected() -> None:
    table = {(True, True): symmetric_law(2)}
    kernel = KernelSpec.generalized(2, table, declared_K=1.0)
    with pytest.raises(ValidationError):
        validate_condition_B(kernel)


def test_drifting_revisit_law_violates_condition_C(e1) -> None:
    pushed = StepDistribution.from_pairs([((1, 0), 0.5), ((0, 1), 0.25), ((0, -1), 0.25)])
    table = {(True, True): pushed, (False, True): pushed}
    kernel = KernelSpec.generalized(2, table, declared_K=1.0)
    with pytest.raises(ConditionViolation) as err:
        validate_condition_C_plus(kernel, e1)
    assert err.value.condition == "C"


def test_sample_step_consumes_one_uniform(erw) -> None:
    rng = RngStream(3, 0)
    law = step_distribution(erw, WalkContext((0, 0), True, 0, True))
    step = sample_step(law, rng)
    assert step in law.displacements
    assert rng.draws == 1


def test_walk_context_consistency() -> None:
    with pytest.raises(ContractViolation):
        WalkContext((0, 0), True, 2, True)


def _built_in_kernels() -> list[KernelSpec]:
    tables = [KernelSpec.from_table(record, name=name) for name, record in sorted(kernel_tables.items())]
    return [KernelSpec.standard_erw(0.75, 2), KernelSpec.symmetric(2), *tables]


@pytest.mark.parametrize("kernel", _built_in_kernels(), ids=lambda kernel: kernel.name)
def test_sample_step_follows_every_law(kernel) -> None:
    rng = RngStream(17, 0)
    for entry in kernel.labelled_laws():
        law = entry.law
        draws = [sample_step(law, rng) for _ in range(20_000)]
        if len(law.outcomes) == 1:
            assert set(draws) == {law.displacements[0]}
            continue
        observed = [draws.count(dz) for dz in law.displacements]
        expected = [p * len(draws) for p in law.probabilities]
        assert sps.chisquare(observed, expected).pvalue > 1e-3, entry.label


def test_first_visit_push_frequency(erw) -> None:
    law = step_distribution(erw, WalkContext((0, 0), True, 0, True))
    rng = RngStream(2024, 0)
    hits = sum(sample_step(law, rng) == (1, 0) for _ in range(1_000_000))
    assert hits / 1_000_000 == pytest.approx(0.375, abs=0.002)


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("p", [0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
def test_excitation_of_standard_erw(p, d) -> None:
    certificate = validate_condition_C_plus(KernelSpec.standard_erw(p, d), Direction.axis(d, 0))
    assert certificate.lam == pytest.approx((2 * p - 1) / d, abs=1e-12)
    assert certificate.holds_c_plus == (p > 0.5)


def test_condition_E_rejects_push_against_direction(e1) -> None:
    back = StepDistribution.from_pairs([((-1, 0), 1.0)])
    kernel = KernelSpec.generalized(2, {(True, True): back, (False, True): back}, 1.0)
    with pytest.raises(ConditionViolation) as err:
        validate_condition_E(kernel, e1)
    assert err.value.condition == "E"


def test_condition_E_for_totally_excited_walk(e1) -> None:
    h, r = validate_condition_E(KernelSpec.standard_erw(1.0, 2), e1)
    assert (h, r) == pytest.approx((0.25, 0.5))
