import pytest

from config.kernel_tables import kernel_tables
from model import Direction, KernelSpec


@pytest.fixture
def e1() -> Direction:
    return Direction.axis(2, 0)


@pytest.fixture
def erw() -> KernelSpec:
    return KernelSpec.standard_erw(0.75, 2)


@pytest.fixture
def straight_line() -> KernelSpec:
    """Deterministic +e1 walk."""
    return KernelSpec.from_table(kernel_tables["point_mass_e1"], name="point_mass_e1")


@pytest.fixture
def oscillator() -> KernelSpec:
    return KernelSpec.from_table(kernel_tables["strip_oscillator"], name="strip_oscillator")
