"""
i.i.d. random environment for the excited random walk in random environment.

Nothing is stored per site: the bias at x is a hash of (seed, x), so a site
shows the same law on every revisit and in every re-run with the same seed.
"""
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterator, Optional

import numpy as np

from model import Direction, LabelledLaw, StepDistribution, biased_law, drift, symmetric_law, DRIFT_TOL
from utils.errors import ConditionViolation, InvalidEnvironmentError, ValidationError
from utils.rng import derive_seed, mix_words, unit_float


class SiteBiasFamily:
    """
    Per site an independent bias p_x ~ Uniform[p_lo, p_hi]. The first visit uses
    the biased nearest-neighbour law toward +e_axis, every later visit the
    symmetric law.
    """

    name = "site-bias"

    def __init__(self, d: int, p_lo: float, p_hi: float, axis: int = 0):
        if not 0.0 <= p_lo <= p_hi <= 1.0:
            raise ValidationError(f"site-bias needs 0 <= p_lo <= p_hi <= 1, got [{p_lo}, {p_hi}]")
        if not 0 <= axis < d:
            raise ValidationError(f"axis {axis} outside 0..{d - 1}")
        self.d = d
        self.p_lo = p_lo
        self.p_hi = p_hi
        self.axis = axis
        self.revisit_law = symmetric_law(d)

    def bias(self, u: float) -> float:
        return self.p_lo + (self.p_hi - self.p_lo) * u

    def law(self, u: float, visit_count: int) -> StepDistribution:
        if visit_count >= 1:
            return self.revisit_law
        return biased_law(self.d, self.bias(u), self.axis)

    def support(self) -> Iterator[tuple[str, StepDistribution, int]]:
        # drift and minimal mass are monotone in p, so the endpoints bound the support
        yield f"first visit, p={self.p_lo}", biased_law(self.d, self.p_lo, self.axis), 0
        if self.p_hi != self.p_lo:
            yield f"first visit, p={self.p_hi}", biased_law(self.d, self.p_hi, self.axis), 0
        yield "revisit", self.revisit_law, 1

    def ellipticity(self) -> float:
        return min((1.0 - self.p_hi) / self.d, 1.0 / (2 * self.d))

    def excitation(self, direction: Direction) -> float:
        along = direction.ell[self.axis]
        p = self.p_lo if along >= 0 else self.p_hi
        return (2 * p - 1) / self.d * along


FAMILIES = {SiteBiasFamily.name: SiteBiasFamily}


@dataclass(frozen=True)
class EnvironmentModel:
    d: int
    family: str = "site-bias"
    p_lo: float = 0.6
    p_hi: float = 0.9
    axis: int = 0
    master_seed: int = 0
    kappa: Optional[float] = None
    lam: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown environment family {self.family!r}; known: {sorted(FAMILIES)}")

    @classmethod
    def from_config(cls, d: int, record: dict, declared: Optional[dict] = None) -> "EnvironmentModel":
        declared = declared or {}
        return cls(
            d=d,
            family=record.get("family", "site-bias"),
            p_lo=float(record["p_lo"]),
            p_hi=float(record["p_hi"]),
            axis=int(record.get("axis", 0)),
            master_seed=int(record.get("seed", 0)),
            kappa=declared.get("kappa"),
            lam=declared.get("lambda"),
        )

    @cached_property
    def law_family(self) -> SiteBiasFamily:
        return FAMILIES[self.family](self.d, self.p_lo, self.p_hi, self.axis)

    def for_replica(self, replica_index: int) -> "EnvironmentModel":
        return replace(self, master_seed=derive_seed(self.master_seed, replica_index))

    def site_uniform(self, site) -> float:
        return unit_float(mix_words(self.master_seed, site))

    def site_law(self, site, visit_count: int) -> StepDistribution:
        return site_law(self, site, visit_count)

    def labelled_support(self, reachable_keys) -> Iterator[LabelledLaw]:
        excited = (True, True) in reachable_keys
        for label, law, visit in self.law_family.support():
            if visit == 0 and excited:
                yield LabelledLaw(label, True, True, law)
            elif visit >= 1:
                yield LabelledLaw(label, False, True, law)


@dataclass
class SiteEnvironment:
    site: tuple
    u: float
    family: SiteBiasFamily

    @property
    def bias(self) -> float:
        return self.family.bias(self.u)

    def law(self, visit_count: int) -> StepDistribution:
        return self.family.law(self.u, visit_count)


def site_environment(env: EnvironmentModel, site) -> SiteEnvironment:
    return SiteEnvironment(tuple(site), env.site_uniform(site), env.law_family)


def site_law(env: EnvironmentModel, site, visit_count: int) -> StepDistribution:
    family = env.law_family
    if visit_count >= 1:
        return family.revisit_law
    return family.law(env.site_uniform(site), 0)


def validate_uniform_ellipticity(env: EnvironmentModel) -> float:
    kappa = env.law_family.ellipticity()
    if kappa <= 0:
        raise InvalidEnvironmentError(f"environment is not uniformly elliptic (kappa={kappa})")
    if env.kappa is not None and env.kappa > kappa + DRIFT_TOL:
        raise InvalidEnvironmentError(f"declared kappa={env.kappa} exceeds the family's {kappa}")
    return kappa


def validate_uniform_excitation(env: EnvironmentModel, direction: Direction) -> float:
    family = env.law_family
    ell = np.array(direction.ell)
    for label, law, visit in family.support():
        if visit >= 1 and np.any(np.abs(drift(law)) > DRIFT_TOL):
            raise ConditionViolation("C", f"nonzero drift on {label}", label)
    lam = family.excitation(direction)
    # cross-check the closed form against the endpoint laws
    enumerated = min(float(drift(law) @ ell) for _, law, visit in family.support() if visit == 0)
    lam = min(lam, enumerated)
    if lam <= DRIFT_TOL:
        raise InvalidEnvironmentError(f"environment is not uniformly excited (lambda={lam})")
    if env.lam is not None and env.lam > lam + DRIFT_TOL:
        raise InvalidEnvironmentError(f"declared lambda={env.lam} exceeds the family's {lam}")
    return lam
