"""
Step kernels of generalized excited (cookie) random walks and the checks of
Conditions B, C/C+ (and their cookie-set variants C_A/C_A+) and E on them.
"""
import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterator, Optional

import numpy as np
from scipy.stats import qmc, norm

from config.types import CookieSetKind, KernelKind
from utils.errors import (
    ConditionViolation,
    ContractViolation,
    MissingContextError,
    ValidationError,
)

if TYPE_CHECKING:
    from environment import EnvironmentModel
    from utils.rng import RngStream

PROB_TOL = 1e-12
DRIFT_TOL = 1e-12
NORM_TOL = 1e-12

Site = tuple[int, ...]


@dataclass(frozen=True)
class Direction:
    d: int
    ell: tuple[float, ...]

    def __post_init__(self):
        if self.d < 2:
            raise ContractViolation(f"direction needs d >= 2, got d={self.d}")
        if len(self.ell) != self.d:
            raise ContractViolation(f"ell has length {len(self.ell)}, expected {self.d}")
        norm_ = math.sqrt(math.fsum(c * c for c in self.ell))
        if abs(norm_ - 1.0) > NORM_TOL:
            raise ContractViolation(f"ell must have unit norm, got {norm_}")

    @classmethod
    def from_vector(cls, vector, tolerance: float = 0.0) -> "Direction":
        """Normalize `vector`; with tolerance > 0 it must already be unit within it."""
        values = [float(c) for c in vector]
        norm_ = math.sqrt(math.fsum(c * c for c in values))
        if norm_ == 0.0:
            raise ContractViolation("direction vector is zero")
        if tolerance and abs(norm_ - 1.0) > tolerance:
            raise ContractViolation(f"direction norm {norm_} not within {tolerance} of 1")
        return cls(len(values), tuple(c / norm_ for c in values))

    @classmethod
    def axis(cls, d: int, index: int = 0, sign: int = 1) -> "Direction":
        ell = [0.0] * d
        ell[index] = float(sign)
        return cls(d, tuple(ell))

    @property
    def axis_index(self) -> Optional[int]:
        """Index i when ell = +e_i exactly, else None."""
        for i, c in enumerate(self.ell):
            if c == 1.0:
                return i
        return None

    def project(self, site) -> float:
        axis = self.axis_index
        if axis is not None:
            return float(site[axis])
        return sum(c * w for c, w in zip(site, self.ell))


@dataclass(frozen=True)
class StepDistribution:
    outcomes: tuple[tuple[Site, float], ...]
    cumulative: tuple[float, ...] = field(init=False, repr=False, compare=False)
    max_norm: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.outcomes:
            raise ValidationError("step distribution has no outcomes")
        dims = {len(dz) for dz, _ in self.outcomes}
        if len(dims) != 1:
            raise ValidationError(f"displacements of mixed dimension {sorted(dims)}")
        displacements = [dz for dz, _ in self.outcomes]
        if len(set(displacements)) != len(displacements):
            raise ValidationError("displacements must be distinct")
        for dz, prob in self.outcomes:
            if not 0.0 < prob <= 1.0:
                raise ValidationError(f"probability {prob} of {dz} not in (0, 1]")
        total = math.fsum(prob for _, prob in self.outcomes)
        if abs(total - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities sum to {total}, not 1")

        running, cumulative = 0.0, []
        for _, prob in self.outcomes:
            running += prob
            cumulative.append(running)
        object.__setattr__(self, "cumulative", tuple(cumulative))
        object.__setattr__(
            self,
            "max_norm",
            max(math.sqrt(sum(c * c for c in dz)) for dz in displacements),
        )

    @classmethod
    def from_pairs(cls, pairs) -> "StepDistribution":
        return cls(tuple((tuple(int(c) for c in dz), float(p)) for dz, p in pairs))

    @classmethod
    def from_records(cls, records) -> "StepDistribution":
        return cls.from_pairs((record["dz"], record["p"]) for record in records)

    @property
    def d(self) -> int:
        return len(self.outcomes[0][0])

    @property
    def displacements(self) -> list[Site]:
        return [dz for dz, _ in self.outcomes]

    @property
    def probabilities(self) -> list[float]:
        return [prob for _, prob in self.outcomes]

    def prob(self, dz) -> float:
        dz = tuple(dz)
        for outcome, prob in self.outcomes:
            if outcome == dz:
                return prob
        return 0.0

    def as_dict(self) -> dict[Site, float]:
        return dict(self.outcomes)


def unit_vector(d: int, index: int, sign: int = 1) -> Site:
    v = [0] * d
    v[index] = sign
    return tuple(v)


def symmetric_law(d: int) -> StepDistribution:
    """Each of the 2d nearest neighbours with probability 1/(2d)."""
    q = 1.0 / (2 * d)
    pairs = []
    for i in range(d):
        pairs.append((unit_vector(d, i, 1), q))
        pairs.append((unit_vector(d, i, -1), q))
    return StepDistribution.from_pairs(pairs)


def biased_law(d: int, p: float, axis: int = 0) -> StepDistribution:
    """+e_axis with p/d, -e_axis with (1-p)/d, the other neighbours 1/(2d)."""
    q = 1.0 / (2 * d)
    pairs = []
    for i in range(d):
        if i == axis:
            pairs.append((unit_vector(d, i, 1), p / d))
            if p < 1.0:
                pairs.append((unit_vector(d, i, -1), (1.0 - p) / d))
        else:
            pairs.append((unit_vector(d, i, 1), q))
            pairs.append((unit_vector(d, i, -1), q))
    return StepDistribution.from_pairs(pairs)


@dataclass(frozen=True)
class CookieSet:
    """The set A of sites still holding a first-visit push."""

    kind: CookieSetKind = CookieSetKind.ALL
    lo: float = 0.0
    hi: float = 0.0
    ell: Optional[tuple[float, ...]] = None

    @classmethod
    def from_config(cls, record: dict, direction: Optional[Direction] = None) -> "CookieSet":
        try:
            kind = CookieSetKind(record.get("kind", "all"))
        except ValueError:
            raise ValidationError(f"unknown cookie set kind {record.get('kind')!r}")
        ell = direction.ell if direction is not None else None
        if kind in (CookieSetKind.DEPLETED_STRIP, CookieSetKind.HALF_SPACE) and ell is None:
            raise ValidationError(f"cookie set {kind.value} needs a direction")
        return cls(kind, float(record.get("lo", 0.0)), float(record.get("hi", 0.0)), ell)

    @property
    def is_full(self) -> bool:
        return self.kind == CookieSetKind.ALL

    @property
    def is_empty(self) -> bool:
        return self.kind == CookieSetKind.NONE

    def __contains__(self, site) -> bool:
        if self.kind == CookieSetKind.ALL:
            return True
        if self.kind == CookieSetKind.NONE:
            return False
        level = sum(c * w for c, w in zip(site, self.ell))
        if self.kind == CookieSetKind.DEPLETED_STRIP:
            return not (self.lo <= level < self.hi)
        return level >= self.lo

    @property
    def label(self) -> str:
        if self.is_full:
            return "Z^d"
        if self.is_empty:
            return "empty"
        if self.kind == CookieSetKind.DEPLETED_STRIP:
            return f"Z^d minus strip [{self.lo}, {self.hi})"
        return f"half-space x.l >= {self.lo}"


@dataclass(frozen=True)
class WalkContext:
    site: Site
    first_visit: bool
    visit_count: int
    in_cookie_set: bool

    def __post_init__(self):
        if self.visit_count < 0:
            raise ContractViolation("visit_count must be nonnegative")
        if self.first_visit != (self.visit_count == 0):
            raise ContractViolation(
                f"first_visit={self.first_visit} inconsistent with visit_count={self.visit_count}"
            )


ContextKey = tuple[bool, bool]  # (first_visit, in_cookie_set)
ALL_CONTEXT_KEYS: tuple[ContextKey, ...] = ((True, True), (False, True), (True, False), (False, False))


@dataclass(frozen=True)
class LabelledLaw:
    """A law reachable by a kernel, with the context class it serves."""

    label: str
    first_visit: bool
    in_cookie_set: bool
    law: StepDistribution

    @property
    def is_excited(self) -> bool:
        return self.first_visit and self.in_cookie_set


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    d: int
    cookie_set: CookieSet = CookieSet()
    declared_K: float = 1.0
    p: Optional[float] = None
    table: Optional[dict] = None
    site_overrides: Optional[dict] = None
    law: Optional[StepDistribution] = None
    environment: Optional["EnvironmentModel"] = None
    name: str = ""

    # ---- constructors -------------------------------------------------

    @classmethod
    def standard_erw(cls, p: float, d: int, cookie_set: CookieSet = CookieSet()) -> "KernelSpec":
        # p = 1/2 is kept as the zero-bias control
        if not 0.5 <= p <= 1.0:
            raise ValidationError(f"standard ERW needs p in (1/2, 1], got p={p}")
        if d < 2:
            raise ValidationError(f"standard ERW needs d >= 2, got d={d}")
        table = {
            (True, True): biased_law(d, p),
            (False, True): symmetric_law(d),
            (True, False): symmetric_law(d),
            (False, False): symmetric_law(d),
        }
        return cls(KernelKind.STANDARD_ERW, d, cookie_set, 1.0, p=p, table=table, name=f"standard_erw(p={p})")

    @classmethod
    def symmetric(cls, d: int) -> "KernelSpec":
        """The zero-drift nearest-neighbour walk (the p = 1/2 case)."""
        return cls.martingale(symmetric_law(d), name="symmetric")

    @classmethod
    def martingale(cls, law: StepDistribution, declared_K: Optional[float] = None, name: str = "martingale") -> "KernelSpec":
        return cls(
            KernelKind.MARTINGALE,
            law.d,
            CookieSet(CookieSetKind.NONE),
            declared_K if declared_K is not None else max(1.0, law.max_norm),
            law=law,
            name=name,
        )

    @classmethod
    def generalized(
        cls,
        d: int,
        table: dict,
        declared_K: float,
        cookie_set: CookieSet = CookieSet(),
        site_overrides: Optional[dict] = None,
        name: str = "generalized",
    ) -> "KernelSpec":
        for key, law in table.items():
            if law.d != d:
                raise ValidationError(f"law for context {key} has dimension {law.d}, expected {d}")
        return cls(
            KernelKind.GENERALIZED,
            d,
            cookie_set,
            float(declared_K),
            table=dict(table),
            site_overrides=dict(site_overrides or {}),
            name=name,
        )

    @classmethod
    def from_table(cls, record: dict, cookie_set: CookieSet = CookieSet(), name: str = "generalized") -> "KernelSpec":
        """Build a generalized kernel from a config table record."""
        table = {}
        for context in record["contexts"]:
            key = (bool(context["first_visit"]), bool(context["in_cookie_set"]))
            if key in table:
                raise ValidationError(f"context {key} listed twice in table {name}")
            table[key] = StepDistribution.from_records(context["outcomes"])
        overrides = {
            tuple(int(c) for c in entry["site"]): StepDistribution.from_records(entry["outcomes"])
            for entry in record.get("site_overrides", [])
        }
        return cls.generalized(record["d"], table, record["declared_K"], cookie_set, overrides, name=name)

    @classmethod
    def erwre(cls, environment: "EnvironmentModel", cookie_set: CookieSet = CookieSet()) -> "KernelSpec":
        return cls(KernelKind.ERWRE, environment.d, cookie_set, 1.0, environment=environment, name="erwre")

    def with_cookie_set(self, cookie_set: CookieSet) -> "KernelSpec":
        return replace(self, cookie_set=cookie_set)

    def for_replica(self, replica_index: int) -> "KernelSpec":
        """Kernel seen by one replica; ERWRE replicas each draw their own environment."""
        if self.kind != KernelKind.ERWRE:
            return self
        return replace(self, environment=self.environment.for_replica(replica_index))

    # ---- context handling ---------------------------------------------

    def reachable_keys(self) -> tuple[ContextKey, ...]:
        if self.kind == KernelKind.MARTINGALE:
            return ((True, False), (False, False))
        if self.cookie_set.is_full:
            return ((True, True), (False, True))
        if self.cookie_set.is_empty:
            return ((True, False), (False, False))
        return ALL_CONTEXT_KEYS

    def context_laws(self) -> Optional[dict[ContextKey, StepDistribution]]:
        """Laws keyed on (first_visit, in_cookie_set) when the kernel ignores the site."""
        if self.kind == KernelKind.MARTINGALE:
            return {key: self.law for key in ALL_CONTEXT_KEYS}
        if self.kind == KernelKind.STANDARD_ERW:
            return self.table
        if self.kind == KernelKind.GENERALIZED and not self.site_overrides:
            return self.table
        return None

    def labelled_laws(self) -> Iterator[LabelledLaw]:
        """Every law the kernel can emit (for ERWRE: the extremes of the family support)."""
        if self.kind == KernelKind.ERWRE:
            yield from self.environment.labelled_support(self.reachable_keys())
            return
        if self.kind == KernelKind.MARTINGALE:
            yield LabelledLaw("martingale", False, False, self.law)
            return
        for key in self.reachable_keys():
            if key not in self.table:
                raise ValidationError(
                    f"table of kernel {self.name!r} is incomplete: no law for "
                    f"first_visit={key[0]}, in_cookie_set={key[1]}"
                )
            yield LabelledLaw(f"first_visit={key[0]}, in_cookie_set={key[1]}", key[0], key[1], self.table[key])
        for site, law in (self.site_overrides or {}).items():
            # an override serves every visit to its site
            yield LabelledLaw(f"site override {site}", False, site in self.cookie_set, law)


def step_distribution(kernel: KernelSpec, ctx: WalkContext) -> StepDistribution:
    if len(ctx.site) != kernel.d:
        raise ContractViolation(f"context site has dimension {len(ctx.site)}, kernel has d={kernel.d}")
    if kernel.kind == KernelKind.MARTINGALE:
        return kernel.law
    if kernel.kind == KernelKind.ERWRE:
        # outside A the first visit gets no push: use the revisit law
        visit = ctx.visit_count if ctx.in_cookie_set else max(ctx.visit_count, 1)
        return kernel.environment.site_law(ctx.site, visit)
    if kernel.site_overrides:
        override = kernel.site_overrides.get(tuple(ctx.site))
        if override is not None:
            return override
    law = kernel.table.get((ctx.first_visit, ctx.in_cookie_set))
    if law is None:
        raise MissingContextError(ctx)
    return law


def drift(dist: StepDistribution) -> np.ndarray:
    return np.array(
        [math.fsum(dz[i] * prob for dz, prob in dist.outcomes) for i in range(dist.d)]
    )


def sample_step(dist: StepDistribution, rng: "RngStream") -> Site:
    """Inverse-CDF draw; always consumes exactly one uniform."""
    u = rng.uniform()
    index = bisect_right(dist.cumulative, u)
    if index >= len(dist.outcomes):
        index = len(dist.outcomes) - 1
    return dist.outcomes[index][0]


# ---- condition checks ---------------------------------------------------

def validate_condition_B(kernel: KernelSpec) -> float:
    K = max(entry.law.max_norm for entry in kernel.labelled_laws())
    if K > kernel.declared_K + NORM_TOL:
        raise ValidationError(f"Condition B: largest jump {K} exceeds declared K={kernel.declared_K}")
    return K


@dataclass(frozen=True)
class ExcitationCertificate:
    """Outcome of the C / C+ check. `lam` is None when no context is excited."""

    lam: Optional[float]
    holds_c: bool
    holds_c_plus: bool
    vacuous: bool
    cookie_set: str

    @property
    def condition(self) -> str:
        if self.vacuous:
            return "C_empty"
        suffix = "" if self.cookie_set == "Z^d" else "_A"
        return ("C+" if self.holds_c_plus else "C") + suffix


def _is_zero_drift(law: StepDistribution) -> bool:
    return bool(np.all(np.abs(drift(law)) <= DRIFT_TOL))


def validate_condition_C_plus(kernel: KernelSpec, direction: Direction) -> ExcitationCertificate:
    if direction.d != kernel.d:
        raise ContractViolation(f"direction has d={direction.d}, kernel has d={kernel.d}")
    ell = np.array(direction.ell)
    pushes = []
    for entry in kernel.labelled_laws():
        if entry.is_excited:
            pushes.append(float(drift(entry.law) @ ell))
        elif not _is_zero_drift(entry.law):
            raise ConditionViolation(
                "C", f"nonzero drift {drift(entry.law).tolist()} on context {entry.label}", entry.label
            )
    if not pushes:
        return ExcitationCertificate(None, True, False, True, kernel.cookie_set.label)
    lam = min(pushes)
    return ExcitationCertificate(lam, lam >= -DRIFT_TOL, lam > DRIFT_TOL, False, kernel.cookie_set.label)


def probe_directions(d: int, probe_count: int = 1024) -> np.ndarray:
    """Deterministic unit-sphere grid plus the 2d axis directions."""
    if d == 2:
        angles = 2.0 * np.pi * np.arange(probe_count) / probe_count
        grid = np.column_stack([np.cos(angles), np.sin(angles)])
    elif d == 3:
        # Fibonacci lattice
        i = np.arange(probe_count) + 0.5
        z = 1.0 - 2.0 * i / probe_count
        radius = np.sqrt(1.0 - z * z)
        phi = np.pi * (3.0 - np.sqrt(5.0)) * i
        grid = np.column_stack([radius * np.cos(phi), radius * np.sin(phi), z])
    else:
        points = qmc.Halton(d=d, scramble=False).random(probe_count + 1)[1:]
        gauss = norm.ppf(points)
        grid = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
    axes = np.vstack([np.eye(d), -np.eye(d)])
    return np.vstack([grid, axes])


def _exceedance(law: StepDistribution, directions: np.ndarray, r: float) -> np.ndarray:
    """P[step . l' > r] for every row l' of `directions`."""
    dots = np.array(law.displacements, dtype=float) @ directions.T
    return np.array(law.probabilities) @ (dots > r)


def _condition_E_h(kernel: KernelSpec, ell: np.ndarray, probes: np.ndarray, r: float):
    """Best h for a fixed r, with the binding context/direction."""
    best, witness = math.inf, None
    for entry in kernel.labelled_laws():
        along = float(_exceedance(entry.law, ell[None, :], r)[0])
        if along < best:
            best, witness = along, (entry.label, tuple(ell.tolist()))
        if _is_zero_drift(entry.law):
            values = _exceedance(entry.law, probes, r)
            j = int(np.argmin(values))
            if values[j] < best:
                best, witness = float(values[j]), (entry.label, tuple(probes[j].tolist()))
    return best, witness


def validate_condition_E(kernel: KernelSpec, direction: Direction, probe_count: int = 1024) -> tuple[float, float]:
    K = validate_condition_B(kernel)
    ell = np.array(direction.ell)
    probes = probe_directions(kernel.d, probe_count)
    steps = max(1, math.ceil(4 * K * K - NORM_TOL))
    best_h, best_r, witness = 0.0, None, None
    for k in range(1, steps + 1):
        r = k / (4 * K)
        h, where = _condition_E_h(kernel, ell, probes, r)
        # ties go to the larger r
        if h > 0 and h >= best_h:
            best_h, best_r = h, r
        elif witness is None and h <= 0:
            witness = where
    if best_r is None:
        label, probe = witness if witness else ("?", None)
        raise ConditionViolation("E", f"no (h, r) certifiable; context {label}, direction {probe}", witness)
    return best_h, best_r


def certify_condition_E(kernel: KernelSpec, direction: Direction, h: float, r: float, probe_count: int = 1024) -> bool:
    """Re-check a certified (h, r) by direct enumeration over contexts and probe directions."""
    ell = np.array(direction.ell)
    probes = probe_directions(kernel.d, probe_count)
    for entry in kernel.labelled_laws():
        if _exceedance(entry.law, ell[None, :], r)[0] < h - PROB_TOL:
            return False
        if _is_zero_drift(entry.law) and np.any(_exceedance(entry.law, probes, r) < h - PROB_TOL):
            return False
    return True


def excitation_strength(kernel: KernelSpec, direction: Direction) -> float:
    """First-visit push lambda the kernel would have with cookies everywhere."""
    if kernel.kind == KernelKind.MARTINGALE:
        return 0.0
    certificate = validate_condition_C_plus(kernel.with_cookie_set(CookieSet()), direction)
    return certificate.lam or 0.0
