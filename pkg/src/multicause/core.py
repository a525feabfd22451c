"""Domain types for cause-coded incomplete bivariate data.

Two waves are modelled: ``y1`` is always observed, ``y2`` may be missing,
and ``m2`` records why. ``m2 == 0`` means observed; ``m2 == c`` (``c >= 1``)
means missing because of cause ``c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np


class DatasetError(ValueError):
    """Raised when an operation needs a valid dataset and gets an invalid one."""


@dataclass(frozen=True)
class ThetaParams:
    """Bivariate-normal outcome parameters."""

    mu1: float
    mu2: float
    sigma1: float
    sigma2: float
    rho: float

    def __post_init__(self):
        for name in ("mu1", "mu2", "sigma1", "sigma2", "rho"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("sigma1 and sigma2 must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho!r}")

    NAMES = ("mu1", "mu2", "sigma1", "sigma2", "rho")

    def as_tuple(self) -> tuple:
        return (self.mu1, self.mu2, self.sigma1, self.sigma2, self.rho)

    def to_dict(self) -> dict:
        return dict(zip(self.NAMES, self.as_tuple()))

    @classmethod
    def from_dict(cls, d: dict) -> "ThetaParams":
        missing = [k for k in cls.NAMES if k not in d]
        if missing:
            raise KeyError(f"theta is missing field(s): {', '.join(missing)}")
        return cls(*(float(d[k]) for k in cls.NAMES))


# True outcome parameters of the simulation study.
TRUE_THETA = ThetaParams(mu1=50.0, mu2=50.0, sigma1=15.0, sigma2=15.0, rho=0.6)


# ---------------------------------------------------------------------------
# Per-cause mechanism specifications
#
# ``kind`` is the integer tag the compiled likelihood kernel switches on.
# ``param_fields`` lists the free parameters in a fixed order.


@dataclass(frozen=True)
class Mcar:
    """Constant missingness probability ``p``."""

    p: float

    kind = 0
    variant = "mcar"
    param_fields = ("p",)

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"Mcar probability must lie in (0, 1), got {self.p!r}")


@dataclass(frozen=True)
class MarLogisticCentered:
    """``1 / (1 + exp(tau_a * (y1 - tau_b)))``."""

    tau_a: float
    tau_b: float

    kind = 1
    variant = "mar_logistic_centered"
    param_fields = ("tau_a", "tau_b")


@dataclass(frozen=True)
class MarLogisticAffine:
    """``1 / (1 + exp(tau_a_prime * y1 + tau_b_prime))``."""

    tau_a_prime: float
    tau_b_prime: float

    kind = 2
    variant = "mar_logistic_affine"
    param_fields = ("tau_a_prime", "tau_b_prime")


@dataclass(frozen=True)
class NmarLogisticCentered:
    """``1 / (1 + exp(tau_a * (y2 - tau_b)))``; depends on the missing score."""

    tau_a: float
    tau_b: float

    kind = 3
    variant = "nmar_logistic_centered"
    param_fields = ("tau_a", "tau_b")


CauseMechanismSpec = Union[Mcar, MarLogisticCentered, MarLogisticAffine, NmarLogisticCentered]

MECHANISM_VARIANTS = {
    cls.variant: cls for cls in (Mcar, MarLogisticCentered, MarLogisticAffine, NmarLogisticCentered)
}


def mechanism_params(mech: CauseMechanismSpec) -> tuple:
    return tuple(getattr(mech, f) for f in mech.param_fields)


def param_names(code: int, mech: CauseMechanismSpec) -> tuple:
    """Flat names for a cause's parameters, e.g. ``tau2a`` or ``p1``."""
    if isinstance(mech, Mcar):
        return (f"p{code}",)
    suffix = "_prime" if isinstance(mech, MarLogisticAffine) else ""
    return (f"tau{code}a{suffix}", f"tau{code}b{suffix}")


def mechanism_from_dict(d: dict) -> CauseMechanismSpec:
    variant = d.get("variant")
    if variant not in MECHANISM_VARIANTS:
        raise ValueError(f"unknown mechanism variant {variant!r}")
    cls = MECHANISM_VARIANTS[variant]
    params = d.get("params", {})
    missing = [f for f in cls.param_fields if f not in params]
    if missing:
        raise KeyError(f"{variant} is missing parameter(s): {', '.join(missing)}")
    return cls(*(float(params[f]) for f in cls.param_fields))


def mechanism_to_dict(mech: CauseMechanismSpec) -> dict:
    return {"variant": mech.variant,
            "params": {f: getattr(mech, f) for f in mech.param_fields}}


@dataclass(frozen=True)
class _CauseModel:
    causes: tuple

    def __post_init__(self):
        object.__setattr__(self, "causes", tuple(self.causes))
        if not self.causes:
            raise ValueError("a model needs at least one cause")

    @property
    def cause_count(self) -> int:
        return len(self.causes)

    def replace_cause(self, code: int, mech: CauseMechanismSpec) -> "HierarchicalModel":
        causes = list(self.causes)
        causes[code - 1] = mech
        return type(self)(tuple(causes))

    def replace_causes(self, causes) -> "_CauseModel":
        return type(self)(tuple(causes))


@dataclass(frozen=True)
class HierarchicalModel(_CauseModel):
    """Causes in priority order: ``causes[0]`` is cause 1, the strongest.

    Each mechanism is the conditional probability of its cause given that
    no stronger cause has fired.
    """


@dataclass(frozen=True)
class FlatModel(_CauseModel):
    """Causes compete additively: ``P(observed) = 1 - sum_c P_c``.

    Whether a cause is MAR or NMAR follows from its variant, see
    :func:`multicause.mechanisms.classify_mechanism`.
    """


@dataclass(frozen=True)
class Xi:
    """Outcome parameters together with the mechanism model they pair with."""

    theta: ThetaParams
    model: "HierarchicalModel | FlatModel"


# ---------------------------------------------------------------------------
# Data


@dataclass(frozen=True)
class Observation:
    y1: float
    y2: Optional[float]
    m2: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Cause-coded records stored column-wise.

    ``y2`` holds ``nan`` where the score is missing. Construction does not
    validate; use :func:`validate_dataset`.
    """

    y1: np.ndarray
    y2: np.ndarray
    m2: np.ndarray
    cause_count: int

    def __post_init__(self):
        y1 = np.array(self.y1, dtype=float)
        y2 = np.array(self.y2, dtype=float)
        m2 = np.array(self.m2, dtype=np.int64)
        if not (y1.ndim == y2.ndim == m2.ndim == 1) or not (len(y1) == len(y2) == len(m2)):
            raise ValueError("y1, y2 and m2 must be 1-d arrays of equal length")
        for arr in (y1, y2, m2):
            arr.flags.writeable = False
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "m2", m2)

    @classmethod
    def from_records(cls, records: Iterable, cause_count: int) -> "Dataset":
        y1, y2, m2 = [], [], []
        for r in records:
            if not isinstance(r, Observation):
                r = Observation(*r)
            y1.append(r.y1)
            y2.append(np.nan if r.y2 is None else r.y2)
            m2.append(r.m2)
        return cls(np.asarray(y1, float), np.asarray(y2, float), np.asarray(m2, np.int64), cause_count)

    def __len__(self) -> int:
        return len(self.y1)

    def __iter__(self) -> Iterator[Observation]:
        return iter(self.records)

    @property
    def records(self) -> list:
        return [Observation(float(a), None if np.isnan(b) else float(b), int(m))
                for a, b, m in zip(self.y1, self.y2, self.m2)]

    @property
    def complete(self) -> np.ndarray:
        return self.m2 == 0

    def subset(self, index: Sequence[int]) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.y1[index], self.y2[index], self.m2[index], self.cause_count)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.cause_count == other.cause_count
                and np.array_equal(self.y1, other.y1)
                and np.array_equal(self.y2, other.y2, equal_nan=True)
                and np.array_equal(self.m2, other.m2))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = field(default_factory=tuple)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.valid


def validate_dataset(d: Dataset) -> ValidationReport:
    violations = []
    if len(d) == 0:
        violations.append("dataset is empty")
    if d.cause_count < 1:
        violations.append(f"cause_count must be >= 1, got {d.cause_count}")
    for i, (y1, y2, m2) in enumerate(zip(d.y1, d.y2, d.m2)):
        if not np.isfinite(y1):
            violations.append(f"record {i}: y1 is not a finite number")
        if m2 < 0:
            violations.append(f"record {i}: negative cause code {m2}")
        elif m2 > d.cause_count:
            violations.append(f"record {i}: cause code {m2} exceeds C={d.cause_count}")
        if m2 == 0 and not np.isfinite(y2):
            violations.append(f"record {i}: y2 missing but m2 = 0")
        if m2 != 0 and not np.isnan(y2):
            violations.append(f"record {i}: y2 present but marked missing (m2={m2})")
    return ValidationReport(tuple(violations))


@dataclass(frozen=True)
class PatternPartition:
    index_sets: dict

    def __getitem__(self, label: int) -> np.ndarray:
        return self.index_sets[label]


def partition_by_pattern(d: Dataset) -> PatternPartition:
    report = validate_dataset(d)
    if not report.valid:
        raise DatasetError("; ".join(report.violations))
    idx = np.arange(len(d))
    return PatternPartition({ell: idx[d.m2 == ell] for ell in range(d.cause_count + 1)})
