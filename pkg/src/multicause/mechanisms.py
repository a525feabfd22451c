"""Per-cause missingness probabilities and their composition into patterns."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .core import (
    CauseMechanismSpec,
    FlatModel,
    HierarchicalModel,
    MarLogisticAffine,
    MarLogisticCentered,
    Mcar,
    NmarLogisticCentered,
)

# Applied before every logarithm.
PROB_FLOOR = 1e-300
PROB_CEIL = 1.0 - 1e-16

MCAR_SLOPE_TOL = 1e-8


class MissingCovariateError(ValueError):
    """An NMAR mechanism was evaluated without the missing score."""


class InvalidFlatModelError(ValueError):
    """Flat-model cause probabilities sum to one or more at some point."""


class MechanismClass(str, enum.Enum):
    MCAR = "MCAR"
    MAR = "MAR"
    NMAR = "NMAR"


def classify_mechanism(mech: CauseMechanismSpec) -> MechanismClass:
    if isinstance(mech, Mcar):
        return MechanismClass.MCAR
    if isinstance(mech, (MarLogisticCentered, MarLogisticAffine)):
        return MechanismClass.MAR
    if isinstance(mech, NmarLogisticCentered):
        return MechanismClass.NMAR
    raise TypeError(f"not a mechanism spec: {mech!r}")


def depends_on_y2(mech: CauseMechanismSpec) -> bool:
    return classify_mechanism(mech) is MechanismClass.NMAR


def clamp_prob(p):
    return np.clip(p, PROB_FLOOR, PROB_CEIL)


def cause_prob(mech: CauseMechanismSpec, y1, y2=None):
    """Probability that ``mech`` fires at ``(y1, y2)``.

    Works elementwise on arrays. MAR variants ignore ``y2`` and the MCAR
    variant ignores both scores.
    """
    if isinstance(mech, Mcar):
        return np.full(np.shape(y1), mech.p)[()] if np.ndim(y1) else mech.p
    if isinstance(mech, MarLogisticCentered):
        return expit(-mech.tau_a * (np.asarray(y1, float) - mech.tau_b))[()]
    if isinstance(mech, MarLogisticAffine):
        return expit(-(mech.tau_a_prime * np.asarray(y1, float) + mech.tau_b_prime))[()]
    if isinstance(mech, NmarLogisticCentered):
        if y2 is None:
            raise MissingCovariateError("NMAR mechanism needs y2")
        return expit(-mech.tau_a * (np.asarray(y2, float) - mech.tau_b))[()]
    raise TypeError(f"not a mechanism spec: {mech!r}")


def _survival(mech, y1, y2):
    # 1 - P computed without cancellation for the logistic variants.
    if isinstance(mech, Mcar):
        return 1.0 - mech.p
    if isinstance(mech, MarLogisticCentered):
        return expit(mech.tau_a * (np.asarray(y1, float) - mech.tau_b))[()]
    if isinstance(mech, MarLogisticAffine):
        return expit(mech.tau_a_prime * np.asarray(y1, float) + mech.tau_b_prime)[()]
    if y2 is None:
        raise MissingCovariateError("NMAR mechanism needs y2")
    return expit(mech.tau_a * (np.asarray(y2, float) - mech.tau_b))[()]


@dataclass(frozen=True)
class MechanismEvaluation:
    cause_probs: dict
    observe_prob: float

    def as_vector(self) -> np.ndarray:
        """Probabilities of patterns ``0..C`` in order."""
        return np.array([self.observe_prob] + [self.cause_probs[c] for c in sorted(self.cause_probs)])


def hierarchical_pattern_probs(model: HierarchicalModel, y1: float, y2: Optional[float]) -> MechanismEvaluation:
    """Sequential survival: cause ``c`` fires only if every stronger cause did not."""
    probs = {}
    alive = 1.0
    for code, mech in enumerate(model.causes, start=1):
        probs[code] = float(alive * cause_prob(mech, y1, y2))
        alive *= float(_survival(mech, y1, y2))
    return MechanismEvaluation(probs, alive)


def flat_pattern_probs(model: FlatModel, y1: float, y2: Optional[float]) -> MechanismEvaluation:
    probs = {code: float(cause_prob(mech, y1, y2)) for code, mech in enumerate(model.causes, start=1)}
    total = math.fsum(probs.values())
    if total >= 1.0:
        raise InvalidFlatModelError(
            f"cause probabilities sum to {total:.6g} >= 1 at y1={y1}, y2={y2}")
    return MechanismEvaluation(probs, 1.0 - total)


def pattern_probs(model, y1, y2) -> MechanismEvaluation:
    if isinstance(model, FlatModel):
        return flat_pattern_probs(model, y1, y2)
    if isinstance(model, HierarchicalModel):
        return hierarchical_pattern_probs(model, y1, y2)
    raise TypeError(f"not a cause model: {model!r}")


def mcar_equivalent(affine: MarLogisticAffine, slope_tol: float = MCAR_SLOPE_TOL) -> Optional[float]:
    """Constant probability an affine-logistic mechanism reduces to, if flat.

    ``tau_a_prime == 0`` with ``tau_b_prime == -logit(p)`` is exactly MCAR(p).
    """
    if abs(affine.tau_a_prime) > slope_tol:
        return None
    return float(expit(-affine.tau_b_prime))
