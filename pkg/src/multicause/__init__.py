"""Maximum-likelihood inference for bivariate normal data whose second score
can be missing for one of several recorded (or unrecorded) causes."""

from .core import (
    TRUE_THETA,
    Dataset,
    FlatModel,
    HierarchicalModel,
    MarLogisticAffine,
    MarLogisticCentered,
    Mcar,
    NmarLogisticCentered,
    Observation,
    ThetaParams,
    Xi,
    partition_by_pattern,
    validate_dataset,
)
from .estimation import FitOptions, FitResult, fit
from .likelihood import LikelihoodKind, direct_loglik, full_loglik, semi_direct_loglik
from .mechanisms import cause_prob, classify_mechanism, pattern_probs
from .simulation import run_scenario, scenario_spec, simulate

__version__ = "0.1.0"
