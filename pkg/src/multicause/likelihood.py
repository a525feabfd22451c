"""Bivariate-normal densities, Gauss-Hermite quadrature and the three log-likelihoods.

* full (``full_loglik``): joint law of outcomes and the cause-coded indicator,
  integrating the missing ``y2`` out of every NMAR factor.
* semi-direct (``semi_direct_loglik``): the full likelihood of a hierarchical
  model with every factor of MAR/MCAR causes deleted.
* direct (``direct_loglik``): observed-outcome density only.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.laguerre import laggauss

from . import _kernel
from .core import (
    CauseMechanismSpec,
    Dataset,
    DatasetError,
    FlatModel,
    HierarchicalModel,
    ThetaParams,
    mechanism_params,
    validate_dataset,
)
from .mechanisms import InvalidFlatModelError, cause_prob, depends_on_y2

DEFAULT_QUADRATURE_ORDER = 40
MAX_QUADRATURE_ORDER = 200
# Gauss-Laguerre order for the remainder of steep NMAR factors.
STEEP_RULE_ORDER = 40


class LikelihoodKind(str, enum.Enum):
    FULL = "full"
    SEMI_DIRECT = "semi_direct"
    DIRECT = "direct"


class ModelStructureError(TypeError):
    """The likelihood is not defined for this model structure."""


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for integrals against the standard-normal density."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for name in ("nodes", "weights"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.nodes)

    def integrate(self, g, mean=0.0, sd=1.0):
        """``E[g(X)]`` for ``X ~ N(mean, sd**2)``."""
        return float(np.dot(self.weights, g(mean + sd * self.nodes)))


@functools.lru_cache(maxsize=None)
def gauss_hermite(n: int = DEFAULT_QUADRATURE_ORDER) -> QuadratureRule:
    """``n``-point Gauss-Hermite rule for the standard-normal weight.

    Exact for polynomials of degree up to ``2n - 1``.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUADRATURE_ORDER:
        raise ValueError(f"quadrature order must be an integer in [1, {MAX_QUADRATURE_ORDER}], got {n!r}")
    x, w = hermegauss(int(n))
    # Exact mirror symmetry.
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return QuadratureRule(x, w / math.sqrt(2.0 * math.pi))


def biv_normal_logpdf(theta: ThetaParams, y1, y2):
    u = (np.asarray(y1, float) - theta.mu1) / theta.sigma1
    v = (np.asarray(y2, float) - theta.mu2) / theta.sigma2
    r2 = 1.0 - theta.rho ** 2
    q = (u * u - 2.0 * theta.rho * u * v + v * v) / r2
    return (-math.log(2.0 * math.pi * theta.sigma1 * theta.sigma2 * math.sqrt(r2)) - 0.5 * q)[()]


def normal_logpdf(y, mean: float, sd: float):
    u = (np.asarray(y, float) - mean) / sd
    return (-0.5 * u * u - math.log(sd) - 0.5 * math.log(2.0 * math.pi))[()]


def conditional_y2(theta: ThetaParams, y1):
    """Mean and sd of ``y2`` given ``y1``."""
    mean = theta.mu2 + theta.rho * theta.sigma2 / theta.sigma1 * (np.asarray(y1, float) - theta.mu1)
    return mean[()], theta.sigma2 * math.sqrt(1.0 - theta.rho ** 2)


def expected_mech_given_y1(mech: CauseMechanismSpec, theta: ThetaParams, y1: float,
                           quad: QuadratureRule | None = None) -> float:
    """``E[P(mech | y1, Y2) | Y1 = y1]`` under the outcome model.

    Uses ``quad`` unless the logistic is steep relative to the conditional sd,
    where the likelihood kernel's step-plus-remainder split takes over.
    """
    if not depends_on_y2(mech):
        return float(cause_prob(mech, y1))
    quad = quad or gauss_hermite()
    mean, sd = conditional_y2(theta, y1)
    a, b = mech.tau_a, mech.tau_b
    lt, lw = _steep_rule()
    with np.errstate(over="ignore"):
        e = np.exp(a * sd * quad.nodes)
    ep, _ = _kernel._expected_prob_surv(a, b, float(mean), sd, quad.nodes, quad.weights,
                                        math.exp(min(a * (mean - b), 700.0)), e, lt, lw)
    return float(ep)


@dataclass(frozen=True)
class LoglikValue:
    value: float
    kind: LikelihoodKind

    def __float__(self):
        return self.value


# ---------------------------------------------------------------------------
# Kernel plumbing

# Dropping negligible tail nodes changes integrals by far less than 1e-16.
_NODE_WEIGHT_CUTOFF = 1e-20


@dataclass(frozen=True)
class KernelSpec:
    """Everything the compiled kernel needs besides ``theta`` and mechanism values."""

    kinds: np.ndarray
    include: np.ndarray
    flat: bool
    merged: bool
    z: np.ndarray
    w: np.ndarray
    lt: np.ndarray
    lw: np.ndarray


def model_arrays(model):
    kinds = np.array([m.kind for m in model.causes], dtype=np.int64)
    ta = np.zeros(len(kinds))
    tb = np.zeros(len(kinds))
    for c, mech in enumerate(model.causes):
        params = mechanism_params(mech)
        ta[c] = params[0]
        if len(params) > 1:
            tb[c] = params[1]
    return kinds, ta, tb


@functools.lru_cache(maxsize=None)
def _steep_rule():
    t, w = laggauss(STEEP_RULE_ORDER)
    w = w / (1.0 + np.exp(-t))
    keep = w > _NODE_WEIGHT_CUTOFF * w.max()
    return np.ascontiguousarray(t[keep]), np.ascontiguousarray(w[keep])


def kernel_spec(model, kind: LikelihoodKind, quad: QuadratureRule | None = None,
                causes_known: bool = True) -> KernelSpec:
    kind = LikelihoodKind(kind)
    flat = isinstance(model, FlatModel)
    if not isinstance(model, (HierarchicalModel, FlatModel)):
        raise ModelStructureError(f"not a cause model: {model!r}")
    if kind is LikelihoodKind.SEMI_DIRECT:
        if flat:
            raise ModelStructureError("the semi-direct likelihood needs a hierarchical model")
        if not causes_known:
            raise ModelStructureError("the semi-direct likelihood needs known causes")
        include = np.array([depends_on_y2(m) for m in model.causes])
    elif kind is LikelihoodKind.DIRECT:
        include = np.zeros(model.cause_count, dtype=bool)
    else:
        include = np.ones(model.cause_count, dtype=bool)
    quad = quad or gauss_hermite()
    keep = quad.weights > _NODE_WEIGHT_CUTOFF * quad.weights.max()
    kinds, _, _ = model_arrays(model)
    lt, lw = _steep_rule()
    return KernelSpec(kinds, include, flat, not causes_known and kind is not LikelihoodKind.DIRECT,
                      np.ascontiguousarray(quad.nodes[keep]), np.ascontiguousarray(quad.weights[keep]), lt, lw)


def evaluate_kernel(spec: KernelSpec, theta: ThetaParams, ta, tb, dataset: Dataset, out=None):
    if out is None:
        out = np.empty(len(dataset))
    total = _kernel.record_logliks(
        theta.mu1, theta.mu2, theta.sigma1, theta.sigma2, theta.rho,
        spec.kinds, ta, tb, spec.include, spec.flat, spec.merged,
        dataset.y1, dataset.y2, dataset.m2, spec.z, spec.w, spec.lt, spec.lw, out)
    return total, out


def _check(dataset: Dataset, model=None):
    report = validate_dataset(dataset)
    if not report.valid:
        raise DatasetError("; ".join(report.violations))
    if model is not None and model.cause_count < dataset.cause_count:
        raise DatasetError(f"model declares {model.cause_count} causes, dataset uses {dataset.cause_count}")


def record_contributions(model, theta: ThetaParams, dataset: Dataset, kind=LikelihoodKind.FULL,
                         quad: QuadratureRule | None = None, causes_known: bool = True) -> np.ndarray:
    """Per-record log-likelihood terms, in record order."""
    _check(dataset, model)
    spec = kernel_spec(model, kind, quad, causes_known)
    _, ta, tb = model_arrays(model)
    total, out = evaluate_kernel(spec, theta, ta, tb, dataset)
    if math.isnan(total):
        raise InvalidFlatModelError("flat-model cause probabilities reach 1 at an evaluated point")
    return out


def full_loglik(model, theta: ThetaParams, dataset: Dataset, quad: QuadratureRule | None = None,
                causes_known: bool = True) -> LoglikValue:
    """Full log-likelihood.

    With ``causes_known=False`` every missing record is treated as "missing,
    cause unknown" and contributes the total missingness probability.
    """
    out = record_contributions(model, theta, dataset, LikelihoodKind.FULL, quad, causes_known)
    return LoglikValue(float(out.sum()), LikelihoodKind.FULL)


def semi_direct_loglik(model: HierarchicalModel, theta: ThetaParams, dataset: Dataset,
                       quad: QuadratureRule | None = None) -> LoglikValue:
    if not isinstance(model, HierarchicalModel):
        raise ModelStructureError("the semi-direct likelihood needs a hierarchical model")
    out = record_contributions(model, theta, dataset, LikelihoodKind.SEMI_DIRECT, quad)
    return LoglikValue(float(out.sum()), LikelihoodKind.SEMI_DIRECT)


def direct_loglik(theta: ThetaParams, dataset: Dataset) -> LoglikValue:
    _check(dataset)
    complete = dataset.m2 == 0
    value = (np.sum(biv_normal_logpdf(theta, dataset.y1[complete], dataset.y2[complete]))
             + np.sum(normal_logpdf(dataset.y1[~complete], theta.mu1, theta.sigma1)))
    return LoglikValue(float(value), LikelihoodKind.DIRECT)
