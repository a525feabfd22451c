"""Maximum-likelihood fitting.

The optimizer works in a transformed space where every coordinate is
unconstrained: log for standard deviations, atanh for the correlation,
logit for MCAR probabilities, identity elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, logit

from . import _kernel
from ._neldermead import nelder_mead, nelder_mead_jit
from .core import (
    Dataset,
    DatasetError,
    FlatModel,
    HierarchicalModel,
    MarLogisticAffine,
    MarLogisticCentered,
    Mcar,
    NmarLogisticCentered,
    ThetaParams,
    Xi,
    mechanism_params,
    param_names,
    validate_dataset,
)
from .likelihood import (
    DEFAULT_QUADRATURE_ORDER,
    LikelihoodKind,
    ModelStructureError,
    gauss_hermite,
    kernel_spec,
    model_arrays,
)
from .mechanisms import depends_on_y2

WEAK_CURVATURE = 1e-6


class NonFiniteStartError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Parameter transforms


def _mech_to_free(mech) -> list:
    if isinstance(mech, Mcar):
        return [float(logit(mech.p))]
    return list(mechanism_params(mech))


def _mech_from_free(template, values):
    if isinstance(template, Mcar):
        # expit underflows to 0 below about -745; keep p inside (0, 1).
        return Mcar(float(np.clip(expit(values[0]), _kernel.PROB_FLOOR, _kernel.PROB_CEIL)))
    return type(template)(float(values[0]), float(values[1]))


@dataclass(frozen=True)
class ParameterLayout:
    """Maps ``(theta, model)`` to and from the optimizer's free vector.

    Causes not listed in ``free_causes`` (0-based) keep the template's values.
    """

    template: object
    free_causes: tuple

    @classmethod
    def for_fit(cls, model, kind: LikelihoodKind) -> "ParameterLayout":
        kind = LikelihoodKind(kind)
        if kind is LikelihoodKind.FULL:
            free = tuple(range(model.cause_count))
        elif kind is LikelihoodKind.SEMI_DIRECT:
            free = tuple(c for c, m in enumerate(model.causes) if depends_on_y2(m))
        else:
            free = ()
        return cls(model, free)

    @property
    def names(self) -> tuple:
        out = list(ThetaParams.NAMES)
        for c in self.free_causes:
            out.extend(param_names(c + 1, self.template.causes[c]))
        return tuple(out)

    @property
    def dim(self) -> int:
        return len(self.names)

    def pack(self, theta: ThetaParams, model=None) -> np.ndarray:
        model = model or self.template
        x = [theta.mu1, theta.mu2, math.log(theta.sigma1), math.log(theta.sigma2), math.atanh(theta.rho)]
        for c in self.free_causes:
            x.extend(_mech_to_free(model.causes[c]))
        return np.array(x, dtype=float)

    def unpack(self, x) -> Xi:
        x = np.asarray(x, dtype=float)
        theta = ThetaParams(float(x[0]), float(x[1]), math.exp(x[2]), math.exp(x[3]), math.tanh(x[4]))
        causes = list(self.template.causes)
        j = 5
        for c in self.free_causes:
            k = len(causes[c].param_fields)
            causes[c] = _mech_from_free(causes[c], x[j:j + k])
            j += k
        return Xi(theta, self.template.replace_causes(causes))

    def natural(self, x) -> dict:
        """Estimated parameters by name, on their natural scale."""
        xi = self.unpack(x)
        values = list(xi.theta.as_tuple())
        for c in self.free_causes:
            values.extend(mechanism_params(xi.model.causes[c]))
        return dict(zip(self.names, values))


# ---------------------------------------------------------------------------
# Optimizer


@dataclass(frozen=True)
class MaximizeOptions:
    fatol: float = 1e-10
    xatol: float = 1e-8
    max_iter_per_dim: int = 5000
    restarts: int = 3
    restart_scale: float = 0.1


@dataclass(frozen=True)
class MaximizeResult:
    x: np.ndarray
    value: float
    converged: bool
    iterations: int
    evaluations: int
    runs: tuple = ()
    message: str = ""


def _restart_signs(k: int, dim: int) -> np.ndarray:
    if k % 3 == 0:
        return np.ones(dim)
    if k % 3 == 1:
        return -np.ones(dim)
    return np.where(np.arange(dim) % 2 == 0, 1.0, -1.0)


def maximize(objective: Callable, start, opts: MaximizeOptions = MaximizeOptions()) -> MaximizeResult:
    """Nelder-Mead ascent with deterministic restarts around the incumbent.

    A run stops once the simplex's function spread is below ``fatol`` and its
    diameter below ``xatol``, or at ``max_iter_per_dim * dim`` iterations.
    Each restart perturbs the best point so far by ``restart_scale`` of each
    coordinate's magnitude (at least ``restart_scale``), alternating signs.
    """
    return _maximize(nelder_mead, lambda x, _: objective(x), None, start, opts)


def _maximize(runner, f, args, start, opts: MaximizeOptions) -> MaximizeResult:
    start = np.asarray(start, dtype=float)
    f0 = f(start, args)
    if not np.isfinite(f0):
        raise NonFiniteStartError(f"objective is not finite at the start point ({f0!r})")
    dim = start.size
    max_iter = opts.max_iter_per_dim * dim
    runs = []
    best_x, best_f, best_ok = start, f0, False
    iterations = evaluations = 0
    x0 = start
    for k in range(opts.restarts + 1):
        if k > 0:
            x0 = best_x + _restart_signs(k - 1, dim) * opts.restart_scale * np.maximum(np.abs(best_x), 1.0)
            if not np.isfinite(f(x0, args)):
                runs.append(("skipped", 0, -np.inf))
                continue
        x, value, nit, nfev, status = runner(f, args, x0, opts.fatol, opts.xatol, max_iter, 10 * max_iter)
        iterations += int(nit)
        evaluations += int(nfev)
        runs.append((int(status), int(nit), float(value)))
        if value > best_f or (k == 0 and value >= best_f):
            best_x, best_f, best_ok = np.array(x), float(value), status == 0
    message = "converged" if best_ok else "best run stopped at the iteration cap"
    return MaximizeResult(best_x, best_f, best_ok, iterations, evaluations, tuple(runs), message)


# ---------------------------------------------------------------------------
# Identifiability probe


@dataclass(frozen=True)
class HessianSpectrum:
    eigenvalues: np.ndarray
    finite: bool = True

    @property
    def min_abs(self) -> float:
        return float(np.min(np.abs(self.eigenvalues))) if self.finite else math.nan

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.eigenvalues))) if self.finite else math.nan

    @property
    def condition(self) -> float:
        if not self.finite:
            return math.nan
        lo = self.min_abs
        return math.inf if lo == 0.0 else self.max_abs / lo

    @property
    def weakly_identified(self) -> bool:
        return (not self.finite) or self.min_abs < WEAK_CURVATURE

    def to_dict(self) -> dict:
        return {"eigenvalues": [float(v) for v in self.eigenvalues], "min_abs": self.min_abs,
                "max_abs": self.max_abs, "condition": self.condition,
                "weakly_identified": self.weakly_identified, "finite": self.finite}


def numerical_hessian(objective: Callable, point, rel_step: float = 1e-4) -> np.ndarray:
    x = np.asarray(point, dtype=float)
    d = x.size
    h = rel_step * (1.0 + np.abs(x))
    f0 = objective(x)
    H = np.empty((d, d))

    def f(shift):
        return objective(x + shift)

    e = np.eye(d) * h
    for i in range(d):
        H[i, i] = (f(e[i]) - 2.0 * f0 + f(-e[i])) / h[i] ** 2
        for j in range(i):
            v = (f(e[i] + e[j]) - f(e[i] - e[j]) - f(e[j] - e[i]) + f(-e[i] - e[j])) / (4.0 * h[i] * h[j])
            H[i, j] = H[j, i] = v
    return H


def hessian_probe(objective: Callable, point, rel_step: float = 1e-4) -> HessianSpectrum:
    """Central-difference Hessian eigenvalues at ``point``, sorted ascending."""
    H = numerical_hessian(objective, point, rel_step)
    if not np.all(np.isfinite(H)):
        return HessianSpectrum(np.full(len(H), np.nan), finite=False)
    return HessianSpectrum(np.linalg.eigvalsh(0.5 * (H + H.T)))


# ---------------------------------------------------------------------------
# Fitting


def default_start(dataset: Dataset, model, causes_known: bool = True) -> Xi:
    """Moment-based starting values.

    Logistic slopes start at ``1 / sd`` of their covariate with the midpoint
    at its median; MCAR probabilities at the observed cause frequency, or the
    missing fraction split evenly over causes when causes are unknown.
    """
    cc = dataset.m2 == 0
    if cc.sum() < 2:
        raise DatasetError("at least 2 complete records are needed for starting values")
    y1c, y2c = dataset.y1[cc], dataset.y2[cc]
    s1, s2 = float(np.std(y1c)), float(np.std(y2c))
    if s1 <= 0 or s2 <= 0:
        raise DatasetError("complete records have zero spread")
    r = float(np.clip(np.corrcoef(y1c, y2c)[0, 1], -0.99, 0.99))
    theta = ThetaParams(float(np.mean(y1c)), float(np.mean(y2c)), s1, s2, r)

    n = len(dataset)
    sd_y1 = float(np.std(dataset.y1)) or 1.0
    med_y1 = float(np.median(dataset.y1))
    causes = []
    for code, mech in enumerate(model.causes, start=1):
        if isinstance(mech, Mcar):
            if causes_known:
                freq = float(np.mean(dataset.m2 == code))
            else:
                freq = float(np.mean(dataset.m2 != 0)) / model.cause_count
            causes.append(Mcar(float(np.clip(freq, 0.5 / n, 1 - 0.5 / n))))
        elif isinstance(mech, MarLogisticCentered):
            causes.append(MarLogisticCentered(1.0 / sd_y1, med_y1))
        elif isinstance(mech, MarLogisticAffine):
            causes.append(MarLogisticAffine(1.0 / sd_y1, -med_y1 / sd_y1))
        elif isinstance(mech, NmarLogisticCentered):
            causes.append(NmarLogisticCentered(1.0 / s2, float(np.median(y2c))))
        else:
            raise TypeError(f"not a mechanism spec: {mech!r}")
    return Xi(theta, model.replace_causes(causes))


@dataclass(frozen=True)
class FitOptions:
    quad_order: int = DEFAULT_QUADRATURE_ORDER
    maximize: MaximizeOptions = field(default_factory=MaximizeOptions)
    probe: bool = False
    start: Optional[Xi] = None


@dataclass(frozen=True)
class FitResult:
    theta: ThetaParams
    model: object
    kind: LikelihoodKind
    causes_known: bool
    estimates: dict
    loglik: float
    converged: bool
    iterations: int
    evaluations: int
    hessian: Optional[HessianSpectrum] = None
    message: str = ""

    @property
    def xi_hat(self) -> Xi:
        return Xi(self.theta, self.model)

    @property
    def estimated(self) -> tuple:
        return tuple(self.estimates)


def objective_args(model, kind, dataset: Dataset, layout: ParameterLayout,
                   quad_order: int = DEFAULT_QUADRATURE_ORDER, causes_known: bool = True) -> tuple:
    """Argument tuple for the compiled objective ``_kernel.loglik_from_free``."""
    spec = kernel_spec(model, kind, gauss_hermite(quad_order), causes_known)
    _, ta0, tb0 = model_arrays(model)
    cause, pos, mcar = [], [], []
    j = 5
    for c in layout.free_causes:
        is_mcar = isinstance(model.causes[c], Mcar)
        cause.append(c)
        pos.append(j)
        mcar.append(is_mcar)
        j += 1 if is_mcar else 2
    return (spec.kinds, ta0, tb0, spec.include, spec.flat, spec.merged,
            dataset.y1, dataset.y2, dataset.m2, spec.z, spec.w, spec.lt, spec.lw,
            np.array(cause, dtype=np.int64), np.array(pos, dtype=np.int64),
            np.array(mcar, dtype=np.bool_), np.empty(len(dataset)))


def make_objective(model, kind, dataset: Dataset, layout: ParameterLayout,
                   quad_order: int = DEFAULT_QUADRATURE_ORDER, causes_known: bool = True) -> Callable:
    """Log-likelihood as a function of the transformed parameter vector.

    Returns ``-inf`` where the parameters are invalid or the likelihood is
    not finite.
    """
    args = objective_args(model, kind, dataset, layout, quad_order, causes_known)
    return lambda x: float(_kernel.loglik_from_free(np.asarray(x, dtype=float), args))


def fit(model, kind, dataset: Dataset, opts: FitOptions = FitOptions(), causes_known: bool = True) -> FitResult:
    """Maximize the chosen log-likelihood.

    ``direct`` estimates theta only, ``semi_direct`` theta plus the NMAR
    causes' parameters, ``full`` theta plus every cause's parameters.
    """
    kind = LikelihoodKind(kind)
    if not isinstance(model, (HierarchicalModel, FlatModel)):
        raise ModelStructureError(f"not a cause model: {model!r}")
    if kind is LikelihoodKind.SEMI_DIRECT and isinstance(model, FlatModel):
        raise ModelStructureError("the semi-direct likelihood needs a hierarchical model")
    if kind is LikelihoodKind.SEMI_DIRECT and not causes_known:
        raise ModelStructureError("the semi-direct likelihood needs known causes")
    report = validate_dataset(dataset)
    if not report.valid:
        raise DatasetError("; ".join(report.violations))
    if model.cause_count < dataset.cause_count:
        raise DatasetError(f"model declares {model.cause_count} causes, dataset uses {dataset.cause_count}")

    start = opts.start or default_start(dataset, model, causes_known)
    layout = ParameterLayout.for_fit(start.model, kind)
    args = objective_args(start.model, kind, dataset, layout, opts.quad_order, causes_known)
    res = _maximize(nelder_mead_jit, _kernel.loglik_from_free, args,
                    layout.pack(start.theta, start.model), opts.maximize)
    xi = layout.unpack(res.x)
    hessian = None
    if opts.probe:
        hessian = hessian_probe(lambda x: float(_kernel.loglik_from_free(x, args)), res.x)
    return FitResult(
        theta=xi.theta, model=xi.model, kind=kind, causes_known=causes_known,
        estimates=layout.natural(res.x), loglik=res.value, converged=res.converged,
        iterations=res.iterations, evaluations=res.evaluations, hessian=hessian, message=res.message)
