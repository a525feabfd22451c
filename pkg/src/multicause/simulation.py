"""Data generation under hierarchical multi-cause missingness and the Monte Carlo driver.

Scenarios (true cause-1 mechanism / mechanism fitted when causes are unknown):

* ``i``   MCAR / MCAR
* ``ii``  MCAR / affine-logistic MAR (contains MCAR as a limit)
* ``iii`` centered-logistic MAR / MCAR (misspecified)

Cause 2 is always the NMAR logistic in ``y2`` and is always correctly
specified. The known-causes arm fits the semi-direct likelihood; the
unknown-causes arm fits the full likelihood with the missing patterns merged.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    TRUE_THETA,
    Dataset,
    HierarchicalModel,
    MarLogisticAffine,
    MarLogisticCentered,
    Mcar,
    NmarLogisticCentered,
    ThetaParams,
)
from .estimation import FitOptions, fit
from .likelihood import LikelihoodKind, gauss_hermite
from .mechanisms import cause_prob

TRUE_P = 0.25
TRUE_TAU1 = MarLogisticCentered(0.5, 53.0)
TRUE_TAU2 = NmarLogisticCentered(1.0 / 7.0, 50.0)

DEFAULT_REPS = 500
DEFAULT_N = 100

TABLE_COLUMNS = ("mu1", "mu2", "sigma1", "sigma2", "rho",
                 "tau1a_prime", "tau1b_prime", "p1", "tau2a", "tau2b")


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Child stream ``rep`` of ``seed``; independent of every other replication."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def sample_bivnormal(theta: ThetaParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws as an ``(n, 2)`` array, via the Cholesky factor of the covariance."""
    z = rng.standard_normal((n, 2))
    y1 = theta.mu1 + theta.sigma1 * z[:, 0]
    y2 = theta.mu2 + theta.sigma2 * (theta.rho * z[:, 0] + math.sqrt(1.0 - theta.rho ** 2) * z[:, 1])
    return np.column_stack([y1, y2])


@dataclass(frozen=True, eq=False)
class SimulatedSample:
    """A generated dataset plus the latent ``y2`` of every record.

    ``latent_y2`` is for diagnostics and figure data only; fitting code
    receives ``dataset``.
    """

    dataset: Dataset
    latent_y2: np.ndarray


def assign_missingness(model: HierarchicalModel, pairs, rng: np.random.Generator) -> SimulatedSample:
    """Try causes in priority order; the first to fire sets ``m2``."""
    pairs = np.asarray(pairs, dtype=float)
    y1, y2 = pairs[:, 0], pairs[:, 1]
    n = len(pairs)
    u = rng.random((n, model.cause_count))
    m2 = np.zeros(n, dtype=np.int64)
    for code, mech in enumerate(model.causes, start=1):
        p = np.broadcast_to(cause_prob(mech, y1, y2), (n,))
        fires = (m2 == 0) & (u[:, code - 1] < p)
        m2[fires] = code
    observed_y2 = np.where(m2 == 0, y2, np.nan)
    latent = y2.copy()
    latent.flags.writeable = False
    return SimulatedSample(Dataset(y1, observed_y2, m2, model.cause_count), latent)


def simulate(theta: ThetaParams, model: HierarchicalModel, n: int, rng: np.random.Generator) -> SimulatedSample:
    return assign_missingness(model, sample_bivnormal(theta, n, rng), rng)


def rmse(estimates, truth: float) -> float:
    est = np.asarray(estimates, dtype=float)
    if est.size == 0:
        raise ValueError("rmse of an empty list")
    return float(np.sqrt(np.mean((est - truth) ** 2)))


def pattern_ratio(d: Dataset) -> np.ndarray:
    """Empirical proportions of patterns ``0..C``."""
    return np.bincount(d.m2, minlength=d.cause_count + 1) / len(d)


def expected_pattern_probs(theta: ThetaParams, model: HierarchicalModel, order: int = 60) -> np.ndarray:
    """Population pattern probabilities by 2-d Gauss-Hermite quadrature."""
    q = gauss_hermite(order)
    z1, z2 = np.meshgrid(q.nodes, q.nodes, indexing="ij")
    w = np.outer(q.weights, q.weights)
    y1 = theta.mu1 + theta.sigma1 * z1
    y2 = theta.mu2 + theta.sigma2 * (theta.rho * z1 + math.sqrt(1.0 - theta.rho ** 2) * z2)
    alive = np.ones_like(y1)
    out = []
    for mech in model.causes:
        p = np.broadcast_to(cause_prob(mech, y1, y2), y1.shape)
        out.append(float(np.sum(w * alive * p)))
        alive = alive * (1.0 - p)
    return np.array([float(np.sum(w * alive))] + out)


# ---------------------------------------------------------------------------
# Scenarios


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    n: int = DEFAULT_N
    reps: int = DEFAULT_REPS
    seed: int = 0
    theta_true: ThetaParams = TRUE_THETA
    mech_true: HierarchicalModel = None
    mech_fitted_known: HierarchicalModel = None
    mech_fitted_unknown: HierarchicalModel = None
    arms: tuple = ("known", "unknown")
    fit_options: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        if self.id not in ("i", "ii", "iii"):
            raise ValueError(f"scenario id must be i, ii or iii, got {self.id!r}")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not set(self.arms) <= {"known", "unknown"} or not self.arms:
            raise ValueError(f"arms must be a non-empty subset of known/unknown, got {self.arms!r}")
        if self.mech_true is None:
            true, known, unknown = _scenario_models(self.id)
            object.__setattr__(self, "mech_true", true)
            object.__setattr__(self, "mech_fitted_known", known)
            object.__setattr__(self, "mech_fitted_unknown", unknown)

    def arm_label(self, arm: str) -> str:
        if self.id == "iii":
            return "knownS3" if arm == "known" else "unknownS3"
        return "known" if arm == "known" else ("unknownS1" if self.id == "i" else "unknownS2")

    def truth(self) -> dict:
        """True values of every parameter an arm may estimate.

        For scenario iii the fitted MCAR ``p1`` has no true value; its target
        is the population rate of cause 1.
        """
        t = self.theta_true.to_dict()
        t["tau2a"], t["tau2b"] = TRUE_TAU2.tau_a, TRUE_TAU2.tau_b
        if self.id == "iii":
            t["p1"] = float(expected_pattern_probs(self.theta_true, self.mech_true)[1])
        else:
            t["p1"] = TRUE_P
            t["tau1a_prime"] = 0.0
            t["tau1b_prime"] = -math.log(TRUE_P / (1.0 - TRUE_P))
        return t


def _scenario_models(sid: str):
    mar = sid == "iii"
    true = HierarchicalModel((TRUE_TAU1 if mar else Mcar(TRUE_P), TRUE_TAU2))
    known = HierarchicalModel((TRUE_TAU1 if mar else Mcar(TRUE_P), TRUE_TAU2))
    if sid == "ii":
        unknown = HierarchicalModel((MarLogisticAffine(0.0, -math.log(TRUE_P / (1 - TRUE_P))), TRUE_TAU2))
    else:
        unknown = HierarchicalModel((Mcar(TRUE_P), TRUE_TAU2))
    return true, known, unknown


def scenario_spec(sid: str, n: int = DEFAULT_N, reps: int = DEFAULT_REPS, seed: int = 0, **kw) -> ScenarioSpec:
    return ScenarioSpec(id=sid, n=n, reps=reps, seed=seed, **kw)


@dataclass(frozen=True)
class EstimateRecord:
    rep: int
    arm: str
    parameter: str
    estimate: float
    converged: bool


@dataclass(frozen=True)
class ReplicationOutcome:
    rep: int
    pattern_props: np.ndarray
    records: tuple
    errors: tuple = ()


def run_replication(spec: ScenarioSpec, rep: int) -> ReplicationOutcome:
    rng = replication_rng(spec.seed, rep)
    sample = simulate(spec.theta_true, spec.mech_true, spec.n, rng)
    d = sample.dataset
    records, errors = [], []
    for arm in spec.arms:
        label = spec.arm_label(arm)
        try:
            if arm == "known":
                res = fit(spec.mech_fitted_known, LikelihoodKind.SEMI_DIRECT, d, spec.fit_options)
            else:
                res = fit(spec.mech_fitted_unknown, LikelihoodKind.FULL, d, spec.fit_options, causes_known=False)
        except (ValueError, ArithmeticError) as exc:
            errors.append((label, f"{type(exc).__name__}: {exc}"))
            continue
        records.extend(EstimateRecord(rep, label, name, float(v), bool(res.converged))
                       for name, v in res.estimates.items())
    return ReplicationOutcome(rep, pattern_ratio(d), tuple(records), tuple(errors))


def _run_chunk(args):
    spec, reps = args
    return [run_replication(spec, r) for r in reps]


@dataclass(frozen=True)
class ScenarioResult:
    spec: ScenarioSpec
    records: tuple
    rmse: dict
    bias: dict
    excluded: dict
    failed: dict
    pattern_props: np.ndarray

    def estimates(self, arm: str, parameter: str, converged_only: bool = True) -> np.ndarray:
        return np.array([r.estimate for r in self.records
                         if r.arm == arm and r.parameter == parameter and (r.converged or not converged_only)])

    @property
    def arms(self) -> tuple:
        return tuple(self.spec.arm_label(a) for a in self.spec.arms)


def aggregate(spec: ScenarioSpec, outcomes) -> ScenarioResult:
    outcomes = sorted(outcomes, key=lambda o: o.rep)
    records = tuple(r for o in outcomes for r in o.records)
    truth = spec.truth()
    rmse_table, bias_table, excluded, failed = {}, {}, {}, {}
    for arm in spec.arms:
        label = spec.arm_label(arm)
        arm_records = [r for r in records if r.arm == label]
        converged_reps = {r.rep for r in arm_records if r.converged}
        all_reps = {r.rep for r in arm_records}
        excluded[label] = len(all_reps - converged_reps)
        failed[label] = sum(1 for o in outcomes for a, _ in o.errors if a == label)
        rmse_table[label], bias_table[label] = {}, {}
        names = list(dict.fromkeys(r.parameter for r in arm_records))
        for name in names:
            est = [r.estimate for r in arm_records if r.parameter == name and r.converged]
            if est and name in truth:
                rmse_table[label][name] = rmse(est, truth[name])
                bias_table[label][name] = float(np.mean(est) - truth[name])
    props = np.mean([o.pattern_props for o in outcomes], axis=0)
    return ScenarioResult(spec, records, rmse_table, bias_table, excluded, failed, props)


def run_scenario(spec: ScenarioSpec, workers: int = 1) -> ScenarioResult:
    """Run every replication and aggregate.

    Non-converged fits are kept in ``records`` but excluded from RMSE and
    bias; fits that raise are counted in ``failed``. Results do not depend
    on ``workers``.
    """
    reps = list(range(spec.reps))
    if workers <= 1:
        outcomes = [run_replication(spec, r) for r in reps]
    else:
        chunks = [(spec, reps[k::workers]) for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = [o for chunk in pool.map(_run_chunk, chunks) for o in chunk]
    return aggregate(spec, outcomes)
