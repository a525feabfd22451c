"""Exact enumeration on small discrete models.

Outcomes live on a finite grid of at most 5 x 5 points with a log-linear pmf;
mechanisms are tables ``P(M2 = l | y1, y2)``. Likelihoods are finite sums, so
the ignorability claims can be checked without quadrature or optimization:
a mechanism factor is ignorable exactly when dropping it shifts the
log-likelihood by a constant in the remaining parameters.

Comparisons use the expected (population) log-likelihood under a
data-generating law, so verdicts carry no sampling noise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    MarLogisticCentered,
    Mcar,
    NmarLogisticCentered,
    Observation,
    mechanism_from_dict,
    mechanism_to_dict,
)
from .mechanisms import cause_prob, depends_on_y2

MAX_SUPPORT = 5
MAX_GRID = 10_000
EXACT_TOL = 1e-12

PROPOSITIONS = ("1", "2", "3", "4", "pmar")


class OracleConfigError(ValueError):
    """The proposition's model family is ill-posed."""


class SupportError(ValueError):
    """A record lies off the model's support."""


# ---------------------------------------------------------------------------
# Outcome model


@dataclass(frozen=True)
class DiscreteOutcomeModel:
    """Log-linear pmf ``p(y1, y2) ∝ exp(a*u + b*v + c*u*v)``.

    ``u`` and ``v`` are the support values centered at their means, so
    ``theta_d = (a, b, c)`` holds two marginal tilts and one dependence term.
    """

    y1: tuple
    y2: tuple

    def __post_init__(self):
        for name in ("y1", "y2"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not 1 <= len(vals) <= MAX_SUPPORT:
                raise OracleConfigError(f"{name} support must have 1..{MAX_SUPPORT} points, got {len(vals)}")
            if len(set(vals)) != len(vals):
                raise OracleConfigError(f"{name} support has repeated points")
            object.__setattr__(self, name, vals)

    @property
    def shape(self) -> tuple:
        return len(self.y1), len(self.y2)

    def pmf(self, theta_d) -> np.ndarray:
        """``(n1, n2)`` table, or ``(..., n1, n2)`` for stacked ``theta_d``."""
        t = np.asarray(theta_d, dtype=float)
        u = np.asarray(self.y1) - np.mean(self.y1)
        v = np.asarray(self.y2) - np.mean(self.y2)
        a, b, c = (t[..., k, None, None] for k in range(3))
        logit = a * u[:, None] + b * v[None, :] + c * u[:, None] * v[None, :]
        logit = logit - logit.max(axis=(-2, -1), keepdims=True)
        p = np.exp(logit)
        return p / p.sum(axis=(-2, -1), keepdims=True)

    def index(self, y1: float, y2: Optional[float] = None) -> tuple:
        try:
            i = self.y1.index(float(y1))
            j = None if y2 is None else self.y2.index(float(y2))
        except ValueError:
            raise SupportError(f"record ({y1}, {y2}) is off the support") from None
        return i, j


# ---------------------------------------------------------------------------
# Mechanisms


def cause_table(mech, model: DiscreteOutcomeModel) -> np.ndarray:
    """Probability that ``mech`` fires at every support point, ``(n1, n2)``."""
    y1, y2 = np.meshgrid(model.y1, model.y2, indexing="ij")
    return np.broadcast_to(cause_prob(mech, y1, y2), model.shape).astype(float)


@dataclass(frozen=True)
class DiscreteMechanism:
    """Table ``P(M2 = l | y1, y2)`` of shape ``(L + 1, n1, n2)``.

    ``classes`` tags each missing pattern MCAR/MAR/NMAR and ``structure`` is
    ``hierarchical``, ``flat``, ``merged`` or ``pmar``. For the first two,
    ``cause_tables`` keeps the per-cause probabilities the table was built
    from, conditional on survival for a hierarchical model.
    """

    table: np.ndarray
    classes: tuple
    structure: str
    cause_tables: tuple = ()

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 3 or t.shape[0] < 2:
            raise OracleConfigError("mechanism table must have shape (L + 1, n1, n2) with L >= 1")
        if np.any(t < 0) or np.any(t > 1):
            raise OracleConfigError("mechanism probabilities must lie in [0, 1]")
        if np.max(np.abs(t.sum(axis=0) - 1.0)) > EXACT_TOL:
            raise OracleConfigError("pattern probabilities do not sum to 1 at some support point")
        for l, cls in enumerate(self.classes, start=1):
            if cls in ("MCAR", "MAR") and np.ptp(t[l], axis=1).max() > EXACT_TOL:
                raise OracleConfigError(f"pattern {l} is tagged {cls} but varies with y2")
        t.flags.writeable = False
        object.__setattr__(self, "table", t)

    @property
    def pattern_count(self) -> int:
        return self.table.shape[0] - 1

    @classmethod
    def from_causes(cls, mechs: Sequence, model: DiscreteOutcomeModel,
                    structure: str = "hierarchical") -> "DiscreteMechanism":
        tables = tuple(cause_table(m, model) for m in mechs)
        classes = tuple("NMAR" if depends_on_y2(m) else ("MCAR" if isinstance(m, Mcar) else "MAR")
                        for m in mechs)
        return cls(compose(tables, structure), classes, structure, tables)

    def merge(self) -> "DiscreteMechanism":
        """Collapse every missing pattern into one, as when causes are unrecorded."""
        missing = self.table[1:].sum(axis=0)
        cls = "NMAR" if "NMAR" in self.classes else ("MAR" if "MAR" in self.classes else "MCAR")
        return DiscreteMechanism(np.stack([self.table[0], missing]), (cls,), "merged")


def compose(tables: Sequence[np.ndarray], structure: str, include=None) -> np.ndarray:
    """Pattern factors from per-cause tables.

    With ``include`` given, causes marked False contribute no factor at all;
    the result is then a likelihood factor table, not a distribution.
    """
    include = [True] * len(tables) if include is None else list(include)
    shape = np.shape(tables[0])
    one = np.ones(shape)
    if structure == "hierarchical":
        out, alive = [], one
        for q, keep in zip(tables, include):
            out.append(alive * q if keep else alive)
            alive = alive * (1.0 - q) if keep else alive
        return np.stack([alive] + out)
    if structure == "flat":
        kept = [q for q, keep in zip(tables, include) if keep]
        total = np.sum(kept, axis=0) if kept else np.zeros(shape)
        if include == [True] * len(tables) and np.any(total >= 1.0):
            raise OracleConfigError("flat cause probabilities sum to 1 or more at some support point")
        return np.stack([1.0 - total] + [q if keep else one for q, keep in zip(tables, include)])
    raise OracleConfigError(f"unknown structure {structure!r}")


def pmar_mechanism(gamma_table: np.ndarray, delta_tables: Sequence[np.ndarray]) -> DiscreteMechanism:
    """Mechanism factored through ``k(M) = 1{M2 != 0}``.

    ``gamma_table`` is ``P(k = 1 | y1, y2)`` and may depend on the missing
    score; ``delta_tables[l-1]`` is ``P(M2 = l | k = 1, y1)`` and must not.
    """
    delta = np.stack([np.asarray(d, float) for d in delta_tables])
    if np.max(np.abs(delta.sum(axis=0) - 1.0)) > EXACT_TOL:
        raise OracleConfigError("conditional pattern probabilities given k = 1 must sum to 1")
    if np.ptp(delta, axis=2).max() > EXACT_TOL:
        raise OracleConfigError("the delta factor must not depend on y2")
    g = np.asarray(gamma_table, float)
    table = np.concatenate([(1.0 - g)[None], g[None] * delta])
    classes = ("NMAR" if np.ptp(g, axis=1).max() > EXACT_TOL else "MAR",) * len(delta)
    return DiscreteMechanism(table, classes, "pmar")


# ---------------------------------------------------------------------------
# Likelihoods


def observation_probs(pmf: np.ndarray, factors: np.ndarray):
    """Probabilities (or likelihood factors) of every observable outcome.

    Returns ``(complete, missing)``: ``complete[..., i, j]`` for pattern 0 at
    ``(y1_i, y2_j)`` and ``missing[..., l-1, i]`` for pattern ``l`` at ``y1_i``.
    Leading axes of ``pmf`` and ``factors`` broadcast.
    """
    complete = factors[..., 0, :, :] * pmf
    missing = np.sum(factors[..., 1:, :, :] * pmf[..., None, :, :], axis=-1)
    return complete, missing


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def exact_loglik(model: DiscreteOutcomeModel, theta_d, mech: DiscreteMechanism | np.ndarray,
                 data: Sequence[Observation]) -> float:
    """Log-likelihood of observed records by enumeration over the missing ``y2``.

    ``mech`` may also be a raw factor table (for likelihoods with factors
    dropped). Records must lie on the support and carry ``y2`` iff ``m2 == 0``.
    """
    table = mech.table if isinstance(mech, DiscreteMechanism) else np.asarray(mech, float)
    complete, missing = observation_probs(model.pmf(theta_d), table)
    total = 0.0
    for rec in data:
        if (rec.y2 is None) != (rec.m2 != 0):
            raise SupportError(f"record {rec} has y2 present iff m2 == 0 violated")
        if not 0 <= rec.m2 < table.shape[0]:
            raise SupportError(f"pattern {rec.m2} is not in the mechanism")
        i, j = model.index(rec.y1, rec.y2)
        p = complete[i, j] if rec.m2 == 0 else missing[rec.m2 - 1, i]
        total += float(_safe_log(p))
    return total


def expected_loglik(true_complete, true_missing, model_pmf, model_factors) -> np.ndarray:
    """Population log-likelihood per observation; broadcasts over candidate axes."""
    complete, missing = observation_probs(model_pmf, model_factors)
    lc = np.where(true_complete > 0, true_complete * _safe_log(complete), 0.0)
    lm = np.where(true_missing > 0, true_missing * _safe_log(missing), 0.0)
    return lc.sum(axis=(-2, -1)) + lm.sum(axis=(-2, -1))


# ---------------------------------------------------------------------------
# Grid search


@dataclass(frozen=True)
class GridArgmax:
    point: tuple
    value: float
    index: int
    tied: bool


def grid_points(axes: Sequence[Sequence[float]]) -> list:
    """Cartesian product in lexicographic order."""
    points = list(itertools.product(*[tuple(float(v) for v in ax) for ax in axes]))
    if len(points) > MAX_GRID:
        raise OracleConfigError(f"grid has {len(points)} points, limit is {MAX_GRID}")
    return points


def argmax_values(values, points: Sequence) -> GridArgmax:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty grid")
    k = int(np.argmax(values))  # first maximum, i.e. lexicographic tie-break
    tied = int(np.sum(values == values[k])) > 1
    return GridArgmax(tuple(points[k]), float(values[k]), k, tied)


def argmax_grid(objective: Callable, grid: Sequence) -> GridArgmax:
    """Exhaustive maximization over ``grid``; ties go to the earliest point and are flagged."""
    points = list(grid)
    if not points:
        raise ValueError("empty grid")
    return argmax_values([objective(p) for p in points], points)


# ---------------------------------------------------------------------------
# Proposition checks


@dataclass(frozen=True)
class PropertyVerdict:
    """Outcome of one proposition check.

    ``holds`` says whether the ignorability property held on the whole grid;
    ``False`` always comes with a ``witness``.
    """

    proposition: str
    holds: bool
    witness: Optional[dict]
    max_deviation: float
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.holds and self.witness is None:
            raise ValueError("a failed property needs a witness")

    @property
    def expected_polarity(self) -> bool:
        return self.proposition in ("1", "3", "pmar")

    @property
    def matches_expectation(self) -> bool:
        return self.holds == self.expected_polarity

    def to_dict(self) -> dict:
        return {"proposition": self.proposition, "holds": self.holds,
                "expected_holds": self.expected_polarity,
                "matches_expectation": self.matches_expectation,
                "witness": self.witness, "max_deviation": self.max_deviation,
                "details": self.details}


@dataclass(frozen=True)
class OracleConfig:
    """Model family for a proposition check.

    ``cause1`` is the MAR (or MCAR) cause, ``cause2`` the second cause, NMAR
    except for proposition 1. ``cause1_grid`` lists alternative cause-1
    mechanisms searched for a counterexample (propositions 2 and 4);
    ``cause2_grid`` is profiled jointly with ``theta_d``.
    """

    y1: tuple = (-2.0, -1.0, 0.0, 1.0, 2.0)
    y2: tuple = (-2.0, -1.0, 0.0, 1.0, 2.0)
    theta_true: tuple = (0.2, -0.1, 0.4)
    theta_axes: tuple = (tuple(np.round(np.linspace(-0.1, 0.5, 7), 10)),
                         tuple(np.round(np.linspace(-0.4, 0.2, 7), 10)),
                         tuple(np.round(np.linspace(0.1, 0.7, 7), 10)))
    cause1: object = MarLogisticCentered(1.0, 0.0)
    cause2: object = NmarLogisticCentered(1.5, -0.5)
    cause1_grid: tuple = tuple(MarLogisticCentered(a, b) for a in (0.5, 1.0, 2.0) for b in (-1.0, 0.0, 1.0))
    cause2_grid: tuple = tuple(NmarLogisticCentered(a, b) for a in (1.0, 1.5, 2.0) for b in (-1.0, -0.5, 0.0))
    gamma_grid: tuple = (0.5, 1.0, 1.5, 2.0)

    @property
    def model(self) -> DiscreteOutcomeModel:
        return DiscreteOutcomeModel(self.y1, self.y2)

    def theta_grid(self) -> list:
        return grid_points(self.theta_axes)


# Flat models need cause probabilities well below 1/2 everywhere on the support.
_FLAT_MAR = tuple(MarLogisticCentered(a, b) for a in (0.5, 1.0, 1.5) for b in (-3.5, -3.0, -2.5))


def default_config(prop: str) -> OracleConfig:
    if prop == "1":
        return OracleConfig(cause1=MarLogisticCentered(1.0, -3.0), cause2=MarLogisticCentered(0.5, -3.0),
                            cause2_grid=_FLAT_MAR)
    if prop == "2":
        # The argmax moves by under 0.01 here, so the theta grid is fine and local.
        theta = (0.2, -0.1, 0.4)
        return OracleConfig(theta_true=theta,
                            theta_axes=tuple(tuple(np.round(t + 0.005 * np.arange(-3, 4), 10)) for t in theta),
                            cause1=MarLogisticCentered(1.0, -3.0), cause2=NmarLogisticCentered(1.0, -3.0),
                            cause1_grid=_FLAT_MAR,
                            cause2_grid=tuple(NmarLogisticCentered(a, b) for a in (0.9, 1.0, 1.1, 1.2, 1.3)
                                              for b in (-3.0, -2.8, -2.6, -2.4, -2.2)))
    return OracleConfig()


def _true_law(cfg: OracleConfig, mech: DiscreteMechanism):
    return observation_probs(cfg.model.pmf(cfg.theta_true), mech.table)


def _profile(cfg: OracleConfig, true_obs, factor_tables: Sequence[np.ndarray]):
    """Expected log-likelihood over ``theta_grid x factor_tables``, shape ``(G, T)``."""
    pmf = cfg.model.pmf(cfg.theta_grid())                      # (G, n1, n2)
    factors = np.stack(factor_tables)                          # (T, L+1, n1, n2)
    if len(pmf) * len(factors) > MAX_GRID:
        raise OracleConfigError(f"joint grid has {len(pmf) * len(factors)} points, limit is {MAX_GRID}")
    return expected_loglik(true_obs[0], true_obs[1], pmf[:, None], factors[None])


def _joint_argmax(values, cfg: OracleConfig) -> tuple:
    # Flattened (theta, tau) argmax; returns the theta part and the tau index.
    g, t = values.shape
    k = argmax_values(values.ravel(), [(a, b) for a in range(g) for b in range(t)])
    theta = cfg.theta_grid()[k.point[0]]
    return theta, int(k.point[1]), k


def _spread(diff) -> float:
    return float(np.max(diff) - np.min(diff))


def check_prop1(cfg: OracleConfig) -> PropertyVerdict:
    """Flat MAR & MAR: the full likelihood differs from the direct one by a constant."""
    model = cfg.model
    if depends_on_y2(cfg.cause1) or depends_on_y2(cfg.cause2):
        raise OracleConfigError("proposition 1 needs two MAR/MCAR causes")
    true = DiscreteMechanism.from_causes((cfg.cause1, cfg.cause2), model, "flat")
    obs = _true_law(cfg, true)
    dl = np.ones_like(true.table)
    deviation, shifts = 0.0, []
    dl_vals = _profile(cfg, obs, [dl])[:, 0]
    dl_arg = argmax_values(dl_vals, cfg.theta_grid())
    for c2 in cfg.cause2_grid:
        fl_table = DiscreteMechanism.from_causes((cfg.cause1, c2), model, "flat").table
        fl_vals = _profile(cfg, obs, [fl_table])[:, 0]
        deviation = max(deviation, _spread(fl_vals - dl_vals))
        fl_arg = argmax_values(fl_vals, cfg.theta_grid())
        if fl_arg.point != dl_arg.point:
            shifts.append({"cause2": repr(c2), "argmax_full": fl_arg.point, "argmax_direct": dl_arg.point})
    holds = deviation < EXACT_TOL and not shifts
    witness = None if holds else (shifts[0] if shifts else {"max_deviation": deviation})
    return PropertyVerdict("1", holds, witness, deviation,
                           {"argmax_direct": dl_arg.point, "theta_true": cfg.theta_true,
                            "mechanisms_checked": len(cfg.cause2_grid), "structure": "flat"})


def _ignoring_shift(cfg: OracleConfig, c1, structure: str, merged: bool) -> dict:
    """Argmaxes of the full and the cause-1-ignoring likelihoods for one cause-1 mechanism.

    Both are profiled over ``theta_grid x cause2_grid``; the full one keeps
    cause 1 at its true value.
    """
    model = cfg.model
    true = DiscreteMechanism.from_causes((c1, cfg.cause2), model, structure)
    if merged:
        true = true.merge()
    obs = _true_law(cfg, true)
    full, ignoring = [], []
    for c2 in cfg.cause2_grid:
        tables = (cause_table(c1, model), cause_table(c2, model))
        f = compose(tables, structure)
        d = compose(tables, structure, include=(False, True))
        if merged:
            f = np.stack([f[0], f[1:].sum(axis=0)])
            d = np.stack([d[0], 1.0 - d[0]])
        full.append(f)
        ignoring.append(d)
    f_theta, f_tau, _ = _joint_argmax(_profile(cfg, obs, full), cfg)
    i_theta, i_tau, _ = _joint_argmax(_profile(cfg, obs, ignoring), cfg)
    return {"cause1": mechanism_to_dict(c1), "cause2_true": mechanism_to_dict(cfg.cause2),
            "argmax_full": f_theta, "argmax_ignoring": i_theta,
            "cause2_full": mechanism_to_dict(cfg.cause2_grid[f_tau]),
            "cause2_ignoring": mechanism_to_dict(cfg.cause2_grid[i_tau]),
            "argmax_shift": float(np.max(np.abs(np.subtract(f_theta, i_theta))))}


def _ignoring_search(cfg: OracleConfig, prop: str, structure: str, merged: bool) -> PropertyVerdict:
    """Search cause-1 mechanisms for one where dropping its factors moves the argmax."""
    shifts = []
    for c1 in cfg.cause1_grid:
        witness = _ignoring_shift(cfg, c1, structure, merged)
        shifts.append(witness["argmax_shift"])
        if witness["argmax_shift"] > 0:
            return PropertyVerdict(prop, False, witness, witness["argmax_shift"],
                                   {"structure": structure, "merged": merged,
                                    "theta_true": cfg.theta_true, "searched": len(shifts)})
    return PropertyVerdict(prop, True, None, max(shifts, default=0.0),
                           {"structure": structure, "merged": merged, "searched": len(shifts),
                            "note": "no counterexample on this grid; the claim is existential"})


def replay_witness(prop: str, witness: dict, config: Optional[OracleConfig] = None) -> dict:
    """Recompute a proposition 2 or 4 witness from its cause-1 mechanism alone."""
    prop = str(prop)
    if prop not in ("2", "4"):
        raise OracleConfigError("only propositions 2 and 4 produce counterexample witnesses")
    cfg = config or default_config(prop)
    structure, merged = ("flat", False) if prop == "2" else ("hierarchical", True)
    return _ignoring_shift(cfg, mechanism_from_dict(witness["cause1"]), structure, merged)


def check_prop2(cfg: OracleConfig) -> PropertyVerdict:
    """Flat MAR & NMAR: dropping the MAR cause's factors can move the argmax."""
    return _ignoring_search(cfg, "2", "flat", merged=False)


def check_prop4(cfg: OracleConfig) -> PropertyVerdict:
    """Hierarchical, causes unrecorded: ignoring cause 1 can move the argmax."""
    return _ignoring_search(cfg, "4", "hierarchical", merged=True)


def check_prop3(cfg: OracleConfig) -> PropertyVerdict:
    """Hierarchical with known causes: FL - SDL is constant over (theta_d, cause 2)."""
    model = cfg.model
    if depends_on_y2(cfg.cause1):
        raise OracleConfigError("proposition 3 needs cause 1 to depend on observed data only")
    true = DiscreteMechanism.from_causes((cfg.cause1, cfg.cause2), model, "hierarchical")
    obs = _true_law(cfg, true)
    q1 = cause_table(cfg.cause1, model)
    full, semi = [], []
    for c2 in cfg.cause2_grid:
        q2 = cause_table(c2, model)
        full.append(compose((q1, q2), "hierarchical"))
        semi.append(compose((q1, q2), "hierarchical", include=(False, True)))
    fv, sv = _profile(cfg, obs, full), _profile(cfg, obs, semi)
    deviation = _spread(fv - sv)
    f_theta, f_tau, _ = _joint_argmax(fv, cfg)
    s_theta, s_tau, _ = _joint_argmax(sv, cfg)
    same = f_theta == s_theta and f_tau == s_tau
    holds = deviation < EXACT_TOL and same
    witness = None if holds else {"argmax_full": f_theta, "argmax_semi_direct": s_theta,
                                  "max_deviation": deviation}
    return PropertyVerdict("3", holds, witness, deviation,
                           {"argmax_full": f_theta, "argmax_semi_direct": s_theta,
                            "cause2_argmax": repr(cfg.cause2_grid[f_tau]), "theta_true": cfg.theta_true,
                            "grid_points": int(fv.size)})


def check_pmar(cfg: OracleConfig) -> PropertyVerdict:
    """PMAR given ``k = 1{missing}``: FL - coarse likelihood is constant over (theta_d, gamma)."""
    model = cfg.model
    y1, y2 = np.meshgrid(model.y1, model.y2, indexing="ij")
    delta = cause_table(cfg.cause1, model)
    deltas = (delta, 1.0 - delta)

    def gamma(scale):
        return cause_table(NmarLogisticCentered(scale, 0.0), model)

    true = pmar_mechanism(gamma(cfg.gamma_grid[0]), deltas)
    obs = _true_law(cfg, true)
    full, coarse = [], []
    for s in cfg.gamma_grid:
        g = gamma(s)
        full.append(pmar_mechanism(g, deltas).table)
        coarse.append(np.stack([1.0 - g, g, g]))
    fv, cv = _profile(cfg, obs, full), _profile(cfg, obs, coarse)
    deviation = _spread(fv - cv)
    holds = deviation < EXACT_TOL
    witness = None if holds else {"max_deviation": deviation}
    return PropertyVerdict("pmar", holds, witness, deviation,
                           {"coarsening": "k = 1 if y2 is missing", "grid_points": int(fv.size)})


_CHECKS = {"1": check_prop1, "2": check_prop2, "3": check_prop3, "4": check_prop4, "pmar": check_pmar}


def check_proposition(prop: str, config: Optional[OracleConfig] = None) -> PropertyVerdict:
    prop = str(prop)
    if prop not in _CHECKS:
        raise OracleConfigError(f"unknown proposition {prop!r}; expected one of {', '.join(PROPOSITIONS)}")
    return _CHECKS[prop](config or default_config(prop))
