import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from multicause.core import (
    Dataset,
    DatasetError,
    FlatModel,
    HierarchicalModel,
    MarLogisticAffine,
    MarLogisticCentered,
    Mcar,
    NmarLogisticCentered,
    ThetaParams,
)
from multicause.likelihood import (
    LikelihoodKind,
    ModelStructureError,
    biv_normal_logpdf,
    conditional_y2,
    direct_loglik,
    expected_mech_given_y1,
    full_loglik,
    gauss_hermite,
    record_contributions,
    semi_direct_loglik,
)
from multicause.mechanisms import InvalidFlatModelError, cause_prob, depends_on_y2, pattern_probs

THETA = ThetaParams(50.0, 50.0, 15.0, 15.0, 0.6)


def reference_loglik(model, theta, d, drop=(), merged=False):
    """Record-by-record log-likelihood by adaptive quadrature.

    ``drop`` lists cause codes whose factors are removed (their probability
    is replaced by 1 in the pattern formula).
    """
    kept = tuple(1.0 if c + 1 in drop else None for c in range(model.cause_count))

    def probs(y1, y2):
        if not drop:
            return pattern_probs(model, y1, y2).as_vector()
        out, alive = [], 1.0
        for c, mech in enumerate(model.causes):
            if kept[c] is not None:
                out.append(alive)
                continue
            p = float(cause_prob(mech, y1, y2))
            out.append(alive * p)
            alive *= 1.0 - p
        return np.array([alive] + out)

    total = 0.0
    for r in d.records:
        if r.m2 == 0:
            total += float(biv_normal_logpdf(theta, r.y1, r.y2)) + math.log(probs(r.y1, r.y2)[0])
            continue
        mean, sd = conditional_y2(theta, r.y1)
        target = (lambda v: v[1:].sum()) if merged else (lambda v: v[r.m2])

        def integrand(y2):
            return target(probs(r.y1, y2)) * math.exp(-0.5 * ((y2 - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))

        lo, hi = mean - 12 * sd, mean + 12 * sd
        kinks = [m.tau_b for m in model.causes if depends_on_y2(m) and lo < m.tau_b < hi] or None
        val = quad(integrand, lo, hi, points=kinks, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
        u = (r.y1 - theta.mu1) / theta.sigma1
        total += -0.5 * u * u - math.log(theta.sigma1) - 0.5 * math.log(2 * math.pi) + math.log(val)
    return total


def _data(seed=0, n=30, cause_count=2):
    rng = np.random.default_rng(seed)
    y1 = 50 + 15 * rng.standard_normal(n)
    y2 = 50 + 15 * rng.standard_normal(n)
    m2 = rng.integers(0, cause_count + 1, n)
    return Dataset(y1, np.where(m2 == 0, y2, np.nan), m2, cause_count)


MODELS = [
    HierarchicalModel((Mcar(0.25), NmarLogisticCentered(1 / 7, 50.0))),
    HierarchicalModel((MarLogisticCentered(0.5, 53.0), NmarLogisticCentered(-0.05, 45.0))),
    HierarchicalModel((MarLogisticAffine(0.02, 0.3), NmarLogisticCentered(0.8, 55.0))),
    # Two NMAR causes share one Gauss-Hermite product, accurate for gentle slopes only.
    HierarchicalModel((NmarLogisticCentered(0.1, 40.0), NmarLogisticCentered(-0.1, 60.0))),
]


@pytest.mark.parametrize("model", MODELS)
def test_full_matches_adaptive_quadrature(model):
    d = _data()
    assert full_loglik(model, THETA, d).value == pytest.approx(reference_loglik(model, THETA, d), abs=1e-8)


@pytest.mark.parametrize("model", MODELS)
def test_merged_matches_adaptive_quadrature(model):
    d = _data(1)
    got = full_loglik(model, THETA, d, causes_known=False).value
    assert got == pytest.approx(reference_loglik(model, THETA, d, merged=True), abs=1e-8)


def test_three_causes_against_reference():
    model = HierarchicalModel((Mcar(0.1), NmarLogisticCentered(0.3, 48.0), MarLogisticCentered(0.1, 50.0)))
    d = _data(2, cause_count=3)
    assert full_loglik(model, THETA, d).value == pytest.approx(reference_loglik(model, THETA, d), abs=1e-8)
    got = full_loglik(model, THETA, d, causes_known=False).value
    assert got == pytest.approx(reference_loglik(model, THETA, d, merged=True), abs=1e-8)


@pytest.mark.parametrize("slope", [2.0, 10.0, 20.0, -5.0])
def test_steep_nmar_slope(slope):
    # GH alone cannot resolve these; the step-plus-remainder path must.
    model = HierarchicalModel((Mcar(0.25), NmarLogisticCentered(slope, 52.0)))
    d = _data(3)
    # Keep complete records the mechanism could have produced with non-negligible probability.
    surv = 1.0 - cause_prob(model.causes[1], 0.0, np.nan_to_num(d.y2, nan=52.0))
    d = d.subset(np.flatnonzero((d.m2 != 0) | (surv > 1e-100)))
    assert full_loglik(model, THETA, d).value == pytest.approx(reference_loglik(model, THETA, d), abs=1e-8)


def test_semi_direct_drops_mar_factors():
    model = MODELS[1]
    d = _data(4)
    assert semi_direct_loglik(model, THETA, d).value == pytest.approx(
        reference_loglik(model, THETA, d, drop=(1,)), abs=1e-8)


def test_flat_against_reference():
    model = FlatModel((Mcar(0.2), MarLogisticCentered(0.05, 10.0)))
    d = _data(5)
    ref = 0.0
    for r in d.records:
        v = pattern_probs(model, r.y1, r.y2 if r.y2 is not None else 0.0).as_vector()
        if r.m2 == 0:
            ref += float(biv_normal_logpdf(THETA, r.y1, r.y2)) + math.log(v[0])
        else:
            ref += -0.5 * ((r.y1 - 50) / 15) ** 2 - math.log(15) - 0.5 * math.log(2 * math.pi) + math.log(v[r.m2])
    assert full_loglik(model, THETA, d).value == pytest.approx(ref, abs=1e-9)


def test_flat_invalid_raises():
    model = FlatModel((Mcar(0.6), Mcar(0.5)))
    with pytest.raises(InvalidFlatModelError):
        full_loglik(model, THETA, _data())


def test_semi_direct_needs_hierarchy():
    with pytest.raises(ModelStructureError):
        semi_direct_loglik(FlatModel((Mcar(0.1), Mcar(0.1))), THETA, _data())


def test_cause_code_beyond_model():
    with pytest.raises(DatasetError):
        full_loglik(HierarchicalModel((Mcar(0.1),)), THETA, _data(cause_count=2))


def test_direct_is_observed_density():
    d = _data(6)
    c = d.m2 == 0
    ref = (sum(float(biv_normal_logpdf(THETA, a, b)) for a, b in zip(d.y1[c], d.y2[c]))
           + sum(-0.5 * ((a - 50) / 15) ** 2 - math.log(15 * math.sqrt(2 * math.pi)) for a in d.y1[~c]))
    assert direct_loglik(THETA, d).value == pytest.approx(ref, abs=1e-10)
    model = MODELS[0]
    assert direct_loglik(THETA, d).value == pytest.approx(
        float(np.sum(record_contributions(model, THETA, d, LikelihoodKind.DIRECT))), abs=1e-10)


def test_fl_minus_sdl_constant_in_theta_and_tau2():
    d = _data(7)
    rng = np.random.default_rng(1)
    diffs = []
    for _ in range(25):
        th = ThetaParams(*rng.uniform([40, 40, 10, 10, -0.5], [60, 60, 20, 20, 0.8]))
        model = HierarchicalModel((Mcar(0.25), NmarLogisticCentered(rng.uniform(-0.5, 0.5), rng.uniform(40, 60))))
        diffs.append(full_loglik(model, th, d).value - semi_direct_loglik(model, th, d).value)
    assert np.ptp(diffs) < 1e-9


@given(st.integers(1, 60))
def test_gauss_hermite_polynomial_exactness(n):
    q = gauss_hermite(n)
    assert q.weights.sum() == pytest.approx(1.0, abs=1e-13)
    for k in range(0, 2 * n, 2):
        if k > 12:
            break
        assert q.integrate(lambda z: z ** k) == pytest.approx(math.prod(range(1, k, 2)), rel=1e-11)


def test_gauss_hermite_order_bounds():
    for bad in (0, 201, 2.5):
        with pytest.raises(ValueError):
            gauss_hermite(bad)


def _trapezoid_oracle(mech, theta, y1, points=10_000):
    mean, sd = conditional_y2(theta, y1)
    g = np.linspace(mean - 10 * sd, mean + 10 * sd, points)
    f = cause_prob(mech, y1, g) * np.exp(-0.5 * ((g - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    return float(np.trapezoid(f, g))


@given(st.floats(30, 70), st.floats(5, 25), st.floats(-0.9, 0.9), st.floats(-2, 2),
       st.floats(30, 70), st.floats(-3, 3))
def test_expected_mech_matches_trapezoid(mu2, s2, rho, a, b, z1):
    theta = ThetaParams(50.0, mu2, 15.0, s2, rho)
    mech = NmarLogisticCentered(a, b)
    y1 = 50.0 + 15.0 * z1
    assert expected_mech_given_y1(mech, theta, y1) == pytest.approx(_trapezoid_oracle(mech, theta, y1), abs=1e-8)


def test_expected_mech_mar_is_pointwise():
    mech = MarLogisticCentered(0.5, 53.0)
    assert expected_mech_given_y1(mech, THETA, 53.0) == 0.5
    assert not depends_on_y2(mech)
