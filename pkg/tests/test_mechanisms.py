import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multicause.core import FlatModel, HierarchicalModel, MarLogisticAffine, MarLogisticCentered, Mcar, NmarLogisticCentered
from multicause.mechanisms import (
    InvalidFlatModelError,
    MechanismClass,
    MissingCovariateError,
    cause_prob,
    classify_mechanism,
    mcar_equivalent,
    pattern_probs,
)


def test_logistic_values():
    assert cause_prob(MarLogisticCentered(0.5, 53.0), 53.0) == pytest.approx(0.5, abs=1e-12)
    assert cause_prob(Mcar(0.25), 17.0) == 0.25
    assert cause_prob(MarLogisticAffine(0.0, math.log(3.0)), 99.0) == pytest.approx(0.25, abs=1e-12)
    assert cause_prob(NmarLogisticCentered(1 / 7, 50.0), 0.0, 50.0) == pytest.approx(0.5, abs=1e-12)


def test_decreasing_in_score():
    y = np.linspace(0, 100, 11)
    assert np.all(np.diff(cause_prob(MarLogisticCentered(0.5, 53.0), y)) < 0)
    assert np.all(np.diff(cause_prob(NmarLogisticCentered(1 / 7, 50.0), 0.0, y)) < 0)


def test_nmar_needs_y2():
    with pytest.raises(MissingCovariateError):
        cause_prob(NmarLogisticCentered(1.0, 0.0), 1.0)


def test_classification():
    assert classify_mechanism(Mcar(0.1)) is MechanismClass.MCAR
    assert classify_mechanism(MarLogisticAffine(1, 0)) is MechanismClass.MAR
    assert classify_mechanism(NmarLogisticCentered(1, 0)) is MechanismClass.NMAR


def test_mcar_equivalent():
    assert mcar_equivalent(MarLogisticAffine(0.0, math.log(3.0))) == pytest.approx(0.25, abs=1e-15)
    assert mcar_equivalent(MarLogisticAffine(0.1, 0.0)) is None


def test_flat_invalid_when_sum_reaches_one():
    model = FlatModel((Mcar(0.6), Mcar(0.5)))
    with pytest.raises(InvalidFlatModelError):
        pattern_probs(model, 0.0, 0.0)


def test_hierarchical_table1_point():
    model = HierarchicalModel((Mcar(0.25), NmarLogisticCentered(1 / 7, 50.0)))
    v = pattern_probs(model, 40.0, 50.0).as_vector()
    assert v == pytest.approx([0.375, 0.25, 0.375], abs=1e-15)


slopes = st.floats(-3, 3)
centres = st.floats(-5, 5)
scores = st.floats(-10, 10)


@given(st.floats(0.01, 0.99), slopes, centres, slopes, centres, scores, scores)
def test_hierarchical_sums_to_one(p, a1, b1, a2, b2, y1, y2):
    model = HierarchicalModel((Mcar(p), MarLogisticCentered(a1, b1), NmarLogisticCentered(a2, b2)))
    v = pattern_probs(model, y1, y2).as_vector()
    assert np.all(v >= 0)
    assert math.fsum(v) == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.01, 0.45), st.floats(0.01, 0.45), scores, scores)
def test_flat_sums_to_one(p1, p2, y1, y2):
    v = pattern_probs(FlatModel((Mcar(p1), Mcar(p2))), y1, y2).as_vector()
    assert math.fsum(v) == pytest.approx(1.0, abs=1e-12)
    assert v[1:] == pytest.approx([p1, p2])
