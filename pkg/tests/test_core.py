import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multicause.core import (
    Dataset,
    DatasetError,
    MarLogisticAffine,
    MarLogisticCentered,
    Mcar,
    NmarLogisticCentered,
    Observation,
    ThetaParams,
    mechanism_from_dict,
    mechanism_to_dict,
    param_names,
    partition_by_pattern,
    validate_dataset,
)


def test_theta_rejects_invalid():
    with pytest.raises(ValueError):
        ThetaParams(0, 0, -1, 1, 0)
    with pytest.raises(ValueError):
        ThetaParams(0, 0, 1, 1, 1.0)
    with pytest.raises(ValueError):
        ThetaParams(math.nan, 0, 1, 1, 0)


def test_theta_dict_roundtrip():
    t = ThetaParams(1.5, -2, 3, 4, 0.25)
    assert ThetaParams.from_dict(t.to_dict()) == t
    with pytest.raises(KeyError):
        ThetaParams.from_dict({"mu1": 0})


def test_mcar_bounds():
    for p in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            Mcar(p)


@pytest.mark.parametrize("mech", [Mcar(0.3), MarLogisticCentered(0.5, 53),
                                  MarLogisticAffine(0.0, math.log(3)), NmarLogisticCentered(1 / 7, 50)])
def test_mechanism_dict_roundtrip(mech):
    assert mechanism_from_dict(mechanism_to_dict(mech)) == mech


def test_mechanism_from_dict_errors():
    with pytest.raises(ValueError):
        mechanism_from_dict({"variant": "probit", "params": {}})
    with pytest.raises(KeyError):
        mechanism_from_dict({"variant": "mcar", "params": {}})


def test_param_names():
    assert param_names(1, Mcar(0.2)) == ("p1",)
    assert param_names(1, MarLogisticAffine(0, 1)) == ("tau1a_prime", "tau1b_prime")
    assert param_names(2, NmarLogisticCentered(1, 2)) == ("tau2a", "tau2b")


def test_validate_flags_each_violation():
    d = Dataset([1.0, 2.0, 3.0, np.nan], [1.0, np.nan, 5.0, np.nan], [0, 0, 1, 3], 2)
    report = validate_dataset(d)
    assert not report
    text = " | ".join(report.violations)
    assert "record 1: y2 missing but m2 = 0" in text
    assert "record 2: y2 present" in text
    assert "record 3: cause code 3 exceeds" in text
    assert "record 3: y1 is not a finite number" in text


def test_empty_dataset_invalid():
    assert not validate_dataset(Dataset([], [], [], 1))


def test_partition_rejects_invalid():
    with pytest.raises(DatasetError):
        partition_by_pattern(Dataset([1.0], [np.nan], [0], 1))


codes = st.integers(0, 3)


@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), codes), min_size=1, max_size=40))
def test_partition_is_a_partition(rows):
    recs = [Observation(a, b if m == 0 else None, m) for a, b, m in rows]
    d = Dataset.from_records(recs, 3)
    parts = partition_by_pattern(d)
    union = np.sort(np.concatenate([parts[ell] for ell in range(4)]))
    assert np.array_equal(union, np.arange(len(d)))
    for ell in range(4):
        assert np.all(d.m2[parts[ell]] == ell)
    assert d.records == recs


def test_dataset_is_immutable():
    d = Dataset([1.0], [2.0], [0], 1)
    with pytest.raises(ValueError):
        d.y1[0] = 5.0
