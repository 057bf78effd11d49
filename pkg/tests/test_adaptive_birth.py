import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfstrack.adaptive_birth import (
    AdaptiveBirthConfig,
    association_probabilities,
    association_probability,
    birth_existence,
    birth_existences,
    make_birth_bernoulli,
)
from rfstrack.assignment import Assignment
from rfstrack.components import Origin
from rfstrack.exceptions import ConfigurationError, ContractViolation


def _cfg(r_b_max=0.1, lam=0.1):
    return AdaptiveBirthConfig(r_b_max, lam, 100.0 * np.eye(4))


def test_existence_is_shared_by_unassociated_measurements():
    cfg = _cfg(r_b_max=1.0, lam=2.0)
    r = birth_existences([0.0, 0.5, 1.0, 0.0], cfg)
    free = np.array([1.0, 0.5, 0.0, 1.0])
    assert np.allclose(r, free / free.sum() * 2.0)
    assert birth_existence([0.0, 0.5, 1.0, 0.0], 2, cfg) == 0.0


def test_existence_is_capped():
    assert birth_existences([0.0], _cfg(r_b_max=0.1, lam=5.0)).tolist() == [0.1]


def test_all_associated_gives_no_births():
    assert birth_existences([1.0, 1.0], _cfg()).tolist() == [0.0, 0.0]


def test_association_probability_from_assignments():
    hyps = [(np.log(0.7), Assignment((0, 3), 1.0)), (np.log(0.3), Assignment((2, 1), 2.0))]
    assert association_probability(0, hyps, 2) == pytest.approx(0.7)
    assert association_probability(1, hyps, 2) == pytest.approx(0.3)
    assert association_probability(1, hyps, [2, 1]) == pytest.approx(0.0)


def test_association_probabilities_need_normalised_weights():
    with pytest.raises(ContractViolation):
        association_probabilities(np.log([0.5, 0.4]), [[True], [False]])
    with pytest.raises(ContractViolation):
        birth_existence([], 0, _cfg())


def test_birth_bernoulli_placement():
    b = make_birth_bernoulli([3.0, 4.0], 0.05, _cfg(), next_time=7, z_index=2, track_id=11)
    assert b.density.mean.tolist() == [3.0, 0.0, 4.0, 0.0]
    assert np.array_equal(b.density.cov, 100.0 * np.eye(4))
    assert (b.r, b.birth_time, b.origin, b.origin_measurement, b.track_id) == (
        0.05, 7, Origin.ADAPTIVE_BIRTH, 2, 11
    )


def test_schedules():
    assert _cfg(lam=[10.0, 0.1]).expected_births(1) == 10.0
    assert _cfg(lam=[10.0, 0.1]).expected_births(50) == 0.1
    assert _cfg(lam=lambda k: 2.0 * k).expected_births(3) == 6.0
    with pytest.raises(ConfigurationError):
        _cfg(lam=[1.0]).expected_births(None)
    with pytest.raises(ConfigurationError):
        AdaptiveBirthConfig(1.5, 1.0, np.eye(4))
    with pytest.raises(ConfigurationError):
        AdaptiveBirthConfig(0.5, 1.0, -np.eye(4))


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30),
    st.floats(0.0, 1.0),
    st.floats(0.0, 50.0),
)
def test_births_bounded_and_sum_at_most_expected(r_u, r_b_max, lam):
    r = birth_existences(r_u, AdaptiveBirthConfig(r_b_max, lam, np.eye(4)))
    assert np.all(r >= 0) and np.all(r <= r_b_max + 1e-15)
    assert r.sum() <= lam + 1e-9
