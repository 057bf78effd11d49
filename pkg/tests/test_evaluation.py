import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rfstrack.evaluation import curves_from_csv, curves_to_csv, gospa, rms_over_runs
from rfstrack.exceptions import ConfigurationError


def test_gospa_empty_and_cardinality_only():
    assert gospa(np.zeros((0, 2)), np.zeros((0, 2))).total == 0.0
    g = gospa(np.zeros((3, 2)), np.zeros((0, 2)))
    assert g.total == pytest.approx(np.sqrt(3 * 50.0)) and g.n_missed == 3 and g.n_false == 0


def test_gospa_far_pair_counts_as_missed_and_false():
    g = gospa([[0.0, 0.0]], [[20.0, 0.0]])
    assert g.n_missed == 1 and g.n_false == 1 and g.localisation == 0.0
    assert g.total == pytest.approx(10.0)


def test_gospa_uses_position_indices():
    g = gospa([[1.0, 5.0, 2.0, -5.0]], [[1.0, 0.0, 5.0, 0.0]], position_indices=(0, 2))
    assert g.total == pytest.approx(3.0) and g.localisation == pytest.approx(3.0)


def test_gospa_rejects_other_alpha():
    with pytest.raises(ConfigurationError):
        gospa([[0.0]], [[1.0]], alpha=1.0)


def test_gospa_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(100):
        X = rng.uniform(0, 25, size=(rng.integers(0, 6), 2))
        Y = rng.uniform(0, 25, size=(rng.integers(0, 6), 2))
        g = gospa(X, Y)
        assert g.total == pytest.approx(oracles.brute_force_gospa(X, Y), abs=1e-9)
        assert g.total**2 == pytest.approx(g.localisation**2 + g.missed_cost**2 + g.false_cost**2, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_gospa_is_a_metric_on_samples(seed):
    rng = np.random.default_rng(seed)
    A, B, C = (rng.uniform(0, 20, size=(rng.integers(0, 4), 2)) for _ in range(3))
    ab, bc, ac = gospa(A, B).total, gospa(B, C).total, gospa(A, C).total
    assert ab == pytest.approx(gospa(B, A).total)
    assert ac <= ab + bc + 1e-9


def test_rms_over_runs_and_csv_round_trip():
    runs = [[gospa([[0.0, 0.0]], [[3.0, 4.0]]), gospa([], [])], [gospa([[0.0, 0.0]], []), gospa([], [])]]
    c = rms_over_runs(runs)
    assert c.total[0] == pytest.approx(np.sqrt((25 + 50) / 2)) and c.total[1] == 0.0
    assert c.across_time() == pytest.approx(np.sqrt((25 + 50) / 4))
    comp = c.components_across_time()
    assert comp["total"] ** 2 == pytest.approx(comp["localisation"] ** 2 + comp["missed"] ** 2 + comp["false"] ** 2)
    back = curves_from_csv(curves_to_csv(c))
    assert np.array_equal(back.total, c.total) and np.array_equal(back.missed, c.missed)
