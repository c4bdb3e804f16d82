import pytest
from hypothesis import given
from hypothesis import strategies as st

from quorumhsm.reliability import Tolerance, k_tolerance, tolerance


def test_k_tolerance_examples():
    assert k_tolerance(0.1, 3) == 0.999
    assert k_tolerance(1.0, 4) == 0.0
    assert k_tolerance(0.0, 1) == 1.0
    assert k_tolerance(0.5, 1) == 0.5


@pytest.mark.parametrize("p, k", [(-0.1, 1), (1.5, 2), (0.5, 0), (0.5, 1.5)])
def test_k_tolerance_rejects_bad_input(p, k):
    with pytest.raises(ValueError):
        k_tolerance(p, k)


@given(st.floats(0.0, 1.0), st.integers(1, 40))
def test_k_tolerance_monotone(p, k):
    assert 0.0 <= k_tolerance(p, k) <= k_tolerance(p, k + 1) <= 1.0


def test_tolerance_matrix_k_equals_t():
    assert tolerance(1, 1) == Tolerance(0, 0, 0)
    assert tolerance(3, 3) == Tolerance(2, 0, 0)
    assert tolerance(3, 3, quorums=4) == Tolerance(2, 0, 3)


def test_tolerance_matrix_threshold_rows():
    assert tolerance(5, 3) == Tolerance(2, 2, 2)
    assert tolerance(5, 1, quorums=2) == Tolerance(0, 4, 8)
    with pytest.raises(ValueError):
        tolerance(3, 4)
