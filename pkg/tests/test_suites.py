import math

import numpy as np
import pytest

from qho_kam import matrix_spaces as ms
from qho_kam import suites


def test_series_bound_values():
    assert suites.series_bound(0) == pytest.approx(math.pi**2 - 1)
    assert suites.series_bound(2) == pytest.approx(4 * (math.pi**2 / 3 - 1) + 2 * math.pi**2 / 3)


def test_series_first_index_is_basel():
    # i = 1, s = 0: sum 1/j^2
    out = suites.series_suite(M=200000, i_values=(1,), s_values=(0.0,))
    assert out["table"]["s=0"]["sums"][1] == pytest.approx(math.pi**2 / 6, abs=1e-5)
    assert out["passed"]


def test_random_structured_shapes():
    rng = np.random.default_rng(0)
    A = suites.random_structured(rng, 12, 0.5, "hat_plus", 50)
    assert A.shape == (50, 12, 12)
    herm = [ms.check_structure(a, "hermitian", 1e-15) for a in A]
    assert 10 < sum(herm) < 40
    assert suites.random_structured(rng, 8, 0.5, "hat").shape == (8, 8)


def test_small_suites_pass():
    assert suites.column_norm_suite((8, 16), 20)["passed"]
    assert suites.weighted_hermite_suite(32, (0.5,))["passed"]
    assert suites.homological_suite(16, n_omega=4)["passed"]
