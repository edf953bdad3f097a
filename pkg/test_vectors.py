"""
Tests for the test-vector presets.
"""

import numpy as np
import pytest

from src.errors import DomainError
from src.vectors import PRESETS, make_test_vector, sup_norm


@pytest.mark.parametrize("preset", PRESETS)
@pytest.mark.parametrize("beta", [1, 2])
def test_presets_are_unit_vectors(preset, beta):
    x, desc = make_test_vector(preset, 64, beta, seed=3)
    assert x.shape == (64,)
    assert abs(np.linalg.norm(x) - 1.0) <= 1e-12
    assert desc.startswith(preset)


def test_sup_norms():
    n = 256
    assert sup_norm(make_test_vector("uniform", n)[0]) == pytest.approx(n ** -0.5)
    assert sup_norm(make_test_vector("slab", n)[0]) == pytest.approx((2.0 / n) ** 0.5)
    assert sup_norm(make_test_vector("decay", n)[0]) == pytest.approx(n ** -0.25, rel=1e-9)
    assert sup_norm(make_test_vector("e1", n)[0]) == 1.0


def test_complex_phase_pattern():
    x, _ = make_test_vector("uniform", 16, beta=2)
    assert np.iscomplexobj(x)
    assert np.allclose(np.abs(x), 0.25)
    e1, _ = make_test_vector("e1", 16, beta=2)
    assert e1[0] == 1.0


def test_signs_and_haar_are_seeded():
    a, _ = make_test_vector("signs", 32, seed=5)
    b, _ = make_test_vector("signs", 32, seed=5)
    c, _ = make_test_vector("signs", 32, seed=6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert set(np.round(a * np.sqrt(32), 12)) <= {-1.0, 1.0}


def test_bad_arguments():
    with pytest.raises(DomainError):
        make_test_vector("gaussian", 10)
    with pytest.raises(DomainError):
        make_test_vector("uniform", 1)
    with pytest.raises(DomainError):
        make_test_vector("uniform", 10, beta=4)
