"""
Tests for decomposition, overlaps and the X_n / Y_n processes.
"""

import math

import numpy as np
import pytest
from scipy import stats

from src import bridgestats, spectral
from src.ensembles import WignerMatrix, goe_spec, gue_spec, sample_wigner
from src.errors import DomainError
from src.vectors import make_test_vector


@pytest.fixture(scope="module")
def goe_setup():
    spec = goe_spec(200, seed=21)
    M = sample_wigner(spec, replica=0)
    d = spectral.decompose(M)
    x, vid = make_test_vector("uniform", 200, 1)
    return M, d, x, vid


def test_decompose_sorted_and_accurate(goe_setup):
    M, d, _, _ = goe_setup
    assert np.all(np.diff(d.eigenvalues) >= 0)
    assert spectral.reconstruction_error(M, d) <= 1e-12
    U = d.eigenvectors
    assert np.max(np.abs(U.T @ U - np.eye(d.n))) <= 1e-12


def test_decompose_complex():
    M = sample_wigner(gue_spec(60, seed=2))
    d = spectral.decompose(M)
    assert spectral.reconstruction_error(M, d) <= 1e-12
    assert np.iscomplexobj(d.eigenvectors)


def test_randomize_phases_keeps_overlap_moduli(goe_setup):
    _, d, x, _ = goe_setup
    r = spectral.randomize_phases(d, seed=1, replica=4)
    assert r.randomized
    assert np.allclose(np.abs(spectral.overlaps(r, x)), np.abs(spectral.overlaps(d, x)), atol=1e-15)
    with pytest.raises(DomainError):
        spectral.randomize_phases(r, seed=1)


@pytest.mark.parametrize("spec", [goe_spec(50, seed=5), gue_spec(50, seed=5)], ids=["goe", "gue"])
def test_phase_seed_leaves_path_bit_identical(spec):
    M = sample_wigner(spec)
    d = spectral.decompose(M)
    x, vid = make_test_vector("uniform", 50, spec.beta)
    base = spectral.process_path(spectral.overlaps(d, x), spec.beta, vid).partial_sums
    for seed in (1, 2):
        r = spectral.randomize_phases(d, seed)
        assert np.array_equal(spectral.process_path(spectral.overlaps(r, x), spec.beta, vid).partial_sums, base)
        assert spectral.reconstruction_error(M, r) <= 1e-12
    p1 = spectral.randomize_phases(d, 1).phased_eigenvectors
    p2 = spectral.randomize_phases(d, 2).phased_eigenvectors
    assert not np.array_equal(p1, p2)
    assert np.allclose(np.abs(p1), np.abs(d.eigenvectors), atol=1e-15)


def test_overlaps_preconditions(goe_setup):
    _, d, x, _ = goe_setup
    with pytest.raises(DomainError):
        spectral.overlaps(d, 2 * x)
    with pytest.raises(DomainError):
        spectral.overlaps(d, x[:-1])
    with pytest.raises(DomainError):
        spectral.overlaps(d, x.astype(complex) * 1j)


def test_process_path_endpoints(goe_setup):
    _, d, x, vid = goe_setup
    y = spectral.overlaps(d, x)
    path = spectral.process_path(y, 1, vid)
    assert path.partial_sums[0] == 0.0
    assert abs(path.value(1.0)) <= 1e-12
    assert path.value(0.0) == 0.0
    assert path.test_vector_id == "uniform"
    assert path.partial_sums.size == 201


def test_process_path_floor_semantics():
    y = np.array([1.0, 0.0, 0.0, 0.0])
    path = spectral.process_path(y, 1)
    # P_k = sqrt(n/2) (1 - k/4) for k >= 1
    assert path.index(0.25) == 1
    assert path.index(0.2499) == 0
    assert path.index(0.5) == 2
    assert path.index(3 / 4) == 3
    assert path.value(0.3) == pytest.approx(math.sqrt(2) * 0.75)
    assert path.max_jump == pytest.approx(math.sqrt(2) * 0.75)
    with pytest.raises(DomainError):
        path.index(1.5)


def test_process_path_rejects_non_unit():
    with pytest.raises(DomainError):
        spectral.process_path(np.ones(4), 1)


def test_energy_window_sum(goe_setup):
    _, d, x, _ = goe_setup
    y = spectral.overlaps(d, x)
    lam = d.eigenvalues
    full = spectral.energy_window_sum(d, y, lam[0] - 1, lam[-1] + 1, 1)
    assert abs(full) <= 1e-12
    # half-open: (lam_1, lam_n] drops the first eigenvalue
    w = np.abs(y) ** 2 - 1 / d.n
    drop_first = spectral.energy_window_sum(d, y, lam[0], lam[-1], 1)
    assert drop_first == pytest.approx(-math.sqrt(d.n / 2) * w[0], abs=1e-12)
    assert spectral.energy_window_sum(d, y, 10.0, 11.0, 1) == 0.0
    with pytest.raises(DomainError):
        spectral.energy_window_sum(d, y, 0.5, 0.5, 1)


def test_energy_process_matches_path(goe_setup):
    _, d, x, _ = goe_setup
    y = spectral.overlaps(d, x)
    path = spectral.process_path(y, 1)
    lam = d.eigenvalues
    Y = spectral.energy_process(d, y, [lam[0] - 1, lam[9], lam[-1] + 1], 1)
    assert Y[0] == 0.0
    assert Y[1] == path.partial_sums[10]
    assert Y[2] == path.partial_sums[-1]


def test_empirical_cdf_and_semicircle_distance(goe_setup):
    _, d, _, _ = goe_setup
    assert spectral.empirical_cdf(d, 10.0) == 1.0
    assert spectral.empirical_cdf(d, -10.0) == 0.0
    assert spectral.empirical_cdf(d, d.eigenvalues[49]) == pytest.approx(50 / 200)
    assert spectral.semicircle_cdf_distance(d) <= 0.05


def test_time_change_gap_bounded(goe_setup):
    _, d, x, _ = goe_setup
    y = spectral.overlaps(d, x)
    gap = spectral.time_change_gap(d, y, 1)
    sup, bound, ok = spectral.path_sup_bound(spectral.process_path(y, 1))
    assert ok and bound == pytest.approx(2 * math.sqrt(200))
    assert 0.0 <= gap <= 2 * sup + 1e-12


def test_multiplicity_audit():
    M = WignerMatrix(4, 1, np.diag([1.0, 1.0, 1.0, 2.0]))
    rep = spectral.multiplicity_audit(spectral.decompose(M))
    assert rep.max_multiplicity == 3
    assert rep.cluster_sizes == [3]


def test_delocalization_bound(goe_setup):
    _, d, x, _ = goe_setup
    y = spectral.overlaps(d, x)
    assert spectral.delocalization_bound_holds(spectral.process_path(y, 1), y)


@pytest.mark.slow
@pytest.mark.parametrize("make_spec", [goe_spec, gue_spec], ids=["goe", "gue"])
def test_edge_overlaps_are_exchangeable(make_spec):
    n, replicas = 40, 1000
    spec = make_spec(n, seed=17)
    x, _ = make_test_vector("uniform", n, spec.beta)
    first, last = np.empty(replicas), np.empty(replicas)
    for r in range(replicas):
        w = np.abs(spectral.overlaps(spectral.decompose(sample_wigner(spec, r)), x)) ** 2
        first[r], last[r] = w[0], w[-1]
    D = bridgestats.two_sample_ks(first, last)
    assert bridgestats.two_sample_ks_pvalue(D, replicas, replicas) > 1e-3
    # |y_1|^2 is Beta(beta/2, beta(n-1)/2) for the invariant ensembles
    law = stats.beta(spec.beta / 2, spec.beta * (n - 1) / 2)
    assert stats.kstest(first, law.cdf).pvalue > 1e-3
    assert stats.kstest(last, law.cdf).pvalue > 1e-3
