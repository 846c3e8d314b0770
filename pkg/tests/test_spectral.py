import math

import numpy as np
import pytest

from spectral_sde import spectral
from spectral_sde.core import RngState, gaussian_matrix, random_orthogonal
from spectral_sde.errors import ConvergenceError, DegenerateInputError, NumericError, RangeError
from spectral_sde.spectral import (
    SpectralDecomposition,
    compare_reports,
    cumulative_energy,
    estimate_vartheta,
    mp_bounds,
    partition,
    partition_spectrum,
    singular_values,
    spectral_report,
    svd,
)
from tests.utils import planted_matrix


def _check_contract(f, dec, tol=1e-9):
    r = dec.rank
    assert np.linalg.norm(dec.u.T @ dec.u - np.eye(r)) <= tol
    assert np.linalg.norm(dec.v.T @ dec.v - np.eye(r)) <= tol
    assert np.linalg.norm(dec.reconstruct() - f) <= tol * max(1.0, np.linalg.norm(f))
    assert np.all(np.diff(dec.sigma) <= 0)


def test_diagonal():
    dec = svd(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(dec.sigma, [3.0, 2.0, 1.0], atol=1e-14)


def test_permutation_matrix():
    dec = svd(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(dec.sigma, [1.0, 1.0], atol=1e-14)


@pytest.mark.parametrize("shape", [(50, 128), (128, 50), (1, 7), (7, 1), (12, 12)])
def test_reconstruction(shape):
    f, _ = gaussian_matrix(RngState(sum(shape)), *shape)
    dec = svd(f)
    assert np.linalg.norm(dec.reconstruct() - f) / np.linalg.norm(f) <= 1e-10
    _check_contract(f, dec)


def test_sign_convention():
    f, _ = gaussian_matrix(RngState(9), 8, 6)
    dec = svd(f)
    for j in range(dec.rank):
        column = dec.v[:, j]
        assert column[np.argmax(np.abs(column))] > 0


def test_deterministic():
    f, _ = gaussian_matrix(RngState(4), 20, 30)
    a, b = svd(f), svd(f)
    assert a.sigma.tobytes() == b.sigma.tobytes()
    assert a.v.tobytes() == b.v.tobytes()


def test_rank_truncation():
    rng = RngState(2)
    a, rng = gaussian_matrix(rng, 6, 2)
    b, _ = gaussian_matrix(rng, 2, 5)
    dec = svd(a @ b)
    assert dec.rank == 2
    assert dec.u.shape == (6, 2) and dec.v.shape == (5, 2)


def test_all_zero_matrix_has_rank_zero():
    assert svd(np.zeros((3, 4))).rank == 0


def test_orthogonal_invariance_of_spectrum():
    rng = RngState(6)
    f, rng = gaussian_matrix(rng, 15, 25)
    q, _ = random_orthogonal(rng, 15)
    assert np.allclose(svd(q @ f).sigma, svd(f).sigma, atol=1e-8, rtol=0)


def test_singular_values_match_svd():
    f, _ = gaussian_matrix(RngState(8), 30, 10)
    assert np.allclose(singular_values(f), svd(f).sigma, atol=1e-10, rtol=0)


def test_invalid_inputs():
    with pytest.raises(RangeError):
        svd(np.eye(2), rank_tolerance=0.0)
    with pytest.raises(RangeError):
        svd(np.eye(2), rank_tolerance=0.1)
    with pytest.raises(NumericError):
        svd(np.array([[1.0, np.nan]]))


def test_sweep_cap_reports_residual(monkeypatch):
    monkeypatch.setattr(spectral, "MAX_SWEEPS", 1)
    f, _ = gaussian_matrix(RngState(1), 10, 10)
    with pytest.raises(ConvergenceError) as exc:
        svd(f)
    assert exc.value.context["residual"] > 0


@pytest.mark.slow
def test_svd_contract_on_random_matrices():
    rng = RngState(2024)
    for _ in range(100):
        dims = rng.generator().integers(1, [129, 513])
        rng = rng.advance()
        f, rng = gaussian_matrix(rng, int(dims[0]), int(dims[1]))
        _check_contract(f, svd(f))


def test_mp_bounds_examples():
    bounds = mp_bounds(100, 400, 1.0)
    assert (bounds.lower, bounds.upper) == (10.0, 30.0)
    assert mp_bounds(50, 50, 2.0).lower == 0.0
    swapped = mp_bounds(400, 100, 1.0)
    assert (swapped.lower, swapped.upper) == (10.0, 30.0)


def test_mp_bounds_rejects_bad_scale():
    with pytest.raises(RangeError):
        mp_bounds(3, 4, 0.0)


@pytest.mark.slow
def test_mp_bounds_hold_for_gaussian_matrices():
    rng = RngState(77)
    inside = 0
    for _ in range(200):
        f, rng = gaussian_matrix(rng, 100, 400)
        sigma = singular_values(f)
        inside += sigma[0] <= 30 * 1.05 and sigma[-1] >= 10 * 0.95
    assert inside >= 198


def test_vartheta_direct_substitution():
    assert estimate_vartheta(np.array([5.0, 5.0, 5.0]), 3, 3) == pytest.approx(5 / math.sqrt(3), rel=1e-15)


def test_vartheta_is_homogeneous():
    sigma = singular_values(gaussian_matrix(RngState(3), 20, 40)[0])
    assert estimate_vartheta(4.0 * sigma, 20, 40) == pytest.approx(4.0 * estimate_vartheta(sigma, 20, 40), rel=1e-14)


@pytest.mark.slow
def test_vartheta_recovers_unit_noise():
    sigma = singular_values(gaussian_matrix(RngState(5), 200, 800)[0])
    assert 0.8 < estimate_vartheta(sigma, 200, 800) < 1.2


def test_vartheta_rejects_zero_spectrum():
    with pytest.raises(DegenerateInputError):
        estimate_vartheta(np.zeros(3), 3, 3)
    with pytest.raises(DegenerateInputError):
        estimate_vartheta(np.array([]), 3, 3)


def test_partition_straddling_thresholds():
    part = partition_spectrum(np.array([10.0, 0.1]), noise_edge=1.0, strong_threshold=5.0)
    assert part.strong.tolist() == [0]
    assert part.weak.tolist() == []
    assert part.noise.tolist() == [1]


def test_partition_forces_top_value_strong():
    part = partition_spectrum(np.array([3.0, 2.0, 0.5]), noise_edge=1.0, strong_threshold=10.0)
    assert part.forced_strong
    assert part.strong.tolist() == [0]
    assert part.weak.tolist() == [1]


def test_partition_all_noise_has_no_strong():
    part = partition_spectrum(np.array([0.5, 0.4]), noise_edge=1.0, strong_threshold=10.0)
    assert part.counts == {"strong": 0, "weak": 0, "noise": 2}


def test_partition_pure_noise():
    f, _ = gaussian_matrix(RngState(12), 100, 400)
    dec = svd(f)
    part = partition(dec, 100, 400)
    assert part.strong.size <= 1
    # the median-based noise scale sits slightly low, so at most the top few values clear the edge
    assert part.noise.size >= dec.rank - 3
    assert np.all(dec.sigma[part.noise] <= part.noise_edge)


def test_partition_recovers_planted_signal():
    f, _, _ = planted_matrix(13, strengths=(120.0, 110.0, 100.0, 90.0, 80.0))
    part = partition(svd(f), 100, 400)
    signal = set(part.strong.tolist()) | set(part.weak.tolist())
    assert {0, 1, 2, 3, 4} <= signal
    assert not {0, 1, 2, 3, 4} & set(part.noise.tolist())


def test_partition_is_exhaustive_and_contiguous():
    f, _, _ = planted_matrix(14, m=40, n=90, strengths=(60.0, 30.0, 20.0))
    dec = svd(f)
    part = partition(dec, 40, 90)
    joined = np.concatenate([part.strong, part.weak, part.noise])
    assert joined.tolist() == list(range(dec.rank))
    assert np.all(dec.sigma[part.strong] > part.strong_threshold)


def test_partition_scale_equivariance():
    f, _, _ = planted_matrix(15, m=40, n=90, strengths=(60.0, 30.0, 20.0))
    base = partition(svd(f), 40, 90)
    scaled = partition(svd(7.5 * f), 40, 90)
    assert base.indices() == scaled.indices()


def test_partition_rejects_rank_zero():
    with pytest.raises(DegenerateInputError):
        partition(svd(np.zeros((3, 3))), 3, 3)


def _identity_decomposition(sigma):
    r = len(sigma)
    return SpectralDecomposition(u=np.eye(r), sigma=np.asarray(sigma, dtype=float), v=np.eye(r))


def test_report_equal_values():
    dec = _identity_decomposition([1.0, 1.0, 1.0, 1.0])
    part = spectral.SubspacePartition(
        strong=np.array([0]), weak=np.array([1]), noise=np.array([2, 3]), noise_edge=1.0, strong_threshold=0.5
    )
    report = spectral_report(dec, part)
    assert [report.energy_fractions[k] for k in ("strong", "weak", "noise")] == [0.25, 0.25, 0.5]
    assert report.proportions["noise"] == 0.5


def test_cumulative_energy_all_in_first():
    assert cumulative_energy(np.array([3.0, 0.0, 0.0])).tolist() == [1.0, 1.0, 1.0]


def test_report_serializes_fields():
    f, _, _ = planted_matrix(16, m=30, n=60, strengths=(50.0, 40.0))
    dec = svd(f)
    report = spectral_report(dec, partition(dec, 30, 60)).to_dict()
    for key in ("counts", "proportions", "energy_fractions", "cumulative_energy", "noise_edge", "strong_threshold", "vartheta"):
        assert key in report
    assert report["cumulative_energy"][-1] == pytest.approx(1.0, abs=1e-12)


def test_strong_energy_concentration():
    f, _, _ = planted_matrix(17)
    dec = svd(f)
    report = spectral_report(dec, partition(dec, 100, 400))
    assert report.energy_fractions["strong"] >= 0.85
    assert report.proportions["strong"] <= 0.2


def test_compare_reports_changes():
    dec = _identity_decomposition([4.0, 2.0, 1.0, 1.0])
    part = spectral.SubspacePartition(
        strong=np.array([0]), weak=np.array([1]), noise=np.array([2, 3]), noise_edge=1.0, strong_threshold=3.0
    )
    before = spectral_report(dec, part)
    after = spectral_report(_identity_decomposition([4.0, 1.0, 0.5, 0.5]), part)
    diff = compare_reports(before, after)
    assert diff["proportion_change"] == {"strong": 0.0, "weak": 0.0, "noise": 0.0}
    assert diff["energy_change"]["strong"] > 0
    assert diff["energy_change"]["noise"] < 0
