import math

import numpy as np
import pytest

from spectral_sde.core import RngState, gaussian_matrix, random_orthogonal
from spectral_sde.enhance import ScheduleState
from spectral_sde.errors import ContractError, DegenerateInputError, DimensionError, RangeError
from spectral_sde.losses import (
    LossReport,
    cosine,
    default_k,
    hellinger_loss,
    infonce,
    spec_loss,
    spectral_weights,
    subspace_loss,
    total_loss,
)
from spectral_sde.spectral import SubspacePartition, svd
from tests.utils import diagonal_decomposition_input

SCHEDULE = ScheduleState.at(500, 1000, 32)


def _correlated_pair(seed, m=16, n=8, scale=0.01):
    x = diagonal_decomposition_input([10.0, 6.0, 3.0, 2.0, 1.5, 1.0, 0.7, 0.5], m, n, seed=seed)
    noise, _ = gaussian_matrix(RngState(seed + 100), m, n, scale)
    return x, x + noise


def test_cosine_examples():
    v = np.array([0.3, -1.2, 2.0])
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-15)
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_cosine_orthogonal_invariance():
    rng = RngState(1)
    a, rng = gaussian_matrix(rng, 1, 6)
    b, rng = gaussian_matrix(rng, 1, 6)
    q, _ = random_orthogonal(rng, 6)
    assert cosine(q @ a.ravel(), q @ b.ravel()) == pytest.approx(cosine(a, b), abs=1e-10)


def test_cosine_zero_vector():
    with pytest.raises(DegenerateInputError):
        cosine(np.zeros(2), np.ones(2))


def test_infonce_single_pair_is_zero():
    assert infonce(np.array([[1.0, 2.0]]), np.array([[-3.0, 0.5]]), 0.1) == 0.0


def test_infonce_identity_example():
    assert infonce(np.eye(2), np.eye(2), 1.0) == pytest.approx(2 * math.log(1 + math.exp(-1)), rel=1e-12)
    assert infonce(np.eye(2), np.eye(2), 1.0) == pytest.approx(0.62652, abs=1e-5)


def test_infonce_shared_rotation_invariance():
    rng = RngState(2)
    x, rng = gaussian_matrix(rng, 6, 4)
    y, rng = gaussian_matrix(rng, 6, 4)
    q, _ = random_orthogonal(rng, 4)
    assert infonce(x @ q.T, y @ q.T, 0.1) == pytest.approx(infonce(x, y, 0.1), abs=1e-8)


def test_infonce_is_stable_at_small_temperature():
    x, _ = gaussian_matrix(RngState(3), 32, 16)
    value = infonce(x, -x, 0.001)
    assert math.isfinite(value) and value > 0


def test_infonce_errors():
    with pytest.raises(DegenerateInputError):
        infonce(np.array([[0.0, 0.0], [1.0, 0.0]]), np.eye(2), 0.1)
    with pytest.raises(DimensionError):
        infonce(np.eye(2), np.eye(3), 0.1)
    with pytest.raises(RangeError):
        infonce(np.eye(2), np.eye(2), 0.0)


def test_spectral_weights():
    assert spectral_weights(4).tolist() == [1.0, 0.75, 0.5, 0.25]


def test_hellinger_examples():
    sigma = np.array([5.0, 3.0, 1.0])
    assert hellinger_loss(sigma, sigma) == 0.0
    assert hellinger_loss(2.5 * sigma, sigma) == pytest.approx(0.0, abs=1e-12)
    assert hellinger_loss(np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])) == pytest.approx(
        1.0, rel=1e-15
    )


def test_hellinger_symmetric_and_nonnegative():
    a = np.array([9.0, 4.0, 2.0, 0.5])
    b = np.array([7.0, 6.0, 1.0])
    assert hellinger_loss(a, b) == hellinger_loss(b, a)
    assert hellinger_loss(a, b) > 0


def test_hellinger_pads_shorter_spectrum():
    assert hellinger_loss(np.array([3.0, 2.0]), np.array([3.0, 2.0, 0.0])) == 0.0


def test_hellinger_errors():
    with pytest.raises(DegenerateInputError):
        hellinger_loss(np.zeros(3), np.ones(3))
    with pytest.raises(ContractError):
        hellinger_loss(np.ones(2), np.ones(2), np.array([0.5, 1.0]))
    with pytest.raises(DimensionError):
        hellinger_loss(np.ones(2), np.ones(2), np.array([1.0]))


def test_subspace_examples():
    q, _ = random_orthogonal(RngState(4), 6)
    v = q[:, :2]
    assert subspace_loss(v, v) == pytest.approx(0.0, abs=1e-12)
    assert subspace_loss(q[:, :1], -q[:, :1]) == pytest.approx(math.sqrt(2), rel=1e-12)
    rotated = v @ np.array([[0.0, -1.0], [1.0, 0.0]])
    assert subspace_loss(v, rotated) == pytest.approx(1.0, rel=1e-12)


def test_subspace_rejects_non_orthonormal():
    with pytest.raises(ContractError):
        subspace_loss(np.array([[2.0], [0.0]]), np.array([[1.0], [0.0]]))
    with pytest.raises(DimensionError):
        subspace_loss(np.eye(3)[:, :2], np.eye(3)[:, :1])


def test_default_k():
    def blocks(strong):
        return SubspacePartition(
            strong=np.arange(strong), weak=np.arange(0), noise=np.arange(strong, 20),
            noise_edge=1.0, strong_threshold=2.0,
        )

    assert default_k(blocks(3), blocks(5)) == 3
    assert default_k(blocks(12), blocks(10)) == 8
    assert default_k(blocks(0), blocks(4)) == 1


def test_spec_loss_k_range():
    x, y = _correlated_pair(5)
    with pytest.raises(ContractError):
        spec_loss(svd(x), svd(y), 0)
    with pytest.raises(ContractError):
        spec_loss(svd(x), svd(y), 9)


def test_total_loss_on_identical_batches():
    x, _ = _correlated_pair(6)
    report = total_loss(x, x, SCHEDULE, k=2, tau=0.1)
    assert report.hellinger == 0.0
    assert report.subspace == pytest.approx(0.0, abs=1e-12)
    assert report.total == pytest.approx(report.feat, abs=1e-12)


def test_total_loss_arithmetic_identity():
    x, y = _correlated_pair(7)
    report = total_loss(x, y, SCHEDULE, k=2, tau=0.1)
    assert report.spec == (report.hellinger + report.subspace) / 2
    assert report.total == report.feat + report.lam * report.spec
    assert report.to_dict()["lambda"] == report.lam == 0.08


def test_total_loss_zero_lambda():
    x, y = _correlated_pair(8)
    report = total_loss(x, y, SCHEDULE.with_overrides(lam=0.0), k=2, tau=0.1)
    assert report.total == report.feat


@pytest.mark.parametrize(
    "mode, term",
    [("infonce_only", lambda r: 0.0), ("feat_plus_hellinger", lambda r: r.hellinger),
     ("feat_plus_subspace", lambda r: r.subspace), ("sde", lambda r: r.spec)],
)
def test_total_loss_modes(mode, term):
    x, y = _correlated_pair(9)
    report = total_loss(x, y, SCHEDULE, k=2, tau=0.1, mode=mode)
    assert isinstance(report, LossReport)
    assert report.mode == mode
    assert report.total == report.feat + report.lam * term(report)


def test_total_loss_unknown_mode():
    x, y = _correlated_pair(9)
    with pytest.raises(RangeError):
        total_loss(x, y, SCHEDULE, k=2, mode="spectral_only")


def test_total_loss_default_k_from_partitions():
    x, y = _correlated_pair(10)
    report = total_loss(x, y, SCHEDULE)
    assert 1 <= report.k <= 8


def test_shared_rotation_preserves_every_component():
    # Small noise keeps the sign convention picking the same entry on both sides.
    x, y = _correlated_pair(11, scale=1e-4)
    base = total_loss(x, y, SCHEDULE, k=2, tau=0.1)
    rng = RngState(12)
    for _ in range(50):
        q, rng = random_orthogonal(rng, 8)
        rotated = total_loss(x @ q.T, y @ q.T, SCHEDULE, k=2, tau=0.1)
        assert rotated.feat == pytest.approx(base.feat, abs=1e-8)
        assert rotated.hellinger == pytest.approx(base.hellinger, abs=1e-8)
        assert rotated.subspace == pytest.approx(base.subspace, abs=1e-8)


def test_one_sided_rotation_breaks_subspace_alignment():
    x, y = _correlated_pair(13)
    base = total_loss(x, y, SCHEDULE, k=2, tau=0.1)
    rng = RngState(14)
    for _ in range(50):
        q, rng = random_orthogonal(rng, 8)
        rotated = total_loss(x, y @ q.T, SCHEDULE, k=2, tau=0.1)
        assert rotated.hellinger == pytest.approx(base.hellinger, abs=1e-8)
        assert rotated.subspace > base.subspace
