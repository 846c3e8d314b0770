"""Singular value decomposition, Marchenko-Pastur bounds and the strong/weak/noise
partition of a feature spectrum."""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from .core import FeatureMatrix, as_feature_matrix, frobenius_norm
from .errors import ConvergenceError, DegenerateInputError, RangeError

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOLERANCE = 1e-12
JACOBI_TOLERANCE = 1e-14
MAX_SWEEPS = 60
TUKEY_FENCE = 1.5

SUBSPACES = ("strong", "weak", "noise")


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Thin SVD ``F = U diag(sigma) V^T`` truncated to numerical rank."""

    u: FeatureMatrix
    sigma: NDArray[np.float64]
    v: FeatureMatrix
    sweeps: int = 0

    @property
    def rank(self) -> int:
        return int(self.sigma.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.u.shape[0], self.v.shape[0])

    def reconstruct(self, sigma: Optional[NDArray[np.float64]] = None) -> FeatureMatrix:
        values = self.sigma if sigma is None else sigma
        return (self.u * values) @ self.v.T

    def top_right(self, k: int) -> FeatureMatrix:
        return self.v[:, :k]


@dataclass(frozen=True)
class MpBounds:
    lower: float
    upper: float
    vartheta: float
    m: int
    n: int


@dataclass(frozen=True, eq=False)
class SubspacePartition:
    """Contiguous index blocks (zero-based) of the descending spectrum."""

    strong: NDArray[np.int64]
    weak: NDArray[np.int64]
    noise: NDArray[np.int64]
    noise_edge: float
    strong_threshold: float
    vartheta: float = float("nan")
    forced_strong: bool = False

    @property
    def counts(self) -> Dict[str, int]:
        return {name: int(getattr(self, name).size) for name in SUBSPACES}

    @property
    def rank(self) -> int:
        return sum(self.counts.values())

    def indices(self) -> Dict[str, List[int]]:
        return {name: getattr(self, name).tolist() for name in SUBSPACES}


@dataclass(frozen=True)
class SpectralReport:
    counts: Dict[str, int]
    proportions: Dict[str, float]
    energy_fractions: Dict[str, float]
    cumulative_energy: List[float]
    noise_edge: float
    strong_threshold: float
    vartheta: float
    indices: Dict[str, List[int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "proportions": self.proportions,
            "energy_fractions": self.energy_fractions,
            "cumulative_energy": self.cumulative_energy,
            "noise_edge": self.noise_edge,
            "strong_threshold": self.strong_threshold,
            "vartheta": self.vartheta,
            "indices": self.indices,
        }


@lru_cache(maxsize=64)
def _round_robin(q: int) -> Tuple[Tuple[NDArray[np.int64], NDArray[np.int64]], ...]:
    """Circle-method schedule: each round pairs columns disjointly, and one sweep
    of rounds visits every pair exactly once."""
    players = list(range(q)) + ([-1] if q % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = sorted((min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0)
        if pairs:
            left = np.array([a for a, _ in pairs], dtype=np.int64)
            right = np.array([b for _, b in pairs], dtype=np.int64)
            rounds.append((left, right))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _one_sided_jacobi(
    a: FeatureMatrix, accumulate: bool
) -> Tuple[FeatureMatrix, Optional[FeatureMatrix], int]:
    """Hestenes rotations until all column pairs of ``a`` are orthogonal.

    Returns the rotated columns, the accumulated rotation (if requested) and the
    number of sweeps used.
    """
    a = a.copy()
    p, q = a.shape
    v = np.eye(q) if accumulate else None
    tol = max(JACOBI_TOLERANCE, 8 * np.finfo(np.float64).eps * math.sqrt(p))
    floor = (1e-17 * frobenius_norm(a)) ** 2
    rounds = _round_robin(q)

    residual = 0.0
    for sweep in range(1, MAX_SWEEPS + 1):
        rotations = 0
        residual = 0.0
        for left, right in rounds:
            ai = a[:, left]
            aj = a[:, right]
            alpha = np.einsum("ij,ij->j", ai, ai)
            beta = np.einsum("ij,ij->j", aj, aj)
            gamma = np.einsum("ij,ij->j", ai, aj)

            norms = np.sqrt(alpha * beta)
            ratio = np.abs(gamma) / np.where(norms > 0, norms, 1.0)
            active = (ratio > tol) & (np.minimum(alpha, beta) > floor)
            if not active.any():
                continue
            residual = max(residual, float(ratio[active].max()))
            rotations += int(np.count_nonzero(active))

            safe_gamma = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * safe_gamma)
            sign = np.where(zeta >= 0, 1.0, -1.0)
            t = sign / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)

            a[:, left] = c * ai - s * aj
            a[:, right] = s * ai + c * aj
            if v is not None:
                vi = v[:, left]
                vj = v[:, right]
                v[:, left] = c * vi - s * vj
                v[:, right] = s * vi + c * vj

        logger.debug(f"Jacobi sweep {sweep}: {rotations} rotations, residual {residual:.3e}")
        if rotations == 0:
            return a, v, sweep

    raise ConvergenceError(
        f"One-sided Jacobi did not converge in {MAX_SWEEPS} sweeps",
        context={"residual": residual, "tolerance": tol, "shape": [p, q]},
    )


def _check_tolerance(rank_tolerance: float) -> None:
    if not 0 < rank_tolerance <= 1e-3:
        raise RangeError(
            "rank_tolerance must lie in (0, 1e-3]",
            context={"rank_tolerance": rank_tolerance},
        )


def svd(f: FeatureMatrix, rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> SpectralDecomposition:
    """Thin SVD by one-sided Jacobi on the orientation with fewer columns.

    Singular values at or below ``rank_tolerance * sigma_1`` are truncated. Each
    triplet's sign is fixed so the largest-magnitude entry of its right singular
    vector is positive (lowest index on ties).
    """
    _check_tolerance(rank_tolerance)
    f = as_feature_matrix(f, "feature matrix")
    m, n = f.shape
    transposed = m < n
    work = f.T if transposed else f

    cols, rotation, sweeps = _one_sided_jacobi(work, accumulate=True)
    norms = np.sqrt(np.einsum("ij,ij->j", cols, cols))
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    rank = 0 if norms[0] == 0 else int(np.count_nonzero(norms > rank_tolerance * norms[0]))
    keep = order[:rank]

    sigma = norms[:rank].copy()
    left = cols[:, keep] / sigma if rank else np.zeros((work.shape[0], 0))
    right = rotation[:, keep]
    u, v = (right, left) if transposed else (left, right)

    if rank:
        pivots = np.argmax(np.abs(v), axis=0)
        flips = np.where(v[pivots, np.arange(rank)] < 0, -1.0, 1.0)
        u = u * flips
        v = v * flips

    logger.debug(f"svd {m}x{n}: rank {rank} after {sweeps} sweeps")
    return SpectralDecomposition(
        u=np.ascontiguousarray(u), sigma=sigma, v=np.ascontiguousarray(v), sweeps=sweeps
    )


def singular_values(
    f: FeatureMatrix, rank_tolerance: float = DEFAULT_RANK_TOLERANCE
) -> NDArray[np.float64]:
    """Descending spectrum only; skips accumulating the rotations."""
    _check_tolerance(rank_tolerance)
    f = as_feature_matrix(f, "feature matrix")
    work = f.T if f.shape[0] < f.shape[1] else f
    cols, _, _ = _one_sided_jacobi(work, accumulate=False)
    norms = np.sort(np.sqrt(np.einsum("ij,ij->j", cols, cols)))[::-1]
    if norms[0] == 0:
        return norms[:0].copy()
    return norms[norms > rank_tolerance * norms[0]].copy()


def mp_bounds(m: int, n: int, vartheta: float) -> MpBounds:
    """Marchenko-Pastur singular-value support ``[|sqrt n - sqrt m|, sqrt n + sqrt m] * vartheta``."""
    if m < 1 or n < 1:
        raise RangeError("dimensions must be at least 1", context={"m": m, "n": n})
    if not vartheta > 0:
        raise RangeError("vartheta must be positive", context={"vartheta": vartheta})
    rm, rn = math.sqrt(m), math.sqrt(n)
    return MpBounds(
        lower=vartheta * abs(rn - rm),
        upper=vartheta * (rn + rm),
        vartheta=vartheta,
        m=m,
        n=n,
    )


def estimate_vartheta(sigma: NDArray[np.float64], m: int, n: int) -> float:
    """Noise scale from the spectrum median over the unit-noise MP support center."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size == 0:
        raise DegenerateInputError("cannot estimate noise scale of an empty spectrum")
    positive = sigma[sigma > 0]
    if positive.size == 0:
        raise DegenerateInputError("cannot estimate noise scale of an all-zero spectrum")
    rm, rn = math.sqrt(m), math.sqrt(n)
    center = (abs(rn - rm) + (rn + rm)) / 2.0
    return float(np.median(positive)) / center


def partition_spectrum(
    sigma: NDArray[np.float64],
    noise_edge: float,
    strong_threshold: float,
    vartheta: float = float("nan"),
) -> SubspacePartition:
    """Threshold a descending spectrum into contiguous strong/weak/noise blocks.

    If no value clears the strong threshold but some clear the noise edge, the
    largest value is placed in the strong block.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    r = sigma.size
    if r == 0:
        raise DegenerateInputError("cannot partition an empty spectrum")

    signal = int(np.count_nonzero(sigma > noise_edge))
    strong = int(np.count_nonzero(sigma[:signal] > strong_threshold))
    forced = strong == 0 and signal > 0
    if forced:
        strong = 1
        logger.debug("no value above the strong threshold; forcing sigma_1 into strong set")

    index = np.arange(r, dtype=np.int64)
    return SubspacePartition(
        strong=index[:strong],
        weak=index[strong:signal],
        noise=index[signal:],
        noise_edge=float(noise_edge),
        strong_threshold=float(strong_threshold),
        vartheta=float(vartheta),
        forced_strong=forced,
    )


def partition(dec: SpectralDecomposition, m: int, n: int) -> SubspacePartition:
    """Noise = at or below the MP upper edge; strong = above the Tukey fence
    ``Q3 + 1.5 IQR`` of the full spectrum; weak = the rest."""
    if dec.rank == 0:
        raise DegenerateInputError("cannot partition a rank-0 decomposition")
    vartheta = estimate_vartheta(dec.sigma, m, n)
    edge = mp_bounds(m, n, vartheta).upper
    q1, q3 = np.quantile(dec.sigma, [0.25, 0.75])
    threshold = float(q3 + TUKEY_FENCE * (q3 - q1))
    return partition_spectrum(dec.sigma, edge, threshold, vartheta)


def cumulative_energy(sigma: NDArray[np.float64]) -> NDArray[np.float64]:
    energy = np.asarray(sigma, dtype=np.float64) ** 2
    total = energy.sum()
    if total == 0:
        raise DegenerateInputError("spectrum has zero energy")
    return np.cumsum(energy) / total


def spectral_report(dec: SpectralDecomposition, part: SubspacePartition) -> SpectralReport:
    """Counts, count proportions, energy fractions and cumulative energy."""
    energy = dec.sigma**2
    total = float(energy.sum())
    if total == 0:
        raise DegenerateInputError("spectrum has zero energy")
    counts = part.counts
    rank = max(dec.rank, 1)
    return SpectralReport(
        counts=counts,
        proportions={name: counts[name] / rank for name in SUBSPACES},
        energy_fractions={
            name: float(energy[getattr(part, name)].sum()) / total for name in SUBSPACES
        },
        cumulative_energy=cumulative_energy(dec.sigma).tolist(),
        noise_edge=part.noise_edge,
        strong_threshold=part.strong_threshold,
        vartheta=part.vartheta,
        indices=part.indices(),
    )


def compare_reports(before: SpectralReport, after: SpectralReport) -> dict:
    """Component proportions and energy fractions before and after enhancement."""
    return {
        "before": before.to_dict(),
        "after": after.to_dict(),
        "proportion_change": {
            name: after.proportions[name] - before.proportions[name] for name in SUBSPACES
        },
        "energy_change": {
            name: after.energy_fractions[name] - before.energy_fractions[name]
            for name in SUBSPACES
        },
    }
