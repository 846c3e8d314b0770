"""Dual-domain contrastive objective: InfoNCE in feature space plus Hellinger and
subspace-Gram losses in spectral space."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from typing_extensions import Literal

from .core import FeatureMatrix
from .enhance import ScheduleState
from .errors import ContractError, DegenerateInputError, DimensionError, RangeError
from .spectral import SpectralDecomposition, SubspacePartition, partition, svd

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.02
MAX_SUBSPACE_K = 8
ORTHONORMAL_TOLERANCE = 1e-8

LossMode = Literal["sde", "infonce_only", "feat_plus_hellinger", "feat_plus_subspace"]
LOSS_MODES = ("sde", "infonce_only", "feat_plus_hellinger", "feat_plus_subspace")


def cosine(a: NDArray[np.float64], b: NDArray[np.float64]) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError("vectors differ in length", context={"a": a.size, "b": b.size})
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("cosine of a zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def normalize_rows(x: FeatureMatrix, name: str = "X") -> Tuple[FeatureMatrix, NDArray[np.float64]]:
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateInputError(
            f"{name} has zero-norm rows", context={"rows": zero[:10].tolist()}
        )
    return x / norms[:, None], norms


def _check_pair(x: FeatureMatrix, y: FeatureMatrix) -> None:
    if x.ndim != 2 or x.shape != y.shape:
        raise DimensionError(
            "query and target batches must share shape",
            context={"X": list(x.shape), "Y": list(y.shape)},
        )
    if x.shape[0] < 1:
        raise DimensionError("batch must hold at least one pair")


def _check_temperature(tau: float) -> None:
    if not tau > 0:
        raise RangeError("temperature must be positive", context={"tau": tau})


def similarity_matrix(x: FeatureMatrix, y: FeatureMatrix) -> FeatureMatrix:
    xh, _ = normalize_rows(x, "X")
    yh, _ = normalize_rows(y, "Y")
    return xh @ yh.T


def infonce(x: FeatureMatrix, y: FeatureMatrix, tau: float = DEFAULT_TEMPERATURE) -> float:
    """Batch-summed InfoNCE over cosine similarities, row-wise log-sum-exp."""
    _check_pair(x, y)
    _check_temperature(tau)
    logits = similarity_matrix(x, y) / tau
    top = logits.max(axis=1)
    lse = top + np.log(np.exp(logits - top[:, None]).sum(axis=1))
    return float(np.sum(lse - np.diag(logits)))


def spectral_weights(r: int) -> NDArray[np.float64]:
    """Linearly decaying ``w_i = 1 - (i-1)/r``."""
    if r < 1:
        raise RangeError("weight length must be at least 1", context={"r": r})
    return 1.0 - np.arange(r, dtype=np.float64) / r


@dataclass(frozen=True, eq=False)
class SpectralDistribution:
    p: NDArray[np.float64]
    weights: NDArray[np.float64]


def pad_spectra(
    sigma_x: NDArray[np.float64], sigma_y: NDArray[np.float64]
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    sx = np.asarray(sigma_x, dtype=np.float64)
    sy = np.asarray(sigma_y, dtype=np.float64)
    r = max(sx.size, sy.size)
    return np.pad(sx, (0, r - sx.size)), np.pad(sy, (0, r - sy.size))


def spectral_distribution(sigma: NDArray[np.float64], w: NDArray[np.float64]) -> SpectralDistribution:
    """L2-normalized weighted spectrum ``(w * sigma) / ||w * sigma||_2``."""
    weighted = w * sigma
    norm = np.linalg.norm(weighted)
    if norm == 0:
        raise DegenerateInputError("spectral distribution of an all-zero spectrum")
    return SpectralDistribution(p=weighted / norm, weights=w)


def resolve_weights(r: int, w: Optional[NDArray[np.float64]]) -> NDArray[np.float64]:
    if w is None:
        return spectral_weights(r)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (r,):
        raise DimensionError("weights do not match spectrum length", context={"w": w.size, "r": r})
    if np.any(w <= 0) or np.any(np.diff(w) > 0):
        raise ContractError("weights must be positive and nonincreasing")
    return w


def hellinger_loss(
    sigma_x: NDArray[np.float64],
    sigma_y: NDArray[np.float64],
    w: Optional[NDArray[np.float64]] = None,
) -> float:
    """``(1/sqrt 2) * ||sqrt(p_X) - sqrt(p_Y)||_2``; shorter spectra are zero-padded."""
    sx, sy = pad_spectra(sigma_x, sigma_y)
    weights = resolve_weights(sx.size, w)
    px = spectral_distribution(sx, weights).p
    py = spectral_distribution(sy, weights).p
    return float(np.linalg.norm(np.sqrt(px) - np.sqrt(py)) / math.sqrt(2.0))


def check_orthonormal(v: FeatureMatrix, name: str) -> None:
    k = v.shape[1]
    deviation = float(np.linalg.norm(v.T @ v - np.eye(k)))
    if deviation > ORTHONORMAL_TOLERANCE:
        raise ContractError(
            f"{name} columns are not orthonormal", context={"deviation": deviation}
        )


def subspace_loss(vx: FeatureMatrix, vy: FeatureMatrix) -> float:
    """``(1/sqrt(2k)) * ||Vx^T Vy - I_k||_F`` over orthonormal n x k bases."""
    if vx.ndim != 2 or vx.shape != vy.shape:
        raise DimensionError(
            "subspace bases must share shape", context={"Vx": list(vx.shape), "Vy": list(vy.shape)}
        )
    k = vx.shape[1]
    if k < 1:
        raise DimensionError("subspace dimension k must be at least 1")
    check_orthonormal(vx, "Vx")
    check_orthonormal(vy, "Vy")
    gram = vx.T @ vy
    return float(np.linalg.norm(gram - np.eye(k)) / math.sqrt(2 * k))


def default_k(part_x: SubspacePartition, part_y: SubspacePartition) -> int:
    """Strong-subspace size shared by both sides, capped at 8, at least 1."""
    return max(1, min(part_x.strong.size, part_y.strong.size, MAX_SUBSPACE_K))


def spec_loss(
    dec_x: SpectralDecomposition,
    dec_y: SpectralDecomposition,
    k: int,
    w: Optional[NDArray[np.float64]] = None,
) -> Tuple[float, float, float]:
    """Returns ``(hellinger, subspace, (hellinger + subspace) / 2)``."""
    if not 1 <= k <= min(dec_x.rank, dec_y.rank):
        raise ContractError(
            "k must lie in [1, min rank]",
            context={"k": k, "rank_x": dec_x.rank, "rank_y": dec_y.rank},
        )
    hellinger = hellinger_loss(dec_x.sigma, dec_y.sigma, w)
    subspace = subspace_loss(dec_x.top_right(k), dec_y.top_right(k))
    return hellinger, subspace, (hellinger + subspace) / 2


@dataclass(frozen=True)
class LossReport:
    feat: float
    hellinger: float
    subspace: float
    spec: float
    lam: float
    total: float
    temperature: float
    k: int
    mode: str = "sde"

    def to_dict(self) -> dict:
        return {
            "feat": self.feat,
            "hellinger": self.hellinger,
            "subspace": self.subspace,
            "spec": self.spec,
            "lambda": self.lam,
            "total": self.total,
            "temperature": self.temperature,
            "k": self.k,
            "mode": self.mode,
        }


def spectral_term(mode: LossMode, hellinger: float, subspace: float, spec: float) -> float:
    """The spectral quantity a loss mode weights by lambda."""
    if mode == "sde":
        return spec
    if mode == "feat_plus_hellinger":
        return hellinger
    if mode == "feat_plus_subspace":
        return subspace
    if mode == "infonce_only":
        return 0.0
    raise RangeError(f"unknown loss mode: {mode}", context={"choices": list(LOSS_MODES)})


def total_loss(
    xe: FeatureMatrix,
    ye: FeatureMatrix,
    schedule: ScheduleState,
    k: Optional[int] = None,
    tau: float = DEFAULT_TEMPERATURE,
    mode: LossMode = "sde",
    w: Optional[NDArray[np.float64]] = None,
    decompositions: Optional[Tuple[SpectralDecomposition, SpectralDecomposition]] = None,
) -> LossReport:
    """Assemble the dual-domain LossReport for enhanced batches.

    ``spec`` is always ``(hellinger + subspace) / 2``; ``total`` adds lambda times the
    mode's spectral term (``spec`` for the full objective).
    """
    _check_pair(xe, ye)
    feat = infonce(xe, ye, tau)
    dec_x, dec_y = decompositions if decompositions is not None else (svd(xe), svd(ye))
    if k is None:
        m, n = xe.shape
        k = default_k(partition(dec_x, m, n), partition(dec_y, m, n))
    hellinger, subspace, spec = spec_loss(dec_x, dec_y, k, w)
    lam = schedule.lam
    total = feat + lam * spectral_term(mode, hellinger, subspace, spec)
    return LossReport(
        feat=feat,
        hellinger=hellinger,
        subspace=subspace,
        spec=spec,
        lam=lam,
        total=total,
        temperature=tau,
        k=k,
        mode=mode,
    )
