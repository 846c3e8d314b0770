"""Analytic gradients of the contrastive and spectral losses, and the central
finite-difference oracle that checks them."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from .core import FeatureMatrix, RngState, gaussian_matrix
from .errors import DegeneracyError, NumericError, RangeError
from .losses import (
    DEFAULT_TEMPERATURE,
    infonce,
    normalize_rows,
    pad_spectra,
    resolve_weights,
    spec_loss,
    spectral_distribution,
)
from .spectral import SpectralDecomposition, svd

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
RELATIVE_FLOOR = 1e-8
GRAD_TOLERANCE = 1e-4
GAP_TOLERANCE = 1e-6

ScalarFn = Callable[[FeatureMatrix], float]
Coords = Sequence[Tuple[int, int]]


@dataclass(frozen=True)
class GradReport:
    name: str
    max_rel_error: float
    max_abs_error: float
    probe_count: int
    step_size: float
    tolerance: float = GRAD_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max_rel_error": self.max_rel_error,
            "max_abs_error": self.max_abs_error,
            "probe_count": self.probe_count,
            "step_size": self.step_size,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


@dataclass
class SuiteReport:
    seed: int
    reports: List[GradReport] = field(default_factory=list)
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.reports) and all(r.passed for r in self.reports)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "passed": self.passed,
            "skipped_degenerate": self.skipped,
            "reports": [r.to_dict() for r in self.reports],
        }


def relative_error(analytic: NDArray[np.float64], numeric: NDArray[np.float64]) -> NDArray[np.float64]:
    """``|a - f| / max(|a|, |f|, 1e-8)``."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), RELATIVE_FLOOR)
    return np.abs(analytic - numeric) / scale


def fd_gradient(
    f: ScalarFn, x: FeatureMatrix, h: float = FD_STEP, coords: Optional[Coords] = None
) -> FeatureMatrix:
    """Central differences ``(f(X + hE_ij) - f(X - hE_ij)) / 2h``.

    With ``coords`` only those entries are probed; the rest stay zero.
    """
    if not 1e-7 <= h <= 1e-3:
        raise RangeError("finite-difference step must lie in [1e-7, 1e-3]", context={"h": h})
    work = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(work)
    probes = coords if coords is not None else list(np.ndindex(*work.shape))
    for i, j in probes:
        original = work[i, j]
        work[i, j] = original + h
        forward = f(work)
        work[i, j] = original - h
        backward = f(work)
        work[i, j] = original
        if not (math.isfinite(forward) and math.isfinite(backward)):
            raise NumericError(
                "non-finite function value during finite differencing",
                context={"coord": [int(i), int(j)]},
            )
        grad[i, j] = (forward - backward) / (2 * h)
    return grad


def sample_coords(shape: Tuple[int, int], probes: int, rng: RngState) -> Tuple[List[Tuple[int, int]], RngState]:
    total = shape[0] * shape[1]
    if probes >= total:
        return list(np.ndindex(*shape)), rng
    flat = rng.generator().choice(total, size=probes, replace=False)
    return [divmod(int(c), shape[1]) for c in np.sort(flat)], rng.advance()


def check_gradient(
    name: str,
    analytic: FeatureMatrix,
    f: ScalarFn,
    x: FeatureMatrix,
    coords: Coords,
    h: float = FD_STEP,
    tolerance: float = GRAD_TOLERANCE,
) -> GradReport:
    numeric = fd_gradient(f, x, h, coords)
    rows = np.array([c[0] for c in coords])
    cols = np.array([c[1] for c in coords])
    a, n = analytic[rows, cols], numeric[rows, cols]
    report = GradReport(
        name=name,
        max_rel_error=float(relative_error(a, n).max()),
        max_abs_error=float(np.abs(a - n).max()),
        probe_count=len(coords),
        step_size=h,
        tolerance=tolerance,
    )
    logger.debug(f"{name}: max rel {report.max_rel_error:.2e} over {report.probe_count} probes")
    return report


def grad_infonce(
    x: FeatureMatrix, y: FeatureMatrix, tau: float = DEFAULT_TEMPERATURE
) -> Tuple[FeatureMatrix, FeatureMatrix]:
    """Gradients of batch-summed InfoNCE with respect to both batches."""
    infonce(x, y, tau)  # shape and degeneracy checks
    xh, nx = normalize_rows(x, "X")
    yh, ny = normalize_rows(y, "Y")
    logits = xh @ yh.T / tau
    weights = np.exp(logits - logits.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    dsim = (weights - np.eye(x.shape[0])) / tau

    dxh = dsim @ yh
    dyh = dsim.T @ xh
    dx = (dxh - np.sum(dxh * xh, axis=1, keepdims=True) * xh) / nx[:, None]
    dy = (dyh - np.sum(dyh * yh, axis=1, keepdims=True) * yh) / ny[:, None]
    return dx, dy


def _decompose(
    xe: FeatureMatrix,
    ye: FeatureMatrix,
    decompositions: Optional[Tuple[SpectralDecomposition, SpectralDecomposition]],
) -> Tuple[SpectralDecomposition, SpectralDecomposition]:
    return decompositions if decompositions is not None else (svd(xe), svd(ye))


def grad_hellinger_sigma(
    sigma_x: NDArray[np.float64],
    sigma_y: NDArray[np.float64],
    w: Optional[NDArray[np.float64]] = None,
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Gradient of the Hellinger loss with respect to both (zero-padded) spectra."""
    sx, sy = pad_spectra(sigma_x, sigma_y)
    weights = resolve_weights(sx.size, w)
    px = spectral_distribution(sx, weights).p
    py = spectral_distribution(sy, weights).p
    diff = np.sqrt(px) - np.sqrt(py)
    spread = float(np.linalg.norm(diff))
    if spread == 0:
        return np.zeros_like(sx), np.zeros_like(sy)
    scale = 1.0 / (math.sqrt(2.0) * spread)

    def pull(p: NDArray[np.float64], sigma: NDArray[np.float64], dsqrt: NDArray[np.float64]):
        # d sqrt(p) / dp is unbounded at p = 0; those entries carry no gradient.
        root = np.sqrt(p)
        dp = np.where(root > 0, dsqrt / (2.0 * np.where(root > 0, root, 1.0)), 0.0)
        norm = np.linalg.norm(weights * sigma)
        return weights * (dp - np.dot(dp, p) * p) / norm

    return pull(px, sx, scale * diff), pull(py, sy, -scale * diff)


def grad_hellinger(
    xe: FeatureMatrix,
    ye: FeatureMatrix,
    w: Optional[NDArray[np.float64]] = None,
    decompositions: Optional[Tuple[SpectralDecomposition, SpectralDecomposition]] = None,
) -> Tuple[FeatureMatrix, FeatureMatrix]:
    """Backpropagates through ``d sigma_i = u_i^T dF v_i``."""
    dec_x, dec_y = _decompose(xe, ye, decompositions)
    gx, gy = grad_hellinger_sigma(dec_x.sigma, dec_y.sigma, w)
    dx = (dec_x.u * gx[: dec_x.rank]) @ dec_x.v.T
    dy = (dec_y.u * gy[: dec_y.rank]) @ dec_y.v.T
    return dx, dy


def check_spectral_gap(dec: SpectralDecomposition, k: int, name: str = "F") -> None:
    """Top-k singular values must be simple and separated from the rest."""
    sigma = dec.sigma
    if k > dec.rank:
        raise DegeneracyError(
            f"{name}: k exceeds the numerical rank", context={"k": k, "rank": dec.rank}
        )
    upto = min(k, dec.rank - 1)
    gaps = sigma[:upto] - sigma[1 : upto + 1]
    if k == dec.rank:
        # the k-th value is then separated from the null space only by itself
        gaps = np.append(gaps, sigma[k - 1])
    smallest = float(gaps.min())
    if smallest < GAP_TOLERANCE * sigma[0]:
        raise DegeneracyError(
            f"{name}: near-degenerate singular gap; use finite differences or skip the step",
            context={"gap": smallest, "sigma_1": float(sigma[0]), "k": k},
        )


def right_vector_backprop(
    f: FeatureMatrix, dec: SpectralDecomposition, vbar: FeatureMatrix
) -> FeatureMatrix:
    """Pull a gradient on the top-k right singular vectors back to ``F``.

    Uses first-order eigenvector perturbation of ``C = F^T F``; directions
    truncated from the decomposition are treated as its null space.
    """
    k = vbar.shape[1]
    check_spectral_gap(dec, k)
    lam = dec.sigma**2
    vr = dec.v
    vk = vr[:, :k]

    overlap = vr.T @ vbar
    denom = lam[None, :k] - lam[:, None]
    diag = np.arange(k)
    denom[diag, diag] = 1.0
    coef = overlap / denom
    coef[diag, diag] = 0.0

    outside = (vbar - vr @ overlap) / lam[:k]
    cbar = vr @ coef @ vk.T + outside @ vk.T
    return f @ (cbar + cbar.T)


def grad_subspace(
    xe: FeatureMatrix,
    ye: FeatureMatrix,
    k: int,
    decompositions: Optional[Tuple[SpectralDecomposition, SpectralDecomposition]] = None,
) -> Tuple[FeatureMatrix, FeatureMatrix]:
    dec_x, dec_y = _decompose(xe, ye, decompositions)
    check_spectral_gap(dec_x, k, "X")
    check_spectral_gap(dec_y, k, "Y")
    vx, vy = dec_x.top_right(k), dec_y.top_right(k)
    deviation = vx.T @ vy - np.eye(k)
    spread = np.linalg.norm(deviation)
    if spread == 0:
        return np.zeros_like(xe), np.zeros_like(ye)
    dgram = deviation / (math.sqrt(2 * k) * spread)
    return (
        right_vector_backprop(xe, dec_x, vy @ dgram.T),
        right_vector_backprop(ye, dec_y, vx @ dgram),
    )


def grad_spectral(
    xe: FeatureMatrix,
    ye: FeatureMatrix,
    k: int,
    w: Optional[NDArray[np.float64]] = None,
    decompositions: Optional[Tuple[SpectralDecomposition, SpectralDecomposition]] = None,
) -> Tuple[FeatureMatrix, FeatureMatrix]:
    """Gradient of ``(hellinger + subspace) / 2``."""
    decs = _decompose(xe, ye, decompositions)
    hx, hy = grad_hellinger(xe, ye, w, decs)
    sx, sy = grad_subspace(xe, ye, k, decs)
    return 0.5 * (hx + sx), 0.5 * (hy + sy)


def run_suite(
    seed: int = 0,
    instances: int = 20,
    m: int = 12,
    n: int = 20,
    k: int = 3,
    tau: float = 0.1,
    probes: int = 40,
    h: float = FD_STEP,
) -> SuiteReport:
    """InfoNCE and spectral-loss gradients against central differences on random
    instances; instances violating the spectral-gap precondition are redrawn."""
    rng = RngState(seed)
    suite = SuiteReport(seed=seed)
    attempts = 0
    done = 0
    while done < instances:
        attempts += 1
        if attempts > 5 * instances:
            raise DegeneracyError(
                "too many degenerate instances in the gradient suite",
                context={"attempts": attempts},
            )
        x, rng = gaussian_matrix(rng, m, n)
        y, rng = gaussian_matrix(rng, m, n)
        dec_x, dec_y = svd(x), svd(y)
        try:
            sdx, sdy = grad_spectral(x, y, k, decompositions=(dec_x, dec_y))
        except DegeneracyError as e:
            logger.debug(f"redrawing degenerate instance: {e.message}")
            suite.skipped += 1
            continue

        idx, idy = grad_infonce(x, y, tau)
        cx, rng = sample_coords(x.shape, probes, rng)
        cy, rng = sample_coords(y.shape, probes, rng)
        suite.reports.extend(
            [
                check_gradient(f"infonce/dX/{done}", idx, lambda a: infonce(a, y, tau), x, cx, h),
                check_gradient(f"infonce/dY/{done}", idy, lambda b: infonce(x, b, tau), y, cy, h),
                check_gradient(
                    f"spectral/dX/{done}", sdx, lambda a: spec_loss(svd(a), dec_y, k)[2], x, cx, h
                ),
                check_gradient(
                    f"spectral/dY/{done}", sdy, lambda b: spec_loss(dec_x, svd(b), k)[2], y, cy, h
                ),
            ]
        )
        done += 1

    worst = max(r.max_rel_error for r in suite.reports)
    logger.info(f"gradient suite seed={seed}: {len(suite.reports)} checks, worst rel error {worst:.2e}")
    return suite
