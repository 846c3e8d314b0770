"""Curriculum schedules and subspace-specific spectral enhancement."""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from .core import FeatureMatrix, RngState, standard_normal
from .errors import DegenerateInputError, DimensionError, RangeError
from .spectral import SUBSPACES, SpectralDecomposition, SubspacePartition

logger = logging.getLogger(__name__)

Progress = Union[float, Fraction]

_ALPHA_EARLY = Fraction(15, 100)
_ALPHA_LATE = Fraction(1, 2)
_LAMBDA_WARM = Fraction(3, 10)
_LAMBDA_COOL = Fraction(7, 10)

# Minimum Monte Carlo draws accepted by frobenius_bound.
MIN_BOUND_SAMPLES = 100


def batch_scaling(batch_size: int) -> float:
    """``log(batch_size/256 + 1) / log(8)``."""
    if batch_size < 1:
        raise RangeError("batch_size must be at least 1", context={"batch_size": batch_size})
    return math.log(batch_size / 256 + 1) / math.log(8)


def alpha_schedule(t: int, total_steps: int, batch_size: int) -> float:
    """Three-branch cosine curriculum factor.

    Branches are chosen on the exact rational progress t/T with half-open
    intervals, so the jumps at p = 0.15 and p = 0.5 are kept as written.
    """
    if total_steps < 1:
        raise RangeError("total_steps must be at least 1", context={"total_steps": total_steps})
    if not 0 <= t <= total_steps:
        raise RangeError(
            "step must lie in [0, total_steps]", context={"t": t, "total_steps": total_steps}
        )
    beta = batch_scaling(batch_size)
    p = Fraction(t, total_steps)
    x = float(p)
    if p < _ALPHA_EARLY:
        return (0.8 - 0.15 * beta) * (1 - math.cos(6 * math.pi * x))
    if p < _ALPHA_LATE:
        return (0.4 - 0.08 * beta) * (1 + math.cos(3 * math.pi * float(p - _ALPHA_EARLY)))
    return (0.1 - 0.02 * beta) * (1 - math.cos(2 * math.pi * float(p - _ALPHA_LATE)))


def lambda_schedule(p: Progress) -> float:
    """Piecewise cosine weight of the spectral loss over progress ``p``."""
    progress = Fraction(p)
    if not 0 <= progress <= 1:
        raise RangeError("progress must lie in [0, 1]", context={"p": float(p)})
    if progress < _LAMBDA_WARM:
        return 0.05 + 0.015 * (1 - math.cos(math.pi * float(progress / _LAMBDA_WARM)))
    if progress < _LAMBDA_COOL:
        return 0.08
    ramp = float((progress - _LAMBDA_COOL) / (1 - _LAMBDA_COOL))
    return 0.08 - 0.025 * (1 - math.cos(math.pi * ramp))


@dataclass(frozen=True)
class ScheduleState:
    step: int
    total_steps: int
    batch_size: int
    progress: float
    beta: float
    alpha: float
    lam: float

    @classmethod
    def at(cls, step: int, total_steps: int, batch_size: int) -> "ScheduleState":
        return cls(
            step=step,
            total_steps=total_steps,
            batch_size=batch_size,
            progress=step / total_steps,
            beta=batch_scaling(batch_size),
            alpha=alpha_schedule(step, total_steps, batch_size),
            lam=lambda_schedule(Fraction(step, total_steps)),
        )

    def with_overrides(self, alpha=None, lam=None) -> "ScheduleState":
        return ScheduleState(
            step=self.step,
            total_steps=self.total_steps,
            batch_size=self.batch_size,
            progress=self.progress,
            beta=self.beta,
            alpha=self.alpha if alpha is None else float(alpha),
            lam=self.lam if lam is None else float(lam),
        )

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "total_steps": self.total_steps,
            "batch_size": self.batch_size,
            "progress": self.progress,
            "beta": self.beta,
            "alpha": self.alpha,
            "lambda": self.lam,
        }


def schedule_table(total_steps: int, batch_size: int) -> List[Tuple[int, float, float]]:
    """Rows ``(t, alpha, lambda)`` for t = 0..T."""
    return [
        (t, alpha_schedule(t, total_steps, batch_size), lambda_schedule(Fraction(t, total_steps)))
        for t in range(total_steps + 1)
    ]


@dataclass(frozen=True, eq=False)
class DeltaSpec:
    """Diagonal perturbation of the singular values, with the draws that made it."""

    deltas: NDArray[np.float64]
    gamma_noise: float
    epsilon_draws: NDArray[np.float64]
    alpha: float
    subspaces: Tuple[str, ...] = SUBSPACES
    rng: Optional[dict] = None

    @property
    def rank(self) -> int:
        return int(self.deltas.shape[0])

    def squared_norm(self) -> float:
        return float(np.dot(self.deltas, self.deltas))

    def to_dict(self) -> dict:
        return {
            "deltas": self.deltas.tolist(),
            "gamma_noise": self.gamma_noise,
            "epsilon_draws": self.epsilon_draws.tolist(),
            "alpha": self.alpha,
            "subspaces": list(self.subspaces),
            "rng": self.rng,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DeltaSpec":
        return cls(
            deltas=np.asarray(data["deltas"], dtype=np.float64),
            gamma_noise=float(data["gamma_noise"]),
            epsilon_draws=np.asarray(data["epsilon_draws"], dtype=np.float64),
            alpha=float(data["alpha"]),
            subspaces=tuple(data.get("subspaces", SUBSPACES)),
            rng=data.get("rng"),
        )


def noise_gamma(sigma: NDArray[np.float64], part: SubspacePartition) -> float:
    """Signal-to-noise energy ratio between S u W and N; 0 without noise energy."""
    noise_energy = float(np.sum(sigma[part.noise] ** 2))
    if part.noise.size == 0 or noise_energy == 0:
        return 0.0
    signal = np.concatenate([part.strong, part.weak])
    return float(np.sum(sigma[signal] ** 2)) / noise_energy


def build_delta(
    dec: SpectralDecomposition,
    part: SubspacePartition,
    alpha: float,
    rng: RngState,
    subspaces: Sequence[str] = SUBSPACES,
) -> Tuple[DeltaSpec, RngState]:
    """Strong values get ``alpha*(s_i/s_1)*eps_i`` jitter, weak values shrink by
    ``alpha*(s_i/s_1)^2*s_i``, noise values shrink by ``alpha*gamma*s_i``.

    Weak and noise shrinkage is capped at full suppression so ``s_i + delta_i >= 0``
    there; strong jitter is left unclipped.

    Only the listed ``subspaces`` are perturbed, but an epsilon is drawn for every
    strong index regardless so the random stream does not depend on the choice.
    """
    unknown = set(subspaces) - set(SUBSPACES)
    if unknown:
        raise RangeError(f"unknown subspaces: {sorted(unknown)}", context={"subspaces": list(subspaces)})
    if alpha < 0:
        raise RangeError("alpha must be nonnegative", context={"alpha": alpha})
    if dec.rank == 0 or dec.sigma[0] <= 0:
        raise DegenerateInputError("largest singular value is zero")
    if part.rank != dec.rank:
        raise DimensionError(
            "partition does not match decomposition rank",
            context={"partition": part.rank, "rank": dec.rank},
        )

    sigma = dec.sigma
    ratio = sigma / sigma[0]
    stream = rng.to_dict()
    eps, rng = standard_normal(rng, int(part.strong.size))
    gamma = noise_gamma(sigma, part)

    deltas = np.zeros(dec.rank)
    if "strong" in subspaces:
        deltas[part.strong] = alpha * ratio[part.strong] * eps
    if "weak" in subspaces:
        deltas[part.weak] = -np.minimum(alpha * ratio[part.weak] ** 2, 1.0) * sigma[part.weak]
    if "noise" in subspaces:
        deltas[part.noise] = -min(alpha * gamma, 1.0) * sigma[part.noise]

    if alpha * gamma > 1.0 and part.noise.size and "noise" in subspaces:
        logger.debug(f"noise suppression clipped: alpha*gamma = {alpha * gamma:.3g}")

    spec = DeltaSpec(
        deltas=deltas,
        gamma_noise=gamma,
        epsilon_draws=eps,
        alpha=float(alpha),
        subspaces=tuple(subspaces),
        rng=stream,
    )
    return spec, rng


def sample_deltas(
    dec: SpectralDecomposition,
    part: SubspacePartition,
    alpha: float,
    rng: RngState,
    count: int,
    subspaces: Sequence[str] = SUBSPACES,
) -> Tuple[List[DeltaSpec], RngState]:
    samples = []
    for _ in range(count):
        spec, rng = build_delta(dec, part, alpha, rng, subspaces)
        samples.append(spec)
    return samples, rng


def enhance(f: FeatureMatrix, delta: DeltaSpec, dec: SpectralDecomposition) -> FeatureMatrix:
    """``F' = U diag(sigma + delta) V^T``."""
    if delta.rank != dec.rank:
        raise DimensionError(
            "delta length does not match decomposition rank",
            context={"deltas": delta.rank, "rank": dec.rank},
        )
    if tuple(f.shape) != dec.shape:
        raise DimensionError(
            "feature matrix does not match decomposition",
            context={"matrix": list(f.shape), "decomposition": list(dec.shape)},
        )
    return dec.reconstruct(dec.sigma + delta.deltas)


@dataclass(frozen=True)
class BoundCheck:
    empirical_mean: float
    bound: float
    samples: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "empirical_mean": self.empirical_mean,
            "bound": self.bound,
            "samples": self.samples,
            "passed": self.passed,
        }


def perturbation_bound(dec: SpectralDecomposition, part: SubspacePartition, alpha: float) -> float:
    """``alpha^2 [|S| + sum_W (s_j/s_1)^4 s_j^2 + gamma^2 sum_N s_k^2]`` with unclipped gamma."""
    sigma = dec.sigma
    weak = sigma[part.weak]
    gamma = noise_gamma(sigma, part)
    return alpha**2 * (
        part.strong.size
        + float(np.sum((weak / sigma[0]) ** 4 * weak**2))
        + gamma**2 * float(np.sum(sigma[part.noise] ** 2))
    )


def frobenius_bound(
    delta_samples: Iterable[DeltaSpec],
    dec: SpectralDecomposition,
    part: SubspacePartition,
    alpha: float,
) -> BoundCheck:
    """Compare the empirical mean of ``||Delta||_F^2`` against the analytic bound,
    with a ``3/sqrt(n)`` Monte Carlo allowance."""
    norms = [spec.squared_norm() for spec in delta_samples]
    if len(norms) < MIN_BOUND_SAMPLES:
        raise RangeError(
            f"frobenius_bound needs at least {MIN_BOUND_SAMPLES} samples",
            context={"samples": len(norms), "minimum": MIN_BOUND_SAMPLES},
        )
    mean = float(np.mean(norms))
    bound = perturbation_bound(dec, part, alpha)
    passed = mean <= bound * (1 + 3 / math.sqrt(len(norms)))
    return BoundCheck(empirical_mean=mean, bound=bound, samples=len(norms), passed=passed)
