"""Core types: feature matrices, the seeded RNG state, dense operations and the
matrix file handler base class."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np
from numpy.typing import NDArray
from typing_extensions import TypeAlias

from .errors import DimensionError, FileOperationError, NumericError, RangeError

FeatureMatrix: TypeAlias = NDArray[np.float64]

RNG_ALGORITHM = "numpy.PCG64/SeedSequence-v1"
_U64_MAX = 2**64 - 1


def as_feature_matrix(data, name: str = "matrix") -> FeatureMatrix:
    """Validate ``data`` as an m x n float64 matrix with finite entries."""
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionError(
            f"{name} must be two-dimensional", context={"ndim": int(matrix.ndim)}
        )
    rows, cols = matrix.shape
    if rows < 1 or cols < 1:
        raise DimensionError(
            f"{name} must have at least one row and one column",
            context={"shape": [rows, cols]},
        )
    if not np.all(np.isfinite(matrix)):
        raise NumericError(
            f"{name} contains non-finite entries",
            context={"nonfinite": int(np.count_nonzero(~np.isfinite(matrix)))},
        )
    return np.ascontiguousarray(matrix)


@dataclass(frozen=True)
class RngState:
    """Seeded, replayable random stream.

    Every draw builds a fresh PCG64 generator from ``(seed, stream)`` and returns the
    advanced state, so equal states always yield equal samples.
    """

    seed: int
    stream: int = 0
    algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        if not 0 <= self.seed <= _U64_MAX:
            raise RangeError(
                "RNG seed must be an unsigned 64-bit integer",
                context={"seed": self.seed},
            )

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(sequence))

    def advance(self) -> "RngState":
        return replace(self, stream=self.stream + 1)

    def fork(self, tag: int) -> "RngState":
        """Independent stream for a named branch (seed xor tag)."""
        return RngState(seed=(self.seed ^ tag) & _U64_MAX)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stream": self.stream, "algorithm": self.algorithm}


def _check_dims(**dims: int) -> None:
    for label, value in dims.items():
        if value < 1:
            raise DimensionError(
                f"dimension {label} must be at least 1", context={label: value}
            )


def standard_normal(rng: RngState, count: int) -> Tuple[NDArray[np.float64], RngState]:
    """Draw ``count`` i.i.d. N(0, 1) values."""
    if count < 0:
        raise DimensionError("sample count must be nonnegative", context={"count": count})
    draws = rng.generator().standard_normal(count)
    return draws, rng.advance()


def gaussian_matrix(
    rng: RngState, m: int, n: int, sigma: float = 1.0
) -> Tuple[FeatureMatrix, RngState]:
    """m x n matrix of i.i.d. N(0, sigma^2) draws."""
    _check_dims(m=m, n=n)
    if sigma < 0:
        raise RangeError("sigma must be nonnegative", context={"sigma": sigma})
    draws = rng.generator().standard_normal((m, n))
    return sigma * draws, rng.advance()


def random_orthogonal(rng: RngState, n: int) -> Tuple[FeatureMatrix, RngState]:
    """Haar-distributed n x n orthogonal matrix.

    QR of a Gaussian matrix with the signs of R's diagonal folded into Q.
    """
    _check_dims(n=n)
    g, rng = gaussian_matrix(rng, n, n)
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, rng


def frobenius_norm(a: FeatureMatrix) -> float:
    return float(np.linalg.norm(a, "fro"))


def matmul(a: FeatureMatrix, b: FeatureMatrix) -> FeatureMatrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            "matmul shapes do not conform",
            context={"left": list(a.shape), "right": list(b.shape)},
        )
    return a @ b


def transpose(a: FeatureMatrix) -> FeatureMatrix:
    return np.ascontiguousarray(a.T)


def scale(a: FeatureMatrix, c: float) -> FeatureMatrix:
    return c * a


def add(a: FeatureMatrix, b: FeatureMatrix) -> FeatureMatrix:
    if a.shape != b.shape:
        raise DimensionError(
            "add shapes do not conform",
            context={"left": list(a.shape), "right": list(b.shape)},
        )
    return a + b


class MatrixHandler(ABC):
    """Base class for matrix file formats."""

    @property
    @abstractmethod
    def format_name(self) -> str:
        """Short name used by ``--format``."""
        pass

    @property
    @abstractmethod
    def file_extensions(self) -> List[str]:
        """List of file extensions this handler supports."""
        pass

    @abstractmethod
    def decode(self, payload: bytes, source: str = "<bytes>") -> FeatureMatrix:
        """Parse a matrix from raw file bytes."""
        pass

    @abstractmethod
    def encode(self, matrix: FeatureMatrix) -> bytes:
        """Serialize a matrix to raw file bytes."""
        pass

    def read(self, path: str) -> FeatureMatrix:
        try:
            with open(path, "rb") as f:
                payload = f.read()
        except OSError as e:
            raise FileOperationError(
                f"Failed to read matrix: {e}", file=path, context={"byte_offset": 0}
            )
        return self.decode(payload, source=path)

    def write(self, matrix: FeatureMatrix, path: str) -> None:
        payload = self.encode(as_feature_matrix(matrix))
        try:
            with open(path, "wb") as f:
                f.write(payload)
        except OSError as e:
            raise FileOperationError(f"Failed to write matrix: {e}", file=path)
