import os
import tempfile
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from spectral_sde.core import RngState, gaussian_matrix, random_orthogonal


def get_fixture_path(filename: str) -> str:
    """Get the full path to a test fixture file."""
    base_dir = Path(__file__).parent / "fixtures"
    for root, _, files in os.walk(base_dir):
        if filename in files:
            return str(Path(root) / filename)
    raise FileNotFoundError(f"Fixture {filename} not found")


def create_temp_file(content, suffix: str) -> str:
    """Create a temporary file with given text or bytes content and suffix."""
    fd, path = tempfile.mkstemp(suffix=suffix)
    mode = "wb" if isinstance(content, bytes) else "w"
    try:
        with os.fdopen(fd, mode) as tmp:
            tmp.write(content)
    except Exception:
        os.unlink(path)
        raise
    return path


def read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def planted_matrix(
    seed: int,
    m: int = 100,
    n: int = 400,
    strengths: Sequence[float] = (400.0, 350.0, 300.0, 250.0, 200.0),
    noise: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Low-rank signal ``sum s_i u_i v_i^T`` plus i.i.d. Gaussian noise.

    Returns the matrix and the planted left and right directions.
    """
    rng = RngState(seed)
    qm, rng = random_orthogonal(rng, m)
    qn, rng = random_orthogonal(rng, n)
    k = len(strengths)
    u, v = qm[:, :k], qn[:, :k]
    base, _ = gaussian_matrix(rng, m, n, noise)
    return base + (u * np.asarray(strengths)) @ v.T, u, v


def three_subspace_sigma() -> np.ndarray:
    """Descending spectrum with two strong, three weak and five noise values."""
    return np.array([50.0, 40.0, 12.0, 11.0, 10.0, 3.0, 2.5, 2.0, 1.5, 1.0])


def diagonal_decomposition_input(sigma: Sequence[float], m: int, n: int, seed: int = 3) -> np.ndarray:
    """``Q_m diag(sigma) Q_n^T`` with a known spectrum and random singular vectors."""
    rng = RngState(seed)
    qm, rng = random_orthogonal(rng, m)
    qn, _ = random_orthogonal(rng, n)
    r = len(sigma)
    return (qm[:, :r] * np.asarray(sigma)) @ qn[:, :r].T
