import struct
from typing import List

import numpy as np

from ..core import FeatureMatrix, MatrixHandler
from ..errors import FormatError


class BinaryMatrixHandler(MatrixHandler):
    """Handler for SDEM binary matrices.

    Layout: magic ``SDEM``, version byte, two little-endian u64 dims, then m*n
    little-endian float64 values in row-major order.
    """

    MAGIC = b"SDEM"
    VERSION = 0x01
    _DIMS = struct.Struct("<QQ")
    HEADER_SIZE = len(MAGIC) + 1 + _DIMS.size

    @property
    def format_name(self) -> str:
        return "bin"

    @property
    def file_extensions(self) -> List[str]:
        return [".sdem", ".bin"]

    def decode(self, payload: bytes, source: str = "<bytes>") -> FeatureMatrix:
        if payload[: len(self.MAGIC)] != self.MAGIC:
            raise FormatError(
                "Bad magic bytes, expected 'SDEM'",
                file=source,
                context={"byte_offset": 0},
            )
        if len(payload) < self.HEADER_SIZE:
            raise FormatError(
                "Truncated header",
                file=source,
                context={"byte_offset": len(payload)},
            )
        version = payload[len(self.MAGIC)]
        if version != self.VERSION:
            raise FormatError(
                f"Unsupported version {version}",
                file=source,
                context={"byte_offset": len(self.MAGIC)},
            )
        rows, cols = self._DIMS.unpack_from(payload, len(self.MAGIC) + 1)
        if rows < 1 or cols < 1:
            raise FormatError(
                "Header dimensions must be at least 1",
                file=source,
                context={"byte_offset": len(self.MAGIC) + 1, "rows": rows, "cols": cols},
            )

        expected = self.HEADER_SIZE + 8 * rows * cols
        if len(payload) != expected:
            raise FormatError(
                f"Payload size mismatch: expected {expected} bytes, found {len(payload)}",
                file=source,
                context={"byte_offset": min(len(payload), expected)},
            )

        values = np.frombuffer(payload, dtype="<f8", offset=self.HEADER_SIZE)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise FormatError(
                "Non-finite value in matrix payload",
                file=source,
                context={"byte_offset": self.HEADER_SIZE + 8 * int(bad[0])},
            )
        return values.astype(np.float64).reshape(rows, cols)

    def encode(self, matrix: FeatureMatrix) -> bytes:
        rows, cols = matrix.shape
        header = self.MAGIC + bytes([self.VERSION]) + self._DIMS.pack(rows, cols)
        return header + np.ascontiguousarray(matrix, dtype="<f8").tobytes()
