import re
from typing import List

import numpy as np

from ..core import FeatureMatrix, MatrixHandler
from ..errors import FormatError


class CsvMatrixHandler(MatrixHandler):
    """Handler for ``# rows=<m> cols=<n>`` headed CSV matrices.

    Values are written with Python's shortest round-trip ``repr`` so a matrix read
    back is bit-identical to the one written.
    """

    HEADER = re.compile(r"^# rows=(\d+) cols=(\d+)$")

    @property
    def format_name(self) -> str:
        return "csv"

    @property
    def file_extensions(self) -> List[str]:
        return [".csv"]

    def decode(self, payload: bytes, source: str = "<bytes>") -> FeatureMatrix:
        try:
            text = payload.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(
                "Matrix file is not valid UTF-8",
                file=source,
                context={"byte_offset": e.start},
            )

        lines = text.splitlines(keepends=True)
        if not lines:
            raise FormatError(
                "Matrix file is empty", file=source, line=1, context={"byte_offset": 0}
            )

        match = self.HEADER.match(lines[0].rstrip("\r\n"))
        if not match:
            raise FormatError(
                "Malformed header, expected '# rows=<m> cols=<n>'",
                file=source,
                line=1,
                context={"byte_offset": 0},
            )
        rows, cols = int(match.group(1)), int(match.group(2))
        if rows < 1 or cols < 1:
            raise FormatError(
                "Header dimensions must be at least 1",
                file=source,
                line=1,
                context={"byte_offset": 0, "rows": rows, "cols": cols},
            )

        offset = len(lines[0].encode("utf-8"))
        body = lines[1:]
        # Trailing blank lines are tolerated.
        while body and not body[-1].strip():
            body.pop()
        if len(body) != rows:
            raise FormatError(
                f"Expected {rows} data rows, found {len(body)}",
                file=source,
                line=len(body) + 2,
                context={"byte_offset": len(payload) if len(body) < rows else offset},
            )

        # Allocate only once the body agrees with the declared shape.
        parsed: List[List[float]] = []
        for i, line in enumerate(body):
            fields = line.rstrip("\r\n").split(",")
            if len(fields) != cols:
                raise FormatError(
                    f"Expected {cols} values, found {len(fields)}",
                    file=source,
                    line=i + 2,
                    context={"byte_offset": offset},
                )
            try:
                values = [float(field) for field in fields]
            except ValueError:
                raise FormatError(
                    "Unparseable value in matrix row",
                    file=source,
                    line=i + 2,
                    context={"byte_offset": offset},
                )
            if not all(np.isfinite(values)):
                raise FormatError(
                    "Non-finite value in matrix row",
                    file=source,
                    line=i + 2,
                    context={"byte_offset": offset},
                )
            parsed.append(values)
            offset += len(line.encode("utf-8"))

        return np.array(parsed, dtype=np.float64).reshape(rows, cols)

    def encode(self, matrix: FeatureMatrix) -> bytes:
        rows, cols = matrix.shape
        out = [f"# rows={rows} cols={cols}"]
        out.extend(",".join(repr(float(v)) for v in row) for row in matrix)
        return ("\n".join(out) + "\n").encode("utf-8")
