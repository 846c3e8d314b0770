# src/spectral_sde/handlers/__init__.py
import os
from typing import Optional

from ..core import FeatureMatrix, MatrixHandler
from ..errors import ConfigurationError, FormatError
from .binary import BinaryMatrixHandler
from .text import CsvMatrixHandler

HANDLERS = [
    CsvMatrixHandler,
    BinaryMatrixHandler,
]


def get_handler(path: Optional[str] = None, fmt: Optional[str] = None) -> MatrixHandler:
    """Pick a handler by explicit format name, else by file extension."""
    handlers = [handler_class() for handler_class in HANDLERS]
    if fmt is not None:
        for handler in handlers:
            if handler.format_name == fmt:
                return handler
        raise ConfigurationError(
            f"Unknown matrix format: {fmt}",
            context={"key": "format", "choices": [h.format_name for h in handlers]},
        )
    _, ext = os.path.splitext(path or "")
    for handler in handlers:
        if ext.lower() in handler.file_extensions:
            return handler
    raise FormatError(
        f"No handler for extension: {ext or '<none>'}", file=path, context={"byte_offset": 0}
    )


def read_matrix(path: str, fmt: Optional[str] = None) -> FeatureMatrix:
    return get_handler(path, fmt).read(path)


def write_matrix(matrix: FeatureMatrix, path: str, fmt: Optional[str] = None) -> None:
    get_handler(path, fmt).write(matrix, path)
