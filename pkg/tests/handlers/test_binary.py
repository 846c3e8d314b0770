import os
import struct

import numpy as np
import pytest

from spectral_sde.core import RngState, gaussian_matrix
from spectral_sde.errors import ConfigurationError, FormatError
from spectral_sde.handlers import get_handler, read_matrix, write_matrix
from spectral_sde.handlers.binary import BinaryMatrixHandler
from tests.utils import create_temp_file


@pytest.fixture
def handler():
    return BinaryMatrixHandler()


def test_layout(handler):
    payload = handler.encode(np.array([[1.0, 2.0, 3.0]]))
    assert payload[:4] == b"SDEM"
    assert payload[4] == 0x01
    assert struct.unpack("<QQ", payload[5:21]) == (1, 3)
    assert np.frombuffer(payload[21:], dtype="<f8").tolist() == [1.0, 2.0, 3.0]


def test_round_trip_is_bit_identical(tmp_path):
    matrix, _ = gaussian_matrix(RngState(5), 6, 9)
    path = str(tmp_path / "m.sdem")
    write_matrix(matrix, path)
    assert read_matrix(path).tobytes() == matrix.tobytes()


def test_bad_magic(handler):
    with pytest.raises(FormatError) as exc:
        handler.decode(b"NOPE" + bytes(17))
    assert exc.value.context["byte_offset"] == 0


def test_truncated_header(handler):
    with pytest.raises(FormatError) as exc:
        handler.decode(b"SDEM\x01\x02")
    assert exc.value.context["byte_offset"] == 6


def test_unsupported_version(handler):
    payload = bytearray(handler.encode(np.ones((1, 1))))
    payload[4] = 2
    with pytest.raises(FormatError) as exc:
        handler.decode(bytes(payload))
    assert exc.value.context["byte_offset"] == 4


def test_size_mismatch(handler):
    payload = handler.encode(np.ones((2, 2)))
    with pytest.raises(FormatError) as exc:
        handler.decode(payload[:-3])
    assert exc.value.context["byte_offset"] == len(payload) - 3


def test_non_finite_offset(handler):
    payload = handler.encode(np.array([[1.0, np.nan]]))
    with pytest.raises(FormatError) as exc:
        handler.decode(payload)
    assert exc.value.context["byte_offset"] == 21 + 8


def test_reads_from_disk_by_extension(handler):
    path = create_temp_file(handler.encode(np.eye(2)), ".bin")
    try:
        assert np.array_equal(read_matrix(path), np.eye(2))
    finally:
        os.unlink(path)


def test_unknown_format_name():
    assert get_handler(fmt="bin").format_name == "bin"
    with pytest.raises(ConfigurationError):
        get_handler(fmt="npy")
