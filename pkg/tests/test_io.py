import struct

import numpy as np
import pytest

from conftest import random_unitary
from locbasis.io import (
    MAGIC,
    FormatError,
    load_matrix,
    read_csv,
    read_json,
    save_matrix,
    write_csv,
    write_json,
)


def test_matrix_round_trip_is_bitwise(tmp_path):
    u = random_unitary(9, np.random.default_rng(0))
    save_matrix(tmp_path / "u.bin", u, {"kind": "basis", "seed": 3})
    back, head = load_matrix(tmp_path / "u.bin")
    assert np.array_equal(back, u)
    assert head["kind"] == "basis" and head["n"] == 9 and head["seed"] == 3


def test_hermitian_round_trip(tmp_path):
    a = random_unitary(6, np.random.default_rng(1))
    rho = a @ np.diag([0.5, 0.2, 0.1, 0.1, 0.05, 0.05]) @ a.conj().T
    save_matrix(tmp_path / "rho.bin", rho, {"kind": "density_matrix"})
    back, _ = load_matrix(tmp_path / "rho.bin")
    assert np.max(np.abs(back - back.conj().T)) <= np.max(np.abs(rho - rho.conj().T)) + 1e-14


def test_layout_prefix(tmp_path):
    save_matrix(tmp_path / "m.bin", np.eye(2), {})
    raw = (tmp_path / "m.bin").read_bytes()
    magic, version, hlen = struct.unpack_from("<8sII", raw)
    assert magic == MAGIC and version == 1
    assert len(raw) == 16 + hlen + 4 * 16


def test_bad_magic(tmp_path):
    save_matrix(tmp_path / "m.bin", np.eye(3), {})
    raw = bytearray((tmp_path / "m.bin").read_bytes())
    raw[0] ^= 0xFF
    (tmp_path / "m.bin").write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        load_matrix(tmp_path / "m.bin")


@pytest.mark.parametrize("cut", [3, 40, 1])
def test_truncated_file(tmp_path, cut):
    save_matrix(tmp_path / "m.bin", np.eye(3), {})
    raw = (tmp_path / "m.bin").read_bytes()
    (tmp_path / "m.bin").write_bytes(raw[: cut if cut < 16 else len(raw) - cut])
    with pytest.raises(FormatError):
        load_matrix(tmp_path / "m.bin")


def test_rejects_non_square(tmp_path):
    with pytest.raises(ValueError):
        save_matrix(tmp_path / "m.bin", np.zeros((2, 3)), {})


def test_csv_round_trip(tmp_path):
    write_csv(tmp_path / "t.csv", {"state": np.arange(3), "value_hbar": [0.5, 1.25, 1e-17]})
    text = (tmp_path / "t.csv").read_text().splitlines()
    assert text[0] == "state,value_hbar"
    assert text[1].startswith("0,")
    got = read_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(got["value_hbar"], [0.5, 1.25, 1e-17])


def test_json_round_trip_no_temp_files_left(tmp_path):
    write_json(tmp_path / "d.json", {"b": 1, "a": [1.5, None]})
    assert read_json(tmp_path / "d.json") == {"a": [1.5, None], "b": 1}
    assert sorted(p.name for p in tmp_path.iterdir()) == ["d.json"]
