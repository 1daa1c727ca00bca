import numpy as np
import pytest

import mcp_tta
from conftest import unit_rows


def make_header(rng, classes=3, dim=8):
    names = [f"class_{c}" for c in range(classes)]
    prompts = [unit_rows(rng, 2, dim) for _ in range(classes)]
    return names, prompts


def test_writer_reader_round_trip(tmp_path, rng):
    names, prompts = make_header(rng)
    records = [(int(rng.integers(3)) if i % 5 else None, unit_rows(rng, 4, 8)) for i in range(100)]
    path = tmp_path / "s.mcpe"
    written = mcp_tta.write_stream(str(path), names, prompts, records)
    assert written == path.stat().st_size
    assert written == mcp_tta.header_size_bytes(names, prompts) + 100 * mcp_tta.record_size_bytes(4, 8)

    header, back = mcp_tta.read_stream(str(path))
    assert header["class_names"] == names
    assert header["dim"] == 8
    for a, b in zip(prompts, header["prompts"]):
        np.testing.assert_allclose(a, b, atol=1e-7)
    assert len(back) == 100
    for (la, va), (lb, vb) in zip(records, back):
        assert la == lb
        np.testing.assert_allclose(va, vb, atol=1e-7)


def test_rewrite_is_byte_exact(tmp_path, rng):
    names, prompts = make_header(rng)
    a, b = tmp_path / "a.mcpe", tmp_path / "b.mcpe"
    mcp_tta.write_stream(str(a), names, prompts, [(0, unit_rows(rng, 2, 8)) for _ in range(10)])
    header, records = mcp_tta.read_stream(str(a))
    mcp_tta.write_stream(str(b), header["class_names"], header["prompts"], records)
    assert a.read_bytes() == b.read_bytes()


def test_writer_rejects_bad_records(tmp_path, rng):
    names, prompts = make_header(rng)
    with mcp_tta.StreamWriter(str(tmp_path / "x.mcpe"), names, prompts) as w:
        with pytest.raises(mcp_tta.DataError):
            w.write(0, np.ones((1, 8)))
        with pytest.raises(mcp_tta.DataError):
            w.write(7, unit_rows(rng, 1, 8))
        with pytest.raises(mcp_tta.DataError):
            w.write(0, unit_rows(rng, 1, 5))


def test_truncated_file_reports_offset(tmp_path, rng):
    names, prompts = make_header(rng)
    path = tmp_path / "t.mcpe"
    mcp_tta.write_stream(str(path), names, prompts, [(1, unit_rows(rng, 2, 8)) for _ in range(3)])
    data = path.read_bytes()
    path.write_bytes(data[:-6])
    with pytest.raises(mcp_tta.DataError, match=f"byte offset {len(data) - 6}"):
        mcp_tta.read_stream(str(path))


def test_synth_is_deterministic(tmp_path):
    spec = {"classes": 4, "dim": 16, "samples": 50, "views": 3, "seed": 9}
    a, b = tmp_path / "a.mcpe", tmp_path / "b.mcpe"
    mcp_tta.write_synth(str(a), spec)
    mcp_tta.write_synth(str(b), spec)
    assert a.read_bytes() == b.read_bytes()
    with pytest.raises(mcp_tta.ConfigError):
        mcp_tta.write_synth(str(a), {"colours": 3})
