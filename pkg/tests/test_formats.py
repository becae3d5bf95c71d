"""VF1, AM1 and PC1 round trips."""

import json

import numpy as np
import pytest

from intermit.formats import dumps_json, read_am1, read_pc1, read_vf1, write_am1, write_pc1, write_vf1
from intermit.grid import ConfigurationError, GridSpec, VelocityField


def test_vf1_round_trip(tmp_path, rng):
    g = GridSpec(16, 8, 32, L=2.5, nt=3, T=0.7)
    u = VelocityField(g, rng.standard_normal(g.shape), metadata="demo")
    path = tmp_path / "f.vf1"
    write_vf1(path, u)
    raw = path.read_bytes()
    header = json.loads(raw[: raw.index(b"\n")])
    assert header["magic"] == "VF1" and header["dims"] == [3, 16, 8, 32] and header["components"] == 3
    assert header["dtype"] == "f64le" and header["order"] == "t,x,y,z,component"
    assert len(raw) - raw.index(b"\n") - 1 == u.samples.size * 8
    # samples are stored little-endian in (t, x, y, z, component) order
    first = np.frombuffer(raw[raw.index(b"\n") + 1:][:16], dtype="<f8")
    assert np.array_equal(first, u.samples[0, 0, 0, 0, :2])
    v = read_vf1(path)
    assert v.grid == g and np.array_equal(v.samples, u.samples) and v.metadata == "demo"


def test_vf1_2d_and_errors(tmp_path, rng):
    g = GridSpec.cube(16, 2)
    u = VelocityField(g, rng.standard_normal(g.shape))
    write_vf1(tmp_path / "a.vf1", u)
    assert read_vf1(tmp_path / "a.vf1").grid.spatial_dim == 2
    raw = (tmp_path / "a.vf1").read_bytes()
    (tmp_path / "short.vf1").write_bytes(raw[:-8])
    with pytest.raises(ConfigurationError):
        read_vf1(tmp_path / "short.vf1")
    (tmp_path / "bad.vf1").write_bytes(b'{"magic": "XX"}\n')
    with pytest.raises(ConfigurationError):
        read_vf1(tmp_path / "bad.vf1")
    (tmp_path / "nohdr.vf1").write_bytes(b"abc")
    with pytest.raises(ConfigurationError):
        read_vf1(tmp_path / "nohdr.vf1")


def test_am1_round_trip(tmp_path, rng):
    m = rng.random((2, 8, 4, 3)) > 0.5
    write_am1(tmp_path / "m.am1", m, p=4)
    back, header = read_am1(tmp_path / "m.am1")
    assert np.array_equal(back, m) and header["p"] == 4 and header["bitorder"] == "little"


def test_pc1_round_trip(tmp_path):
    write_pc1(tmp_path / "x.csv", "volumes", ["q", "V", "d"], [[1, 0.1, None], [2, float("nan"), 2.0]])
    fig, cols, rows = read_pc1(tmp_path / "x.csv")
    assert fig == "volumes" and cols == ["q", "V", "d"]
    assert rows == [["1", "0.1", ""], ["2", "", "2.0"]]
    (tmp_path / "y.csv").write_text("q,V\n")
    with pytest.raises(ConfigurationError):
        read_pc1(tmp_path / "y.csv")


def test_dumps_json_is_canonical():
    doc = {"b": np.float64(1.5), "a": np.arange(3), "c": float("nan"), "d": {"z": np.bool_(True)}}
    text = dumps_json(doc)
    assert text == dumps_json(dict(reversed(list(doc.items()))))
    back = json.loads(text)
    assert back == {"a": [0, 1, 2], "b": 1.5, "c": None, "d": {"z": True}}
