import numpy as np
import pytest

from emupscale.io import read_json, read_mesh, read_model, write_json, write_mesh, write_model, write_table
from emupscale.mesh import build_uniform_mesh


@pytest.mark.parametrize("suffix", [".json", ".bin"])
@pytest.mark.parametrize("shape", [(5,), (4, 6)])
def test_model_round_trip(tmp_path, suffix, shape):
    v = np.random.default_rng(0).uniform(0.001, 1.0, shape)
    path = tmp_path / f"m{suffix}"
    write_model(path, v)
    out = read_model(path)
    assert out.shape == v.shape
    assert np.array_equal(out, v)


def test_binary_layout(tmp_path):
    path = tmp_path / "m.bin"
    write_model(path, [1.0, 2.0])
    raw = path.read_bytes()
    assert raw[:4] == b"EMUP" and len(raw) == 16 + 16
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_model(path)


def test_model_errors(tmp_path):
    with pytest.raises(ValueError):
        write_model(tmp_path / "m.json", np.ones((2, 3)))
    p = tmp_path / "bad.json"
    p.write_text('{"values": [1]}')
    with pytest.raises(ValueError):
        read_model(p)
    p.write_text("{nope")
    with pytest.raises(ValueError):
        read_json(p)


def test_json_and_mesh(tmp_path):
    write_json(tmp_path / "c.json", {"b": 1, "a": [1.5]})
    assert (tmp_path / "c.json").read_text().startswith('{\n  "a"')
    assert read_json(tmp_path / "c.json") == {"a": [1.5], "b": 1}
    m = build_uniform_mesh((2, 3, 4), (1.0, 2.0, 3.0))
    write_mesh(tmp_path / "mesh.json", m)
    assert read_mesh(tmp_path / "mesh.json") == m


def test_table(tmp_path):
    write_table(tmp_path / "t.csv", ["name", "value"], [{"name": "a", "value": 0.1}, {"name": "b", "value": 3}])
    assert (tmp_path / "t.csv").read_text().splitlines() == ["name,value", "a,0.1", "b,3"]
