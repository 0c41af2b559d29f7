"""Field-file round trips and CSV export."""

import numpy as np
import pytest

from minding_lab.fieldio import read_field, write_csv, write_field
from minding_lab.grid import Grid2D, GridError


@pytest.fixture
def grid():
    return Grid2D.from_bounds(0.0, 1.0, 1.0, 2.0, 5, 4)


def test_round_trip_bit_exact(tmp_path, grid):
    rng = np.random.default_rng(3)
    u = rng.standard_normal(grid.shape)
    f = rng.standard_normal(grid.shape + (3,))
    path = tmp_path / "field.json"
    write_field(path, grid, {"u": u, "f": f})
    grid2, channels = read_field(path)
    assert grid2.matches(grid)
    assert sorted(channels) == ["f_0", "f_1", "f_2", "u"]
    assert (channels["u"] == u).all()
    for k in range(3):
        assert (channels[f"f_{k}"] == f[:, :, k]).all()


def test_nan_stored_as_null(tmp_path, grid):
    u = np.ones(grid.shape)
    u[0, 0] = np.nan
    path = tmp_path / "field.json"
    write_field(path, grid, {"u": u})
    assert "NaN" not in path.read_text()
    _, channels = read_field(path)
    assert np.isnan(channels["u"][0, 0])
    assert channels["u"][1, 1] == 1.0


def test_interleaved_node_major_layout(tmp_path, grid):
    import json

    a = np.arange(grid.ny * grid.nx, dtype=float).reshape(grid.shape)
    b = 100.0 + a
    path = tmp_path / "field.json"
    write_field(path, grid, {"a": a, "b": b})
    doc = json.loads(path.read_text())
    i, j = 2, 1
    base = (j * grid.nx + i) * 2
    assert doc["values"][base] == a[j, i]
    assert doc["values"][base + 1] == b[j, i]


def test_read_rejects_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(GridError):
        read_field(path)
    path.write_text('{"nx": 3}')
    with pytest.raises(GridError):
        read_field(path)


def test_read_rejects_wrong_length(tmp_path, grid):
    import json

    path = tmp_path / "field.json"
    write_field(path, grid, {"u": np.zeros(grid.shape)})
    doc = json.loads(path.read_text())
    doc["values"] = doc["values"][:-1]
    path.write_text(json.dumps(doc))
    with pytest.raises(GridError):
        read_field(path)


def test_csv_layout(tmp_path, grid):
    u = np.zeros(grid.shape)
    u[2, 3] = 7.5
    path = tmp_path / "field.csv"
    write_csv(path, grid, {"u": u})
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,y,u"
    assert len(lines) == 1 + grid.nx * grid.ny
    row = lines[1 + 2 * grid.nx + 3].split(",")
    assert float(row[0]) == pytest.approx(grid.x()[3])
    assert float(row[1]) == pytest.approx(grid.y()[2])
    assert float(row[2]) == 7.5
