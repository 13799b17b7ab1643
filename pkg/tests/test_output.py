"""CSV time series and legacy-VTK snapshots."""

import numpy as np
import pytest

from nanotherm.mesh import build_mesh
from nanotherm.output import read_csv, read_snapshot, write_csv, write_network_snapshot, write_snapshot
from nanotherm.vasculature import VesselNetwork


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        rows = [[60, 310.15, 0.1 + 0.2], [120, 311.0000000000001, 1e-300]]
        write_csv(tmp_path / "a.csv", ["t_s", "T", "x"], rows)
        back = read_csv(tmp_path / "a.csv")
        assert list(back) == ["t_s", "T", "x"]
        assert back["T"][1] == 311.0000000000001
        assert back["x"][0] == 0.1 + 0.2

    def test_empty_table(self, tmp_path):
        write_csv(tmp_path / "e.csv", ["a", "b"], [])
        assert (tmp_path / "e.csv").read_text() == "a,b\n"
        assert read_csv(tmp_path / "e.csv")["a"].size == 0

    def test_no_temporary_files_left(self, tmp_path):
        write_csv(tmp_path / "a.csv", ["x"], [[1.0]])
        assert [p.name for p in tmp_path.iterdir()] == ["a.csv"]


class TestSnapshot:
    def test_constant_field(self, tmp_path):
        mesh = build_mesh(3, 2, 1.0, 1.0)
        write_snapshot(mesh, {"T": np.ones(mesh.n_nodes)}, tmp_path / "s.vtk")
        dims, pts, data = read_snapshot(tmp_path / "s.vtk")
        assert dims == (4, 3, 1)
        assert pts.shape[0] == (3 + 1) * (2 + 1)
        assert np.all(data["T"] == 1.0)

    def test_values_round_trip(self, tmp_path):
        mesh = build_mesh(4, 4, 1e-3, 1e-3)
        f = np.sin(np.arange(mesh.n_nodes)) + 310.0
        write_snapshot(mesh, {"T_K": f, "w": f * 0}, tmp_path / "s.vtk")
        _, pts, data = read_snapshot(tmp_path / "s.vtk")
        assert np.array_equal(data["T_K"], f)
        assert np.array_equal(pts[:, :2], mesh.coords)

    def test_header(self, tmp_path):
        mesh = build_mesh(1, 1, 1.0, 1.0)
        write_snapshot(mesh, {"T": np.zeros(4)}, tmp_path / "s.vtk", title="test")
        head = (tmp_path / "s.vtk").read_text().splitlines()[:4]
        assert head == ["# vtk DataFile Version 3.0", "test", "ASCII", "DATASET STRUCTURED_GRID"]

    def test_bad_fields(self, tmp_path):
        mesh = build_mesh(1, 1, 1.0, 1.0)
        with pytest.raises(ValueError):
            write_snapshot(mesh, {"T": np.zeros(3)}, tmp_path / "s.vtk")
        with pytest.raises(ValueError):
            write_snapshot(mesh, {"T K": np.zeros(4)}, tmp_path / "s.vtk")

    def test_network_snapshot(self, tmp_path):
        net = VesselNetwork([[0, 0], [1, 0], [1, 1]], [[0, 1], [1, 2]], [1e-5, 2e-5], [False, True])
        write_network_snapshot(net, {"R_m": net.radius}, tmp_path / "n.vtk", {"p": np.zeros(3)})
        text = (tmp_path / "n.vtk").read_text()
        assert "LINES 2 6" in text
        assert "CELL_DATA 2" in text
        assert "POINT_DATA 3" in text
        with pytest.raises(ValueError):
            write_network_snapshot(net, {"R_m": np.zeros(3)}, tmp_path / "m.vtk")
