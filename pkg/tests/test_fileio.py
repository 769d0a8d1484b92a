import numpy as np
import pytest

from shrinkspec.fileio import export_mesh, export_polylines_obj, import_mesh
from shrinkspec.mesh import TriangleMesh
from shrinkspec.shrinkers import make_cylinder, make_sphere

TETRA_V = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
TETRA_F = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]


def test_tetrahedron_off_header(tmp_path):
    path = tmp_path / "tet.off"
    export_mesh(TriangleMesh(TETRA_V, TETRA_F), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "OFF"
    assert lines[1].split()[:2] == ["4", "4"]


@pytest.mark.parametrize("fmt", ["off", "obj", "vtk", "json"])
def test_round_trip_icosphere(tmp_path, fmt):
    sphere = make_sphere(2)
    path = tmp_path / f"s.{fmt}"
    export_mesh(sphere, path)
    back, _ = import_mesh(path)
    assert back.n_vertices == sphere.n_vertices
    np.testing.assert_allclose(back.vertices, sphere.vertices, rtol=1e-15, atol=0)
    np.testing.assert_array_equal(back.faces, sphere.faces)


@pytest.mark.parametrize("fmt", ["vtk", "json"])
def test_fields_round_trip(tmp_path, fmt):
    cyl = make_cylinder(4.0, 8, 8)
    fields = {"u1": cyl.vertices[:, 2] * 0.1, "u2": np.cos(np.arange(cyl.n_vertices))}
    path = tmp_path / f"c.{fmt}"
    export_mesh(cyl, path, fields=fields)
    back, got = import_mesh(path)
    assert set(got) == set(fields)
    for name in fields:
        np.testing.assert_allclose(got[name], fields[name], rtol=1e-15)
    # adjacency graph preserved exactly
    assert (back.adjacency != cyl.adjacency).nnz == 0


def test_vtk_has_point_data(tmp_path):
    sphere = make_sphere(1)
    path = tmp_path / "s.vtk"
    export_mesh(sphere, path, fields={"x3": sphere.vertices[:, 2]})
    text = path.read_text()
    assert "POINT_DATA 42" in text and "SCALARS x3 double 1" in text


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        export_mesh(make_sphere(0), tmp_path / "s.ply")
    with pytest.raises(ValueError):
        export_mesh(make_sphere(0), tmp_path / "s.off", fmt="stl")


def test_polyline_obj(tmp_path):
    path = tmp_path / "curves.obj"
    loop = np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0]], float)
    chain = np.array([[0, 0, 1], [0, 0, 2]], float)
    export_polylines_obj([loop, chain], [True, False], path)
    lines = path.read_text().splitlines()
    assert [ln for ln in lines if ln.startswith("l")] == ["l 1 2 3 1", "l 4 5"]
