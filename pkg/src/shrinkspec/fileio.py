"""Mesh, field and polyline file formats.

Geometry goes to OFF and OBJ; legacy ASCII VTK and JSON also carry
per-vertex scalar fields. Coordinates are written with 17 significant
digits so that a round trip reproduces them bit for bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .mesh import TriangleMesh

FORMATS = ("off", "obj", "vtk", "json")
_FMT = "%.17g"


def _infer_format(path, fmt):
    if fmt is None:
        fmt = Path(path).suffix.lstrip(".")
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise ValueError(f"unknown mesh format {fmt!r}; expected one of {FORMATS}")
    return fmt


def export_mesh(mesh: TriangleMesh, path, fmt=None, fields=None):
    """Write ``mesh`` (and optional named vertex fields) to ``path``."""
    fmt = _infer_format(path, fmt)
    fields = dict(fields or {})
    for name, values in fields.items():
        if np.shape(values) != (mesh.n_vertices,):
            raise ValueError(f"field {name!r} does not match vertex count")
    path = Path(path)
    if fmt == "off":
        _write_off(mesh, path)
    elif fmt == "obj":
        _write_obj(mesh, path)
    elif fmt == "vtk":
        _write_vtk(mesh, path, fields)
    else:
        _write_json(mesh, path, fields)
    return path


def import_mesh(path, fmt=None):
    """Read a mesh written by :func:`export_mesh`.

    Returns
    -------
    mesh : TriangleMesh
    fields : dict of name -> ndarray (empty for OFF/OBJ)
    """
    fmt = _infer_format(path, fmt)
    text = Path(path).read_text()
    if fmt == "off":
        return _read_off(text), {}
    if fmt == "obj":
        return _read_obj(text), {}
    if fmt == "vtk":
        return _read_vtk(text)
    data = json.loads(text)
    mesh = TriangleMesh(data["vertices"], data["faces"])
    fields = {k: np.asarray(v, dtype=float) for k, v in data.get("fields", {}).items()}
    return mesh, fields


def _vertex_lines(v, prefix=""):
    return [prefix + " ".join(_FMT % c for c in p) for p in v]


def _write_off(mesh, path):
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    lines += _vertex_lines(mesh.vertices)
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    path.write_text("\n".join(lines) + "\n")


def _read_off(text):
    tokens = [ln.split("#")[0].split() for ln in text.splitlines()]
    tokens = [t for t in tokens if t]
    if tokens[0][0] != "OFF":
        raise ValueError("missing OFF header")
    nv, nf = int(tokens[1][0]), int(tokens[1][1])
    v = np.array(tokens[2:2 + nv], dtype=float)
    f = []
    for t in tokens[2 + nv:2 + nv + nf]:
        if int(t[0]) != 3:
            raise ValueError("only triangular faces are supported")
        f.append([int(x) for x in t[1:4]])
    return TriangleMesh(v, np.array(f, dtype=np.int64).reshape(-1, 3))


def _write_obj(mesh, path):
    lines = _vertex_lines(mesh.vertices, "v ")
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    path.write_text("\n".join(lines) + "\n")


def _read_obj(text):
    v, f = [], []
    for ln in text.splitlines():
        t = ln.split()
        if not t:
            continue
        if t[0] == "v":
            v.append([float(x) for x in t[1:4]])
        elif t[0] == "f":
            f.append([int(x.split("/")[0]) - 1 for x in t[1:4]])
    return TriangleMesh(v, np.array(f, dtype=np.int64).reshape(-1, 3))


def _write_vtk(mesh, path, fields):
    lines = [
        "# vtk DataFile Version 3.0",
        "shrinkspec mesh",
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += _vertex_lines(mesh.vertices)
    lines.append(f"POLYGONS {mesh.n_faces} {4 * mesh.n_faces}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    if fields:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in fields.items():
            lines.append(f"SCALARS {name.replace(' ', '_')} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [_FMT % x for x in np.asarray(values, dtype=float)]
    path.write_text("\n".join(lines) + "\n")


def _read_vtk(text):
    tokens = text.split()
    pos = tokens.index("POINTS")
    nv = int(tokens[pos + 1])
    start = pos + 3
    v = np.array(tokens[start:start + 3 * nv], dtype=float).reshape(nv, 3)
    pos = tokens.index("POLYGONS", start + 3 * nv)
    nf = int(tokens[pos + 1])
    raw = np.array(tokens[pos + 3:pos + 3 + 4 * nf], dtype=np.int64).reshape(nf, 4)
    if np.any(raw[:, 0] != 3):
        raise ValueError("only triangular polygons are supported")
    mesh = TriangleMesh(v, raw[:, 1:])
    fields = {}
    i = pos + 3 + 4 * nf
    while i < len(tokens):
        if tokens[i] == "SCALARS":
            name = tokens[i + 1]
            i += 3
            if tokens[i] == "1":
                i += 1
            if tokens[i] == "LOOKUP_TABLE":
                i += 2
            fields[name] = np.array(tokens[i:i + nv], dtype=float)
            i += nv
        else:
            i += 1
    return mesh, fields


def _write_json(mesh, path, fields):
    data = {
        "vertices": mesh.vertices.tolist(),
        "faces": mesh.faces.tolist(),
        "fields": {k: np.asarray(v, dtype=float).tolist() for k, v in fields.items()},
    }
    path.write_text(json.dumps(data))


def export_polylines_obj(polylines, closed, path):
    """Write polylines as OBJ ``l`` elements; closed loops repeat their first index."""
    lines, offset = [], 1
    for pts, is_closed in zip(polylines, closed):
        lines += _vertex_lines(pts, "v ")
        idx = list(range(offset, offset + len(pts)))
        if is_closed:
            idx.append(offset)
        lines.append("l " + " ".join(map(str, idx)))
        offset += len(pts)
    Path(path).write_text("\n".join(lines) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
