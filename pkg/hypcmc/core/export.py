# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Artifact writers and readers: meshes (ASCII PLY, OBJ), CSV reports, solution files, the JSON
summary and the YAML run manifest.

Floats are written with repr, so every CSV and mesh value re-parses to the identical float64.
"""

import csv
import json
import math
import os

import numpy as np
import yaml

from .common import MeshFormat
from .errors import ExportError, GridMismatchError
from .graph_ops import EmbeddedMesh
from .logger import log
from .pde import ChartGrid, GraphFunction

"""
Keys every JSON summary carries, NaN (written as null) when a check did not run.
"""
SUMMARY_KEYS = ("residual_max", "oracle_H_max_dev", "trace_max_err", "sandwich_min_margin")

NODE = "node"
VALUE = "u"
BOUNDARY = "boundary"

"""
Agreement required between stored and recomputed node coordinates.
"""
COORDINATE_TOL = 1e-12


def _fmt(value) -> str:
    return repr(float(value))


def _parse(cell: str):
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def _open(path: str, mode: str = "w"):
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        return open(path, mode, encoding="utf-8", newline="")
    except OSError as err:
        raise ExportError(f"cannot open {path}: {err}") from err


def _mesh_faces(mesh: EmbeddedMesh) -> np.ndarray:
    if len(mesh.shape) != 2:
        return np.zeros((0, 3), dtype=int)
    return mesh.faces


def coordinate_names(count: int) -> list:
    return ["x", "y", "z"] if count == 3 else [f"x{k}" for k in range(count)]


def export_mesh(mesh: EmbeddedMesh, path: str, fmt=MeshFormat.PLY) -> str:
    """
    Write a mesh as ASCII PLY or OBJ.

    PLY carries float64 vertex coordinates and a vertex_indices list per triangle; meshes of more
    than two parameters are written as vertex clouds. OBJ is limited to meshes in three dimensions.

    Returns:
        str: The path written.
    """
    fmt = MeshFormat(fmt)
    points = mesh.points()
    faces = _mesh_faces(mesh)
    if fmt is MeshFormat.OBJ and points.shape[-1] != 3:
        raise ExportError(f"cannot write {path}: OBJ holds three-dimensional vertices only")

    try:
        with _open(path) as handle:
            if fmt is MeshFormat.PLY:
                handle.write("ply\nformat ascii 1.0\ncomment hypcmc embedded graph\n")
                handle.write(f"element vertex {len(points)}\n")
                for name in coordinate_names(points.shape[-1]):
                    handle.write(f"property double {name}\n")
                handle.write(f"element face {len(faces)}\n")
                handle.write("property list uchar int vertex_indices\n")
                handle.write("end_header\n")
                for point in points:
                    handle.write(" ".join(_fmt(value) for value in point) + "\n")
                for face in faces:
                    handle.write("3 " + " ".join(str(int(k)) for k in face) + "\n")
            else:
                for point in points:
                    handle.write("v " + " ".join(_fmt(value) for value in point) + "\n")
                # OBJ indices start at 1
                for face in faces:
                    handle.write("f " + " ".join(str(int(k) + 1) for k in face) + "\n")
    except OSError as err:
        raise ExportError(f"cannot write mesh {path}: {err}") from err

    log.info(f"mesh with {len(points)} vertices and {len(faces)} faces exported to: {path}")
    return path


def read_ply(path: str) -> tuple:
    """Vertices and faces of an ASCII PLY file written by export_mesh."""
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as err:
        raise ExportError(f"cannot read mesh {path}: {err}") from err
    if not lines or lines[0] != "ply":
        raise ExportError(f"{path} is not a PLY file")
    counts, columns = {}, 0
    element = None
    for row, line in enumerate(lines):
        words = line.split()
        if words[:1] == ["element"]:
            element = words[1]
            counts[element] = int(words[2])
        elif words[:2] == ["property", "double"] and element == "vertex":
            columns += 1
        elif line == "end_header":
            start = row + 1
            break
    else:
        raise ExportError(f"{path} has no end_header line")
    body = lines[start:]
    vertex_count, face_count = counts.get("vertex", 0), counts.get("face", 0)
    vertices = np.array([[float(v) for v in line.split()] for line in body[:vertex_count]]).reshape(-1, columns)
    faces = np.array([[int(k) for k in line.split()[1:]] for line in body[vertex_count : vertex_count + face_count]], dtype=int)
    return vertices, faces.reshape(-1, 3)


def export_report(path: str, columns: list, rows: list) -> str:
    """Write a CSV report with a header row."""
    try:
        with _open(path) as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                if len(row) != len(columns):
                    raise ExportError(f"cannot write {path}: row {row} does not match columns {columns}")
                writer.writerow(_fmt(cell) if isinstance(cell, (float, np.floating)) else cell for cell in row)
    except OSError as err:
        raise ExportError(f"cannot write report {path}: {err}") from err
    log.info(f"report exported to: {path}")
    return path


def read_report(path: str) -> tuple:
    """Header and rows of a CSV report; numeric cells come back as int or float."""
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            columns = next(reader)
            rows = [[_parse(cell) for cell in row] for row in reader]
    except (OSError, StopIteration) as err:
        raise ExportError(f"cannot read report {path}: {err}") from err
    return columns, rows


def export_solution(path: str, u: GraphFunction) -> str:
    """
    Write the active nodes of a solution: flat node index, chart coordinates, u and a boundary flag.
    """
    grid = u.grid
    nodes = np.flatnonzero(grid.active.reshape(-1))
    points = grid.points.reshape(-1, grid.n)[nodes]
    values = u.values.reshape(-1)[nodes]
    boundary = grid.boundary.reshape(-1)[nodes]
    columns = [NODE] + [f"xi{k + 1}" for k in range(grid.n)] + [VALUE, BOUNDARY]
    rows = [
        [int(node)] + [float(c) for c in point] + [float(value), int(flag)]
        for node, point, value, flag in zip(nodes, points, values, boundary)
    ]
    return export_report(path, columns, rows)


def read_solution(path: str, grid: ChartGrid) -> GraphFunction:
    """
    Rebuild a solution on `grid` from a solution CSV.

    Raises:
        GridMismatchError: The file's nodes or coordinates do not belong to the grid.
    """
    columns, rows = read_report(path)
    expected = [NODE] + [f"xi{k + 1}" for k in range(grid.n)] + [VALUE, BOUNDARY]
    if columns != expected:
        raise GridMismatchError(f"{path} has columns {columns}, expected {expected}")
    data = np.array(rows, dtype=float).reshape(-1, len(columns))
    nodes = data[:, 0].astype(int)
    active = np.flatnonzero(grid.active.reshape(-1))
    if nodes.size != active.size or not np.array_equal(np.sort(nodes), active):
        raise GridMismatchError(f"{path} holds {nodes.size} nodes, the grid has {active.size} active nodes")
    points = grid.points.reshape(-1, grid.n)[nodes]
    if not np.allclose(points, data[:, 1 : 1 + grid.n], rtol=0.0, atol=COORDINATE_TOL):
        raise GridMismatchError(f"node coordinates in {path} do not match the configured grid")
    values = np.full(int(np.prod(grid.shape)), np.nan)
    values[nodes] = data[:, 1 + grid.n]
    return GraphFunction(grid, values)


def _plain(value):
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if hasattr(value, "value") and not isinstance(value, str):
        return value.value
    return value


def export_summary(path: str, summary: dict) -> str:
    """Write scalar diagnostics keyed by check name as sorted JSON."""
    data = {key: math.nan for key in SUMMARY_KEYS}
    data.update(summary)
    try:
        with _open(path) as handle:
            json.dump(_plain(data), handle, indent=2, sort_keys=True)
            handle.write("\n")
    except (OSError, TypeError) as err:
        raise ExportError(f"cannot write summary {path}: {err}") from err
    log.info(f"summary exported to: {path}")
    return path


def export_manifest(path: str, data: dict) -> str:
    """Write the run manifest (config echo and summary) as YAML."""

    def _float_representer(dumper, value):
        return dumper.represent_scalar("tag:yaml.org,2002:float", f"{value:.6g}")

    yaml.add_representer(float, _float_representer)
    try:
        with _open(path) as handle:
            yaml.dump(_plain(data), handle)
    except OSError as err:
        raise ExportError(f"cannot write manifest {path}: {err}") from err
    log.info(f"run manifest exported to: {path}")
    return path
