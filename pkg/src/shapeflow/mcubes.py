"""Marching-cubes isosurface extraction, the fixed-grid baseline.

Every cell is classified by which of its eight corners fall below ``iso``
and the matching row of the 256-entry case table says which cell edges carry
triangle corners. Each such vertex sits on its edge where the linear
interpolant of the two endpoint values hits ``iso``. Cells that share an edge
share the vertex. Vertices are welded by the edge's identity, never by
position, so a closed level set gives a closed mesh without any tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from ._mc_tables import TRI_TABLE
from .curvature import curvature_field
from .flow import distance_stats
from .levelset import FieldSource, ScalarGrid
from .mesh import TriMesh, triangle_angles, vertex_normals


@dataclass(frozen=True)
class Surface:
    """Welded marching-cubes output.

    ``edge_ids`` holds the global grid edge each vertex came from, sorted
    ascending and parallel to ``mesh.vertices``.
    """

    mesh: TriMesh
    edge_ids: np.ndarray
    iso: float

    @property
    def empty(self):
        return self.mesh.n_faces == 0


def decode_edges(edge_ids, dims):
    """Split global edge ids into the lower node index (E, 3) and axis (E,)."""
    edge_ids = np.asarray(edge_ids, dtype=np.int64)
    _, ny, nz = dims
    axis = edge_ids % 3
    node = edge_ids // 3
    k = node % nz
    j = (node // nz) % ny
    i = node // (nz * ny)
    return np.stack([i, j, k], axis=1), axis


def _edge_vertices(grid: ScalarGrid, edge_ids, iso):
    lo, axis = decode_edges(edge_ids, grid.spec.dims)
    hi = lo.copy()
    hi[np.arange(len(hi)), axis] += 1
    a = grid.values[lo[:, 0], lo[:, 1], lo[:, 2]]
    b = grid.values[hi[:, 0], hi[:, 1], hi[:, 2]]
    # one endpoint is < iso and the other >= iso, so b - a is never zero
    t = (iso - a) / (b - a)
    pos = lo.astype(float)
    pos[np.arange(len(pos)), axis] += t
    return np.asarray(grid.spec.origin) + pos * np.asarray(grid.spec.spacing)


def marching_cubes(grid: ScalarGrid, iso: float = 0.0) -> Surface:
    """Extract the ``iso`` level set of ``grid`` as a welded triangle mesh.

    Triangles are wound so their normals point toward increasing values.
    A grid with no crossing gives an empty mesh.
    """
    iso = float(iso)
    values = np.ascontiguousarray(grid.values, dtype=np.float64)
    tris = kernels.mc_triangles(values, iso, TRI_TABLE)
    if tris.shape[0] == 0:
        empty = np.zeros((0, 3))
        return Surface(TriMesh(empty, np.zeros((0, 3), dtype=np.int64)), np.zeros(0, dtype=np.int64), iso)
    edge_ids, faces = np.unique(tris, return_inverse=True)
    faces = faces.reshape(-1, 3)
    # the case table winds its triangles toward the low side; flip them
    faces = faces[:, ::-1]
    vertices = _edge_vertices(grid, edge_ids, iso)
    return Surface(TriMesh(vertices, faces), edge_ids, iso)


def _stats(x):
    x = x[np.isfinite(x)]
    if x.size == 0:
        return {"mean": float("nan"), "std": float("nan")}
    return {"mean": float(x.mean()), "std": float(x.std())}


def _metrics(mesh: TriMesh, src: FieldSource):
    """Comparison record for a surface against ``src``.

    Curvature is computed only where a vertex has a manifold one-ring and a
    usable normal. ``H.p95`` is the 95th percentile of ``|H|``.
    """
    if mesh.n_faces == 0:
        raise ValueError("surface is empty")
    d = distance_stats(mesh, src)
    curv = curvature_field(mesh, vertex_normals(mesh, strict=False), strict=False)
    H, G = curv.H, curv.G
    ok = np.isfinite(H)
    h = _stats(H)
    h["p95"] = float(np.percentile(np.abs(H[ok]), 95)) if ok.any() else float("nan")
    angles = triangle_angles(mesh)
    return {
        "vertex_count": mesh.n_vertices,
        "face_count": mesh.n_faces,
        "mean_dist": d["mean_dist"],
        "max_dist": d["max_dist"],
        "H": h,
        "G": _stats(G),
        "min_triangle_angle_deg": float(np.nanmin(angles)) if angles.size else float("nan"),
    }, int((~ok).sum())


def surface_metrics(mesh: TriMesh, src: FieldSource):
    """Distance and curvature summary with a fixed key set."""
    return _metrics(mesh, src)[0]


def mc_report(surface, src: FieldSource):
    """:func:`surface_metrics` for a marching-cubes result (or bare mesh),
    plus ``curvature_unavailable``: how many vertices got no curvature."""
    mesh = surface.mesh if isinstance(surface, Surface) else surface
    rec, missing = _metrics(mesh, src)
    rec["curvature_unavailable"] = missing
    return rec
