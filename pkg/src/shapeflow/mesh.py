"""Triangulated closed surfaces: generation, adjacency, normals, file I/O."""
from __future__ import annotations

import os

import numpy as np

from . import kernels
from .errors import DegenerateNormal, NonManifoldVertex, ParseError, ValidationError


class _Topology:
    """Connectivity-derived data, shared by all meshes with the same faces."""

    def __init__(self, faces, n_vertices):
        self.faces = faces
        self.n_vertices = n_vertices
        self._rings = None
        self._ring_errors = None
        self._edges = None

    @property
    def edges(self):
        if self._edges is None:
            e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
            e.sort(axis=1)
            self._edges = np.unique(e, axis=0, return_counts=True)
        return self._edges

    def rings(self):
        if self._rings is None:
            self._build_rings()
        return self._rings, self._ring_errors

    def _build_rings(self):
        f = self.faces
        succ = [dict() for _ in range(self.n_vertices)]
        errors = {}
        for k in range(3):
            centers = f[:, k]
            nxt = f[:, (k + 1) % 3]
            prv = f[:, (k + 2) % 3]
            for c, a, b in zip(centers.tolist(), nxt.tolist(), prv.tolist()):
                if a in succ[c]:
                    errors.setdefault(c, "edge used twice in the same direction")
                succ[c][a] = b
        rings = []
        for v, s in enumerate(succ):
            if v in errors:
                rings.append(None)
                continue
            if not s:
                errors[v] = "isolated vertex"
                rings.append(None)
                continue
            start = next(iter(s))
            ring = [start]
            cur = s[start]
            while cur != start and cur in s and len(ring) <= len(s):
                ring.append(cur)
                cur = s[cur]
            if cur != start:
                errors[v] = "incident faces do not close into a cycle"
                rings.append(None)
            elif len(ring) != len(s):
                errors[v] = "incident faces form more than one cycle"
                rings.append(None)
            else:
                rings.append(ring)
        self._rings = rings
        self._ring_errors = errors


class TriMesh:
    """Vertex positions plus counter-clockwise (outward) triangle indices.

    Construction checks index range and rejects degenerate faces; closedness,
    genus and orientation are checked by :meth:`validate`. Adjacency is
    built lazily and carried over by :meth:`with_vertices`, since evolution
    never changes connectivity.
    """

    def __init__(self, vertices, faces, _topology=None):
        v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValidationError("face index out of range")
        if f.size and np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise ValidationError("degenerate face with a repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        self.vertices = v
        self.faces = f
        self._topo = _topology if _topology is not None else _Topology(f, len(v))

    def with_vertices(self, vertices):
        """Same connectivity, new positions."""
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise ValueError("vertex array shape changed")
        return TriMesh(vertices, self.faces, _topology=self._topo)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def edges(self):
        return self._topo.edges[0]

    def euler_characteristic(self):
        return self.n_vertices - len(self.edges()) + self.n_faces

    def is_closed(self):
        """Every edge is shared by exactly two faces."""
        if self.n_faces == 0:
            return False
        return bool(np.all(self._topo.edges[1] == 2))

    def signed_volume(self):
        v = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def face_areas(self):
        return 0.5 * np.linalg.norm(kernels.face_cross(self.vertices, self.faces), axis=1)

    def area(self):
        return float(self.face_areas().sum())

    def validate(self):
        """Raise :class:`ValidationError` unless this is a closed, outward,
        genus-0 2-manifold."""
        if self.n_faces == 0:
            raise ValidationError("mesh has no faces")
        if not self.is_closed():
            counts = self._topo.edges[1]
            raise ValidationError(
                f"mesh is not closed: {int(np.sum(counts == 1))} boundary edges, "
                f"{int(np.sum(counts > 2))} non-manifold edges")
        _, errors = self._topo.rings()
        if errors:
            v = min(errors)
            raise ValidationError(f"non-manifold vertex {v}: {errors[v]}")
        chi = self.euler_characteristic()
        if chi != 2:
            raise ValidationError(f"Euler characteristic {chi} != 2")
        if not self.signed_volume() > 0:
            raise ValidationError("faces are not outward oriented (signed volume <= 0)")
        return self

    def ring_table(self):
        """Padded one-ring array ``(V, K)`` and per-vertex degree.

        Vertices whose incident faces do not form a single cycle get degree 0.
        """
        rings, _ = self._topo.rings()
        kmax = max((len(r) for r in rings if r is not None), default=0)
        table = np.full((self.n_vertices, max(kmax, 1)), -1, dtype=np.int64)
        degree = np.zeros(self.n_vertices, dtype=np.int64)
        for v, r in enumerate(rings):
            if r is not None:
                table[v, :len(r)] = r
                degree[v] = len(r)
        return table, degree

    def __repr__(self):
        return f"TriMesh(V={self.n_vertices}, F={self.n_faces})"


def one_ring(mesh: TriMesh, v: int):
    """Neighbors of ``v`` in counter-clockwise order seen from outside."""
    if not 0 <= v < mesh.n_vertices:
        raise IndexError(f"vertex {v} out of range")
    rings, errors = mesh._topo.rings()
    if rings[v] is None:
        raise NonManifoldVertex(f"vertex {v}: {errors[v]}", v)
    return list(rings[v])


def two_ring(mesh: TriMesh, v: int):
    """Vertices within two edges of ``v`` (excluding ``v``), ring order first."""
    first = one_ring(mesh, v)
    seen = set(first) | {v}
    out = list(first)
    rings, _ = mesh._topo.rings()
    for u in first:
        for w in rings[u] or ():
            if w not in seen:
                seen.add(w)
                out.append(w)
    return out


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

_PHI = (1.0 + 5.0 ** 0.5) / 2.0
_ICO_VERTICES = np.array([
    [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
    [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
    [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
])
_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
])


def _subdivide(v, f):
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e.sort(axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.reshape(3, -1)
    mid = v[uniq].mean(axis=1)
    mid /= np.linalg.norm(mid, axis=1)[:, None]
    ab, bc, ca = inv + len(v)
    a, b, c = f.T
    nf = np.concatenate([
        np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
        np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1),
    ])
    return np.concatenate([v, mid]), nf


def icosphere(radius=1.0, subdiv=4) -> TriMesh:
    """Subdivided icosahedron with every vertex on the sphere of ``radius``.

    ``subdiv`` levels give ``10 * 4**subdiv + 2`` vertices and
    ``20 * 4**subdiv`` faces.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    if not 0 <= int(subdiv) <= 7:
        raise ValueError("subdiv must be in [0, 7]")
    v = _ICO_VERTICES / np.linalg.norm(_ICO_VERTICES, axis=1)[:, None]
    f = _ICO_FACES.copy()
    for _ in range(int(subdiv)):
        v, f = _subdivide(v, f)
    v = v / np.linalg.norm(v, axis=1)[:, None]
    return TriMesh(v * radius, f)


# ---------------------------------------------------------------------------
# differential quantities
# ---------------------------------------------------------------------------

def vertex_normals(mesh: TriMesh, strict=True):
    """Unit normals from the area-weighted sum of incident face normals.

    With ``strict=False`` vertices whose weighted sum vanishes get NaN rows
    instead of raising :class:`DegenerateNormal`.
    """
    s = kernels.vertex_normal_sums(mesh.vertices, mesh.faces)
    norm = np.linalg.norm(s, axis=1)
    bad = ~(norm >= 1e-12)
    if bad.any():
        if strict:
            raise DegenerateNormal(
                f"{int(bad.sum())} vertices have a vanishing weighted normal", np.flatnonzero(bad))
        norm = np.where(bad, np.nan, norm)
    return s / norm[:, None]


def lumped_vertex_area(mesh: TriMesh):
    """One third of the total area of each vertex's incident faces."""
    third = mesh.face_areas() / 3.0
    n = mesh.n_vertices
    return sum(np.bincount(mesh.faces[:, k], weights=third, minlength=n) for k in range(3))


def triangle_angles(mesh: TriMesh):
    """Interior angles in degrees, shape (F, 3)."""
    v = mesh.vertices[mesh.faces]
    out = np.empty((mesh.n_faces, 3))
    for k in range(3):
        a = v[:, (k + 1) % 3] - v[:, k]
        b = v[:, (k + 2) % 3] - v[:, k]
        cosang = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out[:, k] = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return out


# ---------------------------------------------------------------------------
# OBJ / PLY
# ---------------------------------------------------------------------------

def write_obj(mesh: TriMesh, path):
    with open(os.fspath(path), "w") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in (mesh.faces + 1).tolist():
            fh.write(f"f {a} {b} {c}\n")


def _obj_index(tok, n_vertices, lineno):
    try:
        i = int(tok.split("/")[0])
    except ValueError:
        raise ParseError(f"bad face index {tok!r}", lineno) from None
    if i < 0:
        i = n_vertices + i + 1
    if i < 1:
        raise ParseError(f"face index {tok!r} out of range", lineno)
    return i - 1


def read_obj(path, validate=True) -> TriMesh:
    """Read ``v`` and triangular ``f`` records; other directives are skipped."""
    verts, faces = [], []
    with open(os.fspath(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ParseError("vertex needs three coordinates", lineno)
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise ParseError("malformed vertex coordinate", lineno) from None
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ParseError("only triangular faces are supported", lineno)
                idx = [_obj_index(t, len(verts), lineno) for t in parts[1:]]
                faces.append(idx)
    if faces and max(max(f) for f in faces) >= len(verts):
        raise ValidationError("face references a vertex that does not exist")
    mesh = TriMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
    if validate:
        mesh.validate()
    return mesh


def write_ply(mesh: TriMesh, scalar, path):
    """ASCII PLY with a per-vertex ``quality`` property carrying ``scalar``."""
    q = np.asarray(scalar, dtype=float).reshape(-1)
    if q.size != mesh.n_vertices:
        raise ValueError("need one scalar per vertex")
    with open(os.fspath(path), "w") as fh:
        fh.write(
            "ply\nformat ascii 1.0\n"
            f"element vertex {mesh.n_vertices}\n"
            "property double x\nproperty double y\nproperty double z\n"
            "property float quality\n"
            f"element face {mesh.n_faces}\n"
            "property list uchar int vertex_indices\n"
            "end_header\n")
        for (x, y, z), s in zip(mesh.vertices.tolist(), q.tolist()):
            fh.write(f"{x!r} {y!r} {z!r} {s!r}\n")
        for a, b, c in mesh.faces.tolist():
            fh.write(f"3 {a} {b} {c}\n")


def read_ply(path):
    """Read an ASCII PLY written by :func:`write_ply`.

    Returns ``(mesh, properties)`` where ``properties`` maps each vertex
    property name to its column.
    """
    with open(os.fspath(path)) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing ply magic", 1)
    elements, props, current = [], {}, None
    i = 1
    while True:
        if i >= len(lines):
            raise ParseError("missing end_header", i)
        parts = lines[i].split()
        i += 1
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1:2] != ["ascii"]:
                raise ParseError("only ascii PLY is supported", i)
        elif parts[0] == "element":
            current = parts[1]
            elements.append((current, int(parts[2])))
            props[current] = []
        elif parts[0] == "property":
            props[current].append(parts[-1])
        elif parts[0] == "end_header":
            break
        else:
            raise ParseError(f"unexpected header line {lines[i - 1]!r}", i)
    counts = dict(elements)
    nv, nf = counts.get("vertex", 0), counts.get("face", 0)
    try:
        vrows = np.array([lines[i + r].split() for r in range(nv)], dtype=float).reshape(nv, -1)
        frows = [lines[i + nv + r].split() for r in range(nf)]
    except (IndexError, ValueError):
        raise ParseError("truncated or malformed body", i + 1) from None
    faces = []
    for r, row in enumerate(frows):
        if row[0] != "3" or len(row) != 4:
            raise ParseError("only triangular faces are supported", i + nv + r + 1)
        faces.append([int(x) for x in row[1:]])
    names = props["vertex"]
    cols = {name: vrows[:, c] for c, name in enumerate(names)}
    verts = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    return TriMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3)), cols
