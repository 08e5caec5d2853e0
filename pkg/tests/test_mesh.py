import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from shapeflow.errors import DegenerateNormal, NonManifoldVertex, ParseError, ValidationError
from shapeflow.mesh import (TriMesh, icosphere, lumped_vertex_area, one_ring, read_obj, read_ply,
                            triangle_angles, two_ring, vertex_normals, write_obj, write_ply)


def flat_fan(k=6, radius=1.0):
    """Hexagonal (or k-gon) fan around the origin in the z=0 plane, CCW from +z."""
    t = 2 * np.pi * np.arange(k) / k
    v = np.vstack([[0, 0, 0], np.stack([radius * np.cos(t), radius * np.sin(t), 0 * t], 1)])
    f = [[0, 1 + i, 1 + (i + 1) % k] for i in range(k)]
    return TriMesh(v, f)


def tetrahedron():
    v = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]
    f = [[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]]
    return TriMesh(v, f)


@pytest.mark.parametrize("s", range(0, 6))
def test_icosphere_counts(s):
    m = icosphere(1.0, s)
    assert m.n_vertices == 10 * 4 ** s + 2
    assert m.n_faces == 20 * 4 ** s
    assert m.euler_characteristic() == 2


def test_icosphere_subdiv4_counts_and_validity():
    m = icosphere(1.0, 4)
    assert (m.n_vertices, m.n_faces) == (2562, 5120)
    m.validate()
    assert m.is_closed() and m.signed_volume() > 0


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 3.7])
def test_icosphere_vertices_on_sphere(r):
    m = icosphere(r, 3)
    assert np.max(np.abs(np.linalg.norm(m.vertices, axis=1) - r)) <= 1e-12


def test_icosphere_argument_checks():
    with pytest.raises(ValueError):
        icosphere(0.0, 2)
    with pytest.raises(ValueError):
        icosphere(1.0, 8)


def test_trimesh_construction_checks():
    with pytest.raises(ValidationError):
        TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])
    with pytest.raises(ValidationError):
        TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])
    m = tetrahedron()
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0


def test_validate_rejects_open_inverted_and_non_manifold():
    with pytest.raises(ValidationError, match="not closed"):
        flat_fan().validate()
    t = tetrahedron()
    with pytest.raises(ValidationError, match="outward"):
        TriMesh(t.vertices, t.faces[:, ::-1]).validate()
    # two tetrahedra sharing one vertex: closed, but the shared vertex has two fans
    extra = t.vertices[1:] * 0.5 + [3, 0, 0]
    f2 = np.array([[0, 4, 5], [0, 5, 6], [0, 6, 4], [4, 6, 5]])
    bowtie = TriMesh(np.vstack([t.vertices, extra]), np.vstack([t.faces, f2]))
    assert bowtie.is_closed()
    with pytest.raises(ValidationError, match="non-manifold vertex 0"):
        bowtie.validate()
    with pytest.raises(NonManifoldVertex):
        one_ring(bowtie, 0)


def test_one_ring_icosahedron_and_icosphere():
    ico = icosphere(1.0, 0)
    for v in range(12):
        assert len(one_ring(ico, v)) == 5
    m = icosphere(1.0, 4)
    degrees = np.array([len(one_ring(m, v)) for v in range(m.n_vertices)])
    assert np.sum(degrees == 5) == 12
    assert np.all(degrees[12:] == 6)


def test_one_ring_is_a_ccw_cycle():
    m = icosphere(1.0, 2)
    face_set = {tuple(np.roll(f, -k)) for f in m.faces.tolist() for k in range(3)}
    for v in range(m.n_vertices):
        ring = one_ring(m, v)
        for a, b in zip(ring, ring[1:] + ring[:1]):
            assert (v, a, b) in face_set


def test_reversed_faces_reverse_the_ring():
    m = icosphere(1.0, 1)
    r = TriMesh(m.vertices, m.faces[:, ::-1])
    for v in range(m.n_vertices):
        a = one_ring(m, v)
        b = one_ring(r, v)
        i = b.index(a[0])
        assert (b[i::-1] + b[:i:-1]) == a


def test_two_ring_contains_one_ring():
    m = icosphere(1.0, 2)
    for v in (0, 50, 100):
        r1 = one_ring(m, v)
        r2 = two_ring(m, v)
        assert r2[:len(r1)] == r1
        assert v not in r2 and len(set(r2)) == len(r2) and len(r2) > len(r1)


def test_vertex_normals_sphere_and_fan():
    m = icosphere(1.0, 4)
    n = vertex_normals(m)
    exact = m.vertices / np.linalg.norm(m.vertices, axis=1)[:, None]
    ang = np.degrees(np.arccos(np.clip(np.einsum("ij,ij->i", n, exact), -1, 1)))
    assert ang.max() <= 1.0
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(vertex_normals(flat_fan()), np.tile([0, 0, 1.0], (7, 1)), atol=1e-15)


def test_degenerate_normal():
    # a vertex whose two incident faces cancel exactly
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
    m = TriMesh(v, [[0, 1, 2], [0, 2, 1]])
    with pytest.raises(DegenerateNormal) as exc:
        vertex_normals(m)
    assert set(exc.value.vertices) == {0, 1, 2}
    assert np.all(np.isnan(vertex_normals(m, strict=False)))


def test_face_normals_sum_to_zero_on_closed_mesh():
    m = icosphere(1.3, 3)
    v = m.vertices[m.faces]
    s = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]).sum(axis=0) / 2
    assert np.linalg.norm(s) <= 1e-10 * m.area()


@given(st.integers(0, 2 ** 32 - 1))
def test_vertex_normals_rotation_equivariant(seed):
    m = icosphere(1.0, 2)
    m = m.with_vertices(m.vertices * [1.0, 1.7, 0.6])
    R = Rotation.random(random_state=seed).as_matrix()
    n = vertex_normals(m)
    nr = vertex_normals(m.with_vertices(m.vertices @ R.T))
    np.testing.assert_allclose(nr, n @ R.T, atol=1e-10)


def test_lumped_area():
    m = icosphere(1.0, 4)
    a = lumped_vertex_area(m)
    assert a.sum() == pytest.approx(m.area(), rel=1e-13)
    assert abs(a.sum() - 4 * np.pi) <= 0.005 * 4 * np.pi
    tri = TriMesh([[0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]], [[0, 1, 2]])
    np.testing.assert_allclose(lumped_vertex_area(tri), math.sqrt(3) / 12)


@given(st.floats(0.1, 10))
def test_lumped_area_scales_quadratically(s):
    m = icosphere(1.0, 2)
    np.testing.assert_allclose(lumped_vertex_area(m.with_vertices(m.vertices * s)),
                               lumped_vertex_area(m) * s * s, rtol=1e-12)


def test_signed_volume_of_sphere():
    assert icosphere(1.0, 5).signed_volume() == pytest.approx(4 / 3 * np.pi, rel=2e-3)


def test_triangle_angles():
    ang = triangle_angles(icosphere(1.0, 0))
    np.testing.assert_allclose(ang, 60.0, atol=1e-10)
    np.testing.assert_allclose(triangle_angles(icosphere(1.0, 3)).sum(axis=1), 180.0, atol=1e-9)


# --- files ----------------------------------------------------------------

def test_obj_round_trip(tmp_path):
    m = icosphere(1.7, 2)
    m = m.with_vertices(m.vertices + np.random.default_rng(0).normal(scale=1e-3, size=m.vertices.shape))
    write_obj(m, tmp_path / "m.obj")
    back = read_obj(tmp_path / "m.obj")
    np.testing.assert_allclose(back.vertices, m.vertices, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(back.faces, m.faces)


def test_obj_reader_handles_slashes_negatives_and_comments(tmp_path):
    p = tmp_path / "t.obj"
    p.write_text("# tet\nv 1 1 1\nv 1 -1 -1\nvn 0 0 1\nv -1 1 -1\nv -1 -1 1\n"
                 "f 1/1/1 2//1 3\nf -4 -2 -1\nf 1 4 2\nf 2 4 3\n")
    m = read_obj(p)
    np.testing.assert_array_equal(m.faces, [[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]])


def test_obj_boundary_mesh_is_rejected(tmp_path):
    write_obj(flat_fan(), tmp_path / "fan.obj")
    with pytest.raises(ValidationError):
        read_obj(tmp_path / "fan.obj")
    assert read_obj(tmp_path / "fan.obj", validate=False).n_faces == 6


@pytest.mark.parametrize("text, line", [
    ("v 0 0\n", 1),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3 4\n", 5),
    ("v 0 0 0\nv a 0 0\n", 2),
    ("v 0 0 0\nf 1 x 1\n", 2),
])
def test_obj_parse_errors(tmp_path, text, line):
    p = tmp_path / "bad.obj"
    p.write_text(text)
    with pytest.raises(ParseError) as exc:
        read_obj(p)
    assert exc.value.line == line


def test_obj_index_out_of_range(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n")
    with pytest.raises(ValidationError):
        read_obj(p)


def test_ply_header_and_round_trip(tmp_path):
    m = icosphere(1.0, 2)
    q = np.linspace(-1, 1, m.n_vertices)
    write_ply(m, q, tmp_path / "m.ply")
    text = (tmp_path / "m.ply").read_text().splitlines()
    assert text[:3] == ["ply", "format ascii 1.0", f"element vertex {m.n_vertices}"]
    assert "property float quality" in text
    assert f"element face {m.n_faces}" in text
    back, props = read_ply(tmp_path / "m.ply")
    assert list(props) == ["x", "y", "z", "quality"]
    np.testing.assert_allclose(back.vertices, m.vertices, atol=1e-12)
    np.testing.assert_array_equal(back.faces, m.faces)
    np.testing.assert_allclose(props["quality"], q, atol=1e-12)


def test_ply_rejects_wrong_scalar_length(tmp_path):
    with pytest.raises(ValueError):
        write_ply(icosphere(1.0, 0), np.zeros(3), tmp_path / "x.ply")


def test_ply_parse_errors(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_text("plx\n")
    with pytest.raises(ParseError):
        read_ply(p)
    p.write_text("ply\nformat binary_little_endian 1.0\nend_header\n")
    with pytest.raises(ParseError):
        read_ply(p)
