import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from shapeflow.curvature import (curvature, curvature_field, fit_paraboloid, local_patch,
                                 rotation_to_z)
from shapeflow.errors import CurvatureError, InsufficientNeighbors, SingularFit
from shapeflow.mesh import TriMesh, icosphere, vertex_normals

from test_mesh import flat_fan

unit_vectors = st.tuples(*[st.floats(-1, 1)] * 3).map(np.array).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: v / np.linalg.norm(v))


def hex_ring(radius=0.1):
    t = 2 * np.pi * np.arange(6) / 6
    return np.stack([radius * np.cos(t), radius * np.sin(t)], 1)


# --- rotation -------------------------------------------------------------

def test_rotation_special_cases():
    np.testing.assert_array_equal(rotation_to_z([0, 0, 1]).R, np.eye(3))
    np.testing.assert_array_equal(rotation_to_z([0, 0, -1]).R, np.diag([1.0, -1, -1]))
    f = rotation_to_z([1.0, 0, 0])
    np.testing.assert_allclose(f.R @ [1, 0, 0], [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(f.axis, [0, -1, 0])
    assert f.theta == pytest.approx(np.pi / 2)
    assert rotation_to_z([0, 0, 1]).axis is None


def test_rotation_requires_unit_vector():
    with pytest.raises(ValueError):
        rotation_to_z([0, 0, 2])


def test_rotation_frames_on_1000_random_normals():
    n = np.random.default_rng(42).normal(size=(1000, 3))
    n /= np.linalg.norm(n, axis=1)[:, None]
    for v in n:
        R = rotation_to_z(v).R
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(R @ v, [0, 0, 1], atol=1e-10)
        assert rotation_to_z(v).R.tobytes() == R.tobytes()


@given(unit_vectors)
def test_rotation_properties(n):
    f = rotation_to_z(n)
    np.testing.assert_allclose(f.R.T @ f.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(f.R @ n, [0, 0, 1], atol=1e-10)
    if f.axis is not None:
        # Rodrigues' form with the recorded axis and angle reproduces R
        k = f.axis
        K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        R = np.eye(3) + np.sin(f.theta) * K + (1 - np.cos(f.theta)) * K @ K
        np.testing.assert_allclose(R, f.R, atol=1e-12)


@pytest.mark.parametrize("eps", [1e-13, -1e-13, 1e-9, 1e-6])
def test_rotation_near_the_poles(eps):
    for c in (1.0, -1.0):
        n = np.array([eps, 0.0, c * np.sqrt(1 - eps * eps)])
        R = rotation_to_z(n).R
        np.testing.assert_allclose(R @ n, [0, 0, 1], atol=1e-10)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)


# --- patch and fit --------------------------------------------------------

def test_fit_exact_model_classes():
    xy = hex_ring()
    for fn, want in [(lambda x, y: x * x / 2, (1, 0, 0)), (lambda x, y: 0 * x, (0, 0, 0)),
                     (lambda x, y: x * y, (0, 1, 0)), (lambda x, y: -0.3 * x * x + 2 * x * y + 0.7 * y * y,
                                                      (-0.6, 2, 1.4))]:
        z = fn(xy[:, 0], xy[:, 1])
        fit = fit_paraboloid(np.column_stack([xy, z]))
        np.testing.assert_allclose([fit.A, fit.B, fit.C], want, atol=1e-10)
        assert fit.residual >= 0 and fit.neighbor_count == 6


def test_fit_errors():
    with pytest.raises(InsufficientNeighbors):
        fit_paraboloid(np.zeros((2, 3)))
    with pytest.raises(SingularFit):
        fit_paraboloid(np.zeros((4, 3)))


def test_local_patch_properties():
    fan = flat_fan()
    n = vertex_normals(fan)
    np.testing.assert_allclose(local_patch(fan, n, 0)[:, 2], 0.0, atol=1e-15)
    m = icosphere(1.0, 3)
    n = vertex_normals(m)
    for v in (0, 17, 400):
        q = local_patch(m, n, v)
        assert np.all(q[:, 2] <= 0)
        from shapeflow.mesh import one_ring
        d = m.vertices[one_ring(m, v)] - m.vertices[v]
        np.testing.assert_allclose(np.linalg.norm(q, axis=1), np.linalg.norm(d, axis=1), rtol=1e-14)


def test_flat_fan_curvature_is_exactly_zero():
    fan = flat_fan()
    s = curvature(fan, vertex_normals(fan), 0)
    assert s.H == 0.0 and s.G == 0.0


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_icosphere_curvature(r):
    m = icosphere(r, 4)
    cf = curvature_field(m, vertex_normals(m))
    assert np.all(np.abs(cf.H * r - 1) <= 0.05)
    assert np.all(np.abs(cf.G * r * r - 1) <= 0.10)
    assert np.all(cf.H > 0)


def test_ellipsoid_gaussian_curvature_range():
    m = icosphere(1.0, 4)
    m = m.with_vertices(m.vertices * [1, 2, 1])
    cf = curvature_field(m, vertex_normals(m))
    assert cf.G.min() >= 0.2 and cf.G.max() <= 4.4


def test_single_vertex_matches_field():
    m = icosphere(1.0, 3)
    m = m.with_vertices(m.vertices * [1.0, 1.3, 0.8])
    n = vertex_normals(m)
    cf = curvature_field(m, n)
    for v in (0, 12, 300):
        s = curvature(m, n, v)
        assert s.H == pytest.approx(cf.H[v], rel=1e-12)
        assert s.G == pytest.approx(cf.G[v], rel=1e-12, abs=1e-14)
        assert cf[v].H == cf.H[v]


def test_curvature_field_is_deterministic():
    m = icosphere(1.0, 3)
    m = m.with_vertices(m.vertices * [1.0, 1.5, 0.7])
    n = vertex_normals(m)
    a, b = curvature_field(m, n), curvature_field(m, n)
    assert a.H.tobytes() == b.H.tobytes() and a.G.tobytes() == b.G.tobytes()


@given(st.integers(0, 2 ** 32 - 1))
def test_curvature_rotation_invariance(seed):
    m = icosphere(1.0, 2)
    m = m.with_vertices(m.vertices * [1.0, 1.6, 0.7])
    R = Rotation.random(random_state=seed).as_matrix()
    mr = m.with_vertices(m.vertices @ R.T)
    a = curvature_field(m, vertex_normals(m))
    b = curvature_field(mr, vertex_normals(mr))
    np.testing.assert_allclose(b.H, a.H, atol=1e-8)
    np.testing.assert_allclose(b.G, a.G, atol=1e-8)


@given(st.floats(0.05, 20))
def test_curvature_scaling_law(s):
    m = icosphere(1.0, 2)
    m = m.with_vertices(m.vertices * [1.0, 1.6, 0.7])
    a = curvature_field(m, vertex_normals(m))
    ms = m.with_vertices(m.vertices * s)
    b = curvature_field(ms, vertex_normals(ms))
    np.testing.assert_allclose(b.H, a.H / s, rtol=1e-6)
    np.testing.assert_allclose(b.G, a.G / s ** 2, rtol=1e-6)


def test_exact_patch_scaling_law():
    xy = hex_ring()
    z = 0.4 * xy[:, 0] ** 2 - 0.3 * xy[:, 0] * xy[:, 1] + 0.1 * xy[:, 1] ** 2
    p = np.column_stack([xy, z])
    a = fit_paraboloid(p)
    for s in (0.1, 3.0):
        b = fit_paraboloid(p * s)
        np.testing.assert_allclose([b.A, b.B, b.C], np.array([a.A, a.B, a.C]) / s, rtol=1e-9)


@pytest.mark.parametrize("scale", [(1, 1, 1), (1, 2, 1), (1.5, 0.6, 1.1)])
def test_principal_curvatures_are_real(scale):
    m = icosphere(1.0, 3)
    m = m.with_vertices(m.vertices * scale)
    cf = curvature_field(m, vertex_normals(m))
    assert np.all(cf.H ** 2 >= cf.G - 1e-9)


def test_failures_are_aggregated_with_vertex_ids():
    fan = flat_fan()
    with pytest.raises(CurvatureError) as exc:
        curvature_field(fan, vertex_normals(fan))
    # rim vertices of an open fan have no closed one-ring
    assert set(exc.value.failures) == set(range(1, 7))
    assert "1, 2, 3" in str(exc.value)
    cf = curvature_field(fan, vertex_normals(fan), strict=False)
    assert cf.H[0] == 0.0 and np.all(np.isnan(cf.H[1:]))
    assert list(cf.available) == [True] + [False] * 6


def test_two_ring_fallback_for_rank_deficient_one_ring():
    # on an octahedron every one-ring lies on two axes, so the xy column of
    # the design matrix vanishes and the fit must widen and regularize
    v = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
    f = [[4, 0, 2], [4, 2, 1], [4, 1, 3], [4, 3, 0], [5, 2, 0], [5, 1, 2], [5, 3, 1], [5, 0, 3]]
    octa = TriMesh(v, f)
    octa.validate()
    cf = curvature_field(octa, vertex_normals(octa))
    assert cf.widened.all()
    # neighbors sit at unit distance and one unit below the tangent plane
    np.testing.assert_allclose(cf.H, 2.0, rtol=1e-9)
    np.testing.assert_allclose(cf.coef[:, 1], 0.0, atol=1e-9)
