"""Per-vertex curvature from paraboloid fits in a rotated tangent frame.

Around each vertex the one-ring is translated so the vertex sits at the
origin, rotated so the vertex normal points along +z, and fitted in the least
squares sense by ``z = A/2 x^2 + B x y + C/2 y^2``. The shape operator in that
frame is ``[[-A, B], [B, -C]]``; its half-trace is the mean curvature and its
determinant the Gaussian curvature. With outward normals a sphere of radius
``r`` gives ``H = 1/r``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CurvatureError, InsufficientNeighbors, NonManifoldVertex, SingularFit
from .mesh import TriMesh, one_ring, two_ring


@dataclass(frozen=True)
class RotationFrame:
    R: np.ndarray
    theta: float
    axis: np.ndarray | None  # None when n is (anti)parallel to z


@dataclass(frozen=True)
class PatchFit:
    A: float
    B: float
    C: float
    residual: float
    neighbor_count: int


@dataclass(frozen=True)
class CurvatureSample:
    H: float
    G: float
    normal: np.ndarray


def rotation_to_z(n) -> RotationFrame:
    """Rodrigues rotation taking the unit vector ``n`` onto +z.

    Axis ``n x z`` normalized, angle ``arccos(n . z)``. When ``n`` is within
    1e-12 of the z axis the identity (``n ~ +z``) or ``diag(1, -1, -1)``
    (``n ~ -z``) is returned.
    """
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-10:
        raise ValueError("n must be a unit vector")
    R = kernels.rotations_to_z(n[None, :])[0]
    s = math.hypot(n[0], n[1])
    theta = math.atan2(s, n[2])
    axis = None if s < 1e-12 else np.array([n[1], -n[0], 0.0]) / s
    return RotationFrame(R, theta, axis)


def local_patch(mesh: TriMesh, normals, v, ring=None):
    """One-ring of ``v`` in the vertex's tangent frame, shape (k, 3)."""
    ring = one_ring(mesh, v) if ring is None else ring
    if len(ring) < 3:
        raise InsufficientNeighbors(f"vertex {v} has {len(ring)} neighbors, need 3")
    R = rotation_to_z(normals[v]).R
    d = mesh.vertices[ring] - mesh.vertices[v]
    return d @ R.T


def _solve(patch):
    x, y, z = patch[:, 0], patch[:, 1], patch[:, 2]
    D = np.stack([0.5 * x * x, x * y, 0.5 * y * y], axis=1)
    M = D.T @ D
    rhs = D.T @ z
    trace = np.trace(M)
    if not trace > 0:
        raise SingularFit("all patch points project onto the origin")
    ev = np.linalg.eigvalsh(M)
    regularized = not (ev[0] > 0 and ev[2] / ev[0] <= kernels.COND_LIMIT)
    if regularized:
        M = M + 1e-12 * trace * np.eye(3)
    coef = np.linalg.solve(M, rhs)
    if not np.all(np.isfinite(coef)):
        raise SingularFit("fit produced non-finite coefficients")
    res = math.sqrt(float(np.mean((z - D @ coef) ** 2)))
    return coef, res, regularized


def fit_paraboloid(patch) -> PatchFit:
    """Least-squares ``(A, B, C)`` for points already in the tangent frame."""
    patch = np.asarray(patch, dtype=float).reshape(-1, 3)
    if len(patch) < 3:
        raise InsufficientNeighbors(f"need at least 3 points, got {len(patch)}")
    coef, res, _ = _solve(patch)
    return PatchFit(float(coef[0]), float(coef[1]), float(coef[2]), res, len(patch))


def _hg(A, B, C):
    return -0.5 * (A + C), A * C - B * B


def curvature(mesh: TriMesh, normals, v) -> CurvatureSample:
    """Mean and Gaussian curvature at one vertex.

    A rank-deficient one-ring fit is retried on the two-ring.
    """
    patch = local_patch(mesh, normals, v)
    coef, _, regularized = _solve(patch)
    if regularized:
        coef, _, _ = _solve(local_patch(mesh, normals, v, ring=two_ring(mesh, v)))
    H, G = _hg(*coef)
    return CurvatureSample(float(H), float(G), np.asarray(normals[v], dtype=float).copy())


@dataclass(frozen=True)
class CurvatureField:
    """Curvature at every vertex; ``H``, ``G`` are (V,), ``coef`` is (V, 3).

    ``widened`` marks vertices whose fit fell back to the two-ring. Entries
    are NaN where the fit was unavailable (non-strict mode only).
    """

    H: np.ndarray
    G: np.ndarray
    normals: np.ndarray
    coef: np.ndarray
    residual: np.ndarray
    widened: np.ndarray

    def __len__(self):
        return len(self.H)

    def __getitem__(self, v) -> CurvatureSample:
        return CurvatureSample(float(self.H[v]), float(self.G[v]), self.normals[v].copy())

    @property
    def available(self):
        return np.isfinite(self.H)


def _padded(rings):
    k = max(len(r) for r in rings)
    table = np.full((len(rings), k), -1, dtype=np.int64)
    for i, r in enumerate(rings):
        table[i, :len(r)] = r
    return table, np.array([len(r) for r in rings], dtype=np.int64)


def curvature_field(mesh: TriMesh, normals, strict=True) -> CurvatureField:
    """Curvature at every vertex.

    Raises :class:`CurvatureError` listing every failing vertex, unless
    ``strict`` is false, in which case failures become NaN.
    """
    normals = np.ascontiguousarray(normals, dtype=float)
    table, degree = mesh.ring_table()
    n = mesh.n_vertices
    failures = {}
    for v in np.flatnonzero(degree == 0).tolist():
        failures[v] = NonManifoldVertex(f"vertex {v} has no manifold one-ring", v)
    for v in np.flatnonzero((degree > 0) & (degree < 3)).tolist():
        failures[v] = InsufficientNeighbors(f"vertex {v} has {degree[v]} neighbors, need 3")
    bad_normal = ~np.all(np.isfinite(normals), axis=1)
    for v in np.flatnonzero(bad_normal & (degree >= 3)).tolist():
        failures[v] = SingularFit(f"vertex {v} has no usable normal")

    usable = (degree >= 3) & ~bad_normal
    centers = np.flatnonzero(usable).astype(np.int64)
    coef = np.full((n, 3), np.nan)
    residual = np.full(n, np.nan)
    widened = np.zeros(n, dtype=bool)
    if centers.size:
        c, r, flag = kernels.paraboloid_fit(mesh.vertices, normals, centers, table[centers], degree[centers])
        coef[centers] = c
        residual[centers] = r
        retry = centers[flag != 0]
        if retry.size:
            rings = [two_ring(mesh, int(v)) for v in retry]
            t2, d2 = _padded(rings)
            c2, r2, f2 = kernels.paraboloid_fit(mesh.vertices, normals, retry, t2, d2)
            coef[retry] = c2
            residual[retry] = r2
            widened[retry] = True
            for v in retry[f2 == 2].tolist():
                failures[v] = SingularFit(f"vertex {v}: two-ring fit is still singular")
                coef[v] = np.nan
    if failures and strict:
        raise CurvatureError(failures)
    H, G = _hg(coef[:, 0], coef[:, 1], coef[:, 2])
    return CurvatureField(H, G, normals, coef, residual, widened)
