"""Numba-compiled twins of the kernels in ``_numpy``.

Per-vertex kernels run under ``prange``; each iteration writes only its own
output row, so results do not depend on the thread count.
"""
import os

import numba
import numpy as np
from numba import njit, prange

from ._numpy import CORNERS, EDGE_AXIS, EDGE_ORIGIN, COND_LIMIT, TIKHONOV

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ and "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(parallel=True, cache=True)
def trilinear_sample(channels, origin, spacing, points):
    nx, ny, nz, nc = channels.shape
    n = points.shape[0]
    out = np.zeros((n, nc))
    for p in prange(n):
        i = np.empty(3, dtype=np.int64)
        t = np.empty(3)
        lim = (nx - 2, ny - 2, nz - 2)
        for a in range(3):
            u = (points[p, a] - origin[a]) / spacing[a]
            f = np.int64(np.floor(u))
            if f < 0:
                f = 0
            elif f > lim[a]:
                f = lim[a]
            i[a] = f
            t[a] = u - f
        for dx in range(2):
            wx = t[0] if dx else 1.0 - t[0]
            for dy in range(2):
                wy = t[1] if dy else 1.0 - t[1]
                for dz in range(2):
                    wz = t[2] if dz else 1.0 - t[2]
                    w = wx * wy * wz
                    for c in range(nc):
                        out[p, c] += w * channels[i[0] + dx, i[1] + dy, i[2] + dz, c]
    return out


@njit(cache=True)
def face_cross(vertices, faces):
    nf = faces.shape[0]
    out = np.empty((nf, 3))
    for f in range(nf):
        a, b, c = faces[f, 0], faces[f, 1], faces[f, 2]
        e1x = vertices[b, 0] - vertices[a, 0]
        e1y = vertices[b, 1] - vertices[a, 1]
        e1z = vertices[b, 2] - vertices[a, 2]
        e2x = vertices[c, 0] - vertices[a, 0]
        e2y = vertices[c, 1] - vertices[a, 1]
        e2z = vertices[c, 2] - vertices[a, 2]
        out[f, 0] = e1y * e2z - e1z * e2y
        out[f, 1] = e1z * e2x - e1x * e2z
        out[f, 2] = e1x * e2y - e1y * e2x
    return out


@njit(cache=True)
def vertex_normal_sums(vertices, faces):
    cross = face_cross(vertices, faces)
    out = np.zeros((vertices.shape[0], 3))
    for k in range(3):
        for f in range(faces.shape[0]):
            v = faces[f, k]
            for c in range(3):
                out[v, c] += cross[f, c]
    return out


@njit(cache=True)
def _rotation_to_z(n, R):
    nx, ny, c = n[0], n[1], n[2]
    s = np.hypot(nx, ny)
    for i in range(3):
        for j in range(3):
            R[i, j] = 1.0 if i == j else 0.0
    if s < 1e-12:
        if c < 0:
            R[1, 1] = -1.0
            R[2, 2] = -1.0
        return
    rx = ny / s
    ry = -nx / s
    omc = s * s / (1.0 + abs(c)) if c >= 0 else 1.0 - c
    K = np.zeros((3, 3))
    K[0, 2] = ry
    K[1, 2] = -rx
    K[2, 0] = -ry
    K[2, 1] = rx
    K2 = K @ K
    for i in range(3):
        for j in range(3):
            R[i, j] += s * K[i, j] + omc * K2[i, j]


@njit(parallel=True, cache=True)
def paraboloid_fit(vertices, normals, centers, ring, degree):
    m = centers.shape[0]
    coef = np.empty((m, 3))
    residual = np.empty(m)
    flag = np.zeros(m, dtype=np.int64)
    for r in prange(m):
        v = centers[r]
        R = np.empty((3, 3))
        _rotation_to_z(normals[v], R)
        k = degree[r]
        q = np.empty((k, 3))
        for j in range(k):
            d = vertices[ring[r, j]] - vertices[v]
            for a in range(3):
                q[j, a] = R[a, 0] * d[0] + R[a, 1] * d[1] + R[a, 2] * d[2]
        M = np.zeros((3, 3))
        rhs = np.zeros(3)
        row = np.empty(3)
        for j in range(k):
            x, y, z = q[j, 0], q[j, 1], q[j, 2]
            row[0] = 0.5 * x * x
            row[1] = x * y
            row[2] = 0.5 * y * y
            for a in range(3):
                rhs[a] += row[a] * z
                for b in range(3):
                    M[a, b] += row[a] * row[b]
        trace = M[0, 0] + M[1, 1] + M[2, 2]
        if not trace > 0:
            flag[r] = 2
            coef[r, :] = np.nan
            residual[r] = np.nan
            continue
        ev = np.linalg.eigvalsh(M)
        if not (ev[0] > 0 and ev[2] / ev[0] <= COND_LIMIT):
            flag[r] = 1
            for a in range(3):
                M[a, a] += TIKHONOV * trace
        sol = np.linalg.solve(M, rhs)
        coef[r, :] = sol
        acc = 0.0
        for j in range(k):
            x, y, z = q[j, 0], q[j, 1], q[j, 2]
            e = z - (0.5 * sol[0] * x * x + sol[1] * x * y + 0.5 * sol[2] * y * y)
            acc += e * e
        residual[r] = np.sqrt(acc / max(k, 1))
    return coef, residual, flag


@njit(cache=True)
def mc_triangles(values, iso, tri_table):
    nx, ny, nz = values.shape
    count = 0
    codes = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz - 1):
                code = 0
                for c in range(8):
                    if values[i + CORNERS[c, 0], j + CORNERS[c, 1], k + CORNERS[c, 2]] < iso:
                        code |= 1 << c
                codes[i, j, k] = code
                for s in range(5):
                    if tri_table[code, 3 * s] >= 0:
                        count += 1
    out = np.empty((count, 3), dtype=np.int64)
    t = 0
    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz - 1):
                code = codes[i, j, k]
                if code == 0 or code == 255:
                    continue
                for s in range(5):
                    if tri_table[code, 3 * s] < 0:
                        break
                    for c in range(3):
                        e = tri_table[code, 3 * s + c]
                        o = EDGE_ORIGIN[e]
                        node = ((i + CORNERS[o, 0]) * ny + j + CORNERS[o, 1]) * nz + k + CORNERS[o, 2]
                        out[t, c] = node * 3 + EDGE_AXIS[e]
                    t += 1
    return out
