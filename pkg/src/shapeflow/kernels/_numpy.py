"""Pure-numpy kernels.

Every function here has a twin with the same signature in ``_numba``. The
numpy versions are vectorized over the leading axis and are the reference
the numba path is tested against.
"""
import numpy as np

# cube corner offsets and edge endpoints, Bourke numbering
CORNERS = np.array(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
     [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=np.int64)
# (corner the edge starts from, axis it runs along)
EDGE_ORIGIN = np.array([0, 1, 3, 0, 4, 5, 7, 4, 0, 1, 2, 3], dtype=np.int64)
EDGE_AXIS = np.array([0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2], dtype=np.int64)

COND_LIMIT = 1e12
TIKHONOV = 1e-12


def trilinear_sample(channels, origin, spacing, points):
    """Trilinear blend of a multi-channel node array.

    ``channels`` has shape (nx, ny, nz, C). Points are assumed to lie inside
    the grid; the containing cell index is clipped to the last full cell.
    Returns an (N, C) array.
    """
    dims = np.array(channels.shape[:3], dtype=np.int64)
    u = (points - origin) / spacing
    i0 = np.clip(np.floor(u).astype(np.int64), 0, dims - 2)
    t = u - i0
    out = np.zeros((points.shape[0], channels.shape[3]))
    for dx in (0, 1):
        wx = t[:, 0] if dx else 1.0 - t[:, 0]
        for dy in (0, 1):
            wy = t[:, 1] if dy else 1.0 - t[:, 1]
            for dz in (0, 1):
                wz = t[:, 2] if dz else 1.0 - t[:, 2]
                corner = channels[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
                out += (wx * wy * wz)[:, None] * corner
    return out


def face_cross(vertices, faces):
    """Unnormalized face normals (twice the area times the unit normal)."""
    v0 = vertices[faces[:, 0]]
    return np.cross(vertices[faces[:, 1]] - v0, vertices[faces[:, 2]] - v0)


def vertex_normal_sums(vertices, faces):
    """Sum of area-weighted incident face normals per vertex, shape (V, 3)."""
    cross = face_cross(vertices, faces)
    n = vertices.shape[0]
    out = np.zeros((n, 3))
    for k in range(3):
        for c in range(3):
            out[:, c] += np.bincount(faces[:, k], weights=cross[:, c], minlength=n)
    return out


def rotations_to_z(normals):
    """Batched Rodrigues rotations taking each unit normal onto +z."""
    nx, ny, c = normals[:, 0], normals[:, 1], normals[:, 2]
    s = np.hypot(nx, ny)
    R = np.zeros((normals.shape[0], 3, 3))
    degenerate = s < 1e-12
    ok = ~degenerate
    # axis n x z = (ny, -nx, 0) / s
    rx = np.where(ok, ny / np.where(ok, s, 1.0), 0.0)
    ry = np.where(ok, -nx / np.where(ok, s, 1.0), 0.0)
    one_minus_c = np.where(c >= 0, s * s / (1.0 + np.abs(c)), 1.0 - c)
    K = np.zeros_like(R)
    K[:, 0, 2] = ry
    K[:, 1, 2] = -rx
    K[:, 2, 0] = -ry
    K[:, 2, 1] = rx
    R[:] = np.eye(3)
    R += s[:, None, None] * K + one_minus_c[:, None, None] * (K @ K)
    flip = degenerate & (c < 0)
    R[degenerate] = np.eye(3)
    R[flip] = np.diag([1.0, -1.0, -1.0])
    return R


def paraboloid_fit(vertices, normals, centers, ring, degree):
    """Least-squares paraboloid fit for each center vertex.

    ``ring`` is a padded (M, K) neighbor index array (``-1`` past ``degree``).
    Returns ``(coef, residual, flag)``: coef is (M, 3) holding A, B, C; flag
    is 0 for a well-conditioned fit, 1 when Tikhonov regularization was
    needed and 2 when the system is empty (coefficients NaN).
    """
    m, kmax = ring.shape
    valid = np.arange(kmax)[None, :] < degree[:, None]
    idx = np.where(valid, ring, 0)
    R = rotations_to_z(normals[centers])
    d = vertices[idx] - vertices[centers][:, None, :]
    q = np.einsum("mij,mkj->mki", R, d)
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    w = valid.astype(float)
    D = np.stack([0.5 * x * x, x * y, 0.5 * y * y], axis=-1) * w[..., None]
    M = np.einsum("mki,mkj->mij", D, D)
    rhs = np.einsum("mki,mk->mi", D, z)

    trace = np.trace(M, axis1=1, axis2=2)
    ev = np.linalg.eigvalsh(M)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(ev[:, 0] > 0, ev[:, 2] / ev[:, 0], np.inf)
    flag = np.zeros(m, dtype=np.int64)
    flag[cond > COND_LIMIT] = 1
    flag[~(trace > 0)] = 2
    reg = np.where(flag == 1, TIKHONOV * trace, 0.0)
    M = M + reg[:, None, None] * np.eye(3)
    empty = flag == 2
    M[empty] = np.eye(3)
    coef = np.linalg.solve(M, rhs[..., None])[..., 0]
    coef[empty] = np.nan

    model = D @ coef[..., None]
    r = (z * w - model[..., 0]) ** 2
    cnt = np.maximum(degree, 1)
    residual = np.sqrt(r.sum(axis=1) / cnt)
    return coef, residual, flag


def mc_triangles(values, iso, tri_table):
    """Marching-cubes cell pass.

    Returns a (T, 3) array of global edge ids, one row per triangle. Cells
    are visited in C order of (i, j, k), table slots in order. A global edge
    id encodes the edge's lower node and its axis as
    ``((i * ny + j) * nz + k) * 3 + axis``.
    """
    nx, ny, nz = values.shape
    inside = values < iso
    code = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for c, (dx, dy, dz) in enumerate(CORNERS):
        code |= inside[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz].astype(np.int64) << c
    active = np.nonzero((code != 0) & (code != 255))
    if active[0].size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    cells = np.stack(active, axis=1)
    entries = tri_table[code[active], :15].reshape(-1, 5, 3)
    has_tri = entries[:, :, 0] >= 0
    cell_of = np.repeat(np.arange(cells.shape[0]), 5).reshape(-1, 5)[has_tri]
    local = entries[has_tri]
    base = cells[cell_of][:, None, :] + CORNERS[EDGE_ORIGIN[local]]
    node = (base[..., 0] * ny + base[..., 1]) * nz + base[..., 2]
    return node * 3 + EDGE_AXIS[local]
