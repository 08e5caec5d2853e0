"""Volumetric level-set fields: construction, CSG, noise, sampling, storage.

Two kinds of field source answer ``phi``, gradient and Hessian queries:

* :class:`AnalyticSource` wraps an :class:`ImplicitField` (a phantom or any
  CSG composition) and returns exact derivatives. It is the test oracle.
* :class:`GridSource` wraps a :class:`ScalarGrid`. Gradient and Hessian are
  taken node-wise by second-order finite differences and every channel is
  then blended trilinearly, so no derivative of the piecewise-trilinear
  interpolant is ever formed.
"""
from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateGradient, NoConvergence, OutOfDomain, ParseError

DEFAULT_N = 64
DEFAULT_BOUNDS = (-2.5, 2.5)
SAMPLING_MARGIN = 2
EPS_GRAD = 1e-9


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Node layout of a regular grid: node ``(i, j, k)`` sits at
    ``origin + (i, j, k) * spacing``."""

    dims: tuple
    origin: tuple
    spacing: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        origin = tuple(float(o) for o in self.origin)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or len(origin) != 3 or len(spacing) != 3:
            raise ValueError("dims, origin and spacing must have three components")
        if min(dims) < 2:
            raise ValueError(f"all dims must be >= 2, got {dims}")
        if not all(s > 0 and math.isfinite(s) for s in spacing):
            raise ValueError(f"spacing must be positive and finite, got {spacing}")
        if not all(math.isfinite(o) for o in origin):
            raise ValueError("origin must be finite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def cube(cls, n=DEFAULT_N, lo=DEFAULT_BOUNDS[0], hi=DEFAULT_BOUNDS[1]):
        """``n`` nodes per axis spanning ``[lo, hi]`` on every axis."""
        if not hi > lo:
            raise ValueError("need hi > lo")
        if n < 2:
            raise ValueError("need at least 2 nodes per axis")
        h =(hi - lo) / (n - 1)
        return cls((n, n, n), (lo, lo, lo), (h, h, h))

    @property
    def size(self):
        return self.dims[0] * self.dims[1] * self.dims[2]

    def axes(self):
        return [o + np.arange(n) * h for n, o, h in zip(self.dims, self.origin, self.spacing)]

    def nodes(self):
        """Node coordinates, shape (nx, ny, nz, 3)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def bounds(self, margin=0):
        """Axis-aligned box ``(lo, hi)`` shrunk by ``margin`` cells."""
        o = np.asarray(self.origin)
        h = np.asarray(self.spacing)
        n = np.asarray(self.dims)
        return o + margin * h, o + (n - 1 - margin) * h


class ScalarGrid:
    """Field values on a :class:`GridSpec`, stored as an (nx, ny, nz) array.

    The array is indexed ``values[i, j, k]``; :meth:`flat` gives the
    x-fastest linear order used by the SDF1 format. Instances are read-only.
    """

    def __init__(self, spec: GridSpec, values):
        values = np.array(values, dtype=np.float64)
        if values.ndim == 1:
            if values.size != spec.size:
                raise ValueError(f"expected {spec.size} values, got {values.size}")
            values = values.reshape(spec.dims, order="F")
        if values.shape != spec.dims:
            raise ValueError(f"values shape {values.shape} does not match dims {spec.dims}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        values.setflags(write=False)
        self.spec = spec
        self.values = values

    def flat(self):
        return self.values.ravel(order="F")

    def __repr__(self):
        return f"ScalarGrid(dims={self.spec.dims}, origin={self.spec.origin}, spacing={self.spec.spacing})"


# ---------------------------------------------------------------------------
# implicit fields and CSG
# ---------------------------------------------------------------------------

class FieldSamples(NamedTuple):
    """Batched samples: phi (N,), grad (N, 3), hess (N, 3, 3)."""

    phi: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


@dataclass(frozen=True)
class FieldSample:
    phi: float
    grad: np.ndarray
    hess: np.ndarray


class ImplicitField:
    """Analytic scalar field with exact first and second derivatives."""

    def evaluate(self, points) -> FieldSamples:
        raise NotImplementedError

    def __call__(self, p):
        pts = np.asarray(p, dtype=float)
        single = pts.ndim == 1
        phi = self.evaluate(np.atleast_2d(pts)).phi
        return float(phi[0]) if single else phi


@dataclass(frozen=True)
class Quadric(ImplicitField):
    """``sum_i w_i (x_i - c_i)^2 - level``, an axis-aligned quadric."""

    weights: tuple = (1.0, 1.0, 1.0)
    center: tuple = (0.0, 0.0, 0.0)
    level: float = 1.0

    def evaluate(self, points):
        w = np.asarray(self.weights, dtype=float)
        d = points - np.asarray(self.center, dtype=float)
        phi = (w * d * d).sum(axis=1) - self.level
        grad = 2.0 * w * d
        hess = np.broadcast_to(np.diag(2.0 * w), (points.shape[0], 3, 3)).copy()
        return FieldSamples(phi, grad, hess)


@dataclass(frozen=True)
class Plane(ImplicitField):
    """``normal . x - offset``."""

    normal: tuple
    offset: float = 0.0

    def evaluate(self, points):
        n = np.asarray(self.normal, dtype=float)
        phi = points @ n - self.offset
        grad = np.broadcast_to(n, points.shape).copy()
        hess = np.zeros((points.shape[0], 3, 3))
        return FieldSamples(phi, grad, hess)


def _select(samples: Sequence[FieldSamples], pick):
    phis = np.stack([s.phi for s in samples])
    idx = pick(phis, axis=0)
    rows = np.arange(phis.shape[1])
    return FieldSamples(
        phis[idx, rows],
        np.stack([s.grad for s in samples])[idx, rows],
        np.stack([s.hess for s in samples])[idx, rows],
    )


@dataclass(frozen=True)
class Union(ImplicitField):
    parts: tuple

    def evaluate(self, points):
        return _select([p.evaluate(points) for p in self.parts], np.argmin)


@dataclass(frozen=True)
class Intersection(ImplicitField):
    parts: tuple

    def evaluate(self, points):
        return _select([p.evaluate(points) for p in self.parts], np.argmax)


@dataclass(frozen=True)
class Complement(ImplicitField):
    part: ImplicitField

    def evaluate(self, points):
        s = self.part.evaluate(points)
        return FieldSamples(-s.phi, -s.grad, -s.hess)


def _same_grid(a, b):
    if a.spec != b.spec:
        raise ValueError("CSG operands must share a grid")


def csg_union(a, b):
    """Pointwise ``min(a, b)`` of two fields or two grids on the same spec."""
    if isinstance(a, ScalarGrid):
        _same_grid(a, b)
        return ScalarGrid(a.spec, np.minimum(a.values, b.values))
    return Union((a, b))


def csg_intersect(a, b):
    if isinstance(a, ScalarGrid):
        _same_grid(a, b)
        return ScalarGrid(a.spec, np.maximum(a.values, b.values))
    return Intersection((a, b))


def csg_complement(a):
    if isinstance(a, ScalarGrid):
        return ScalarGrid(a.spec, -a.values)
    if isinstance(a, Complement):
        return a.part
    return Complement(a)


def csg_subtract(a, b):
    """Interior of ``a`` with the interior of ``b`` removed: ``max(a, -b)``."""
    return csg_intersect(a, csg_complement(b))


class Phantom(enum.Enum):
    SPHERE = "sphere"
    ELLIPSOID = "ellipsoid"
    FUSED_SPHERES = "fused"
    CYLINDER = "cylinder"

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower()
        for p in cls:
            if key in (p.value, p.name.lower()):
                return p
        raise ValueError(f"unknown phantom {name!r}; choose from {[p.value for p in cls]}")

    def field(self) -> ImplicitField:
        return _PHANTOMS[self]


_PHANTOMS = {
    Phantom.SPHERE: Quadric((1.0, 1.0, 1.0), (0.0, 0.0, 0.0), 1.0),
    Phantom.ELLIPSOID: Quadric((1.0, 0.25, 1.0), (0.0, 0.0, 0.0), 1.0),
    Phantom.FUSED_SPHERES: Union((
        Quadric((1.0, 1.0, 1.0), (0.0, 0.0, 0.7), 0.64),
        Quadric((1.0, 1.0, 1.0), (0.0, 0.0, -0.7), 0.64),
    )),
    # caps bound the slab -1 <= z <= 1 from both sides
    Phantom.CYLINDER: Intersection((
        Plane((0.0, 0.0, 1.0), 1.0),
        Plane((0.0, 0.0, -1.0), 1.0),
        Quadric((1.0, 1.0, 0.0), (0.0, 0.0, 0.0), 0.16),
    )),
}


def as_field(obj) -> ImplicitField:
    if isinstance(obj, Phantom):
        return obj.field()
    if isinstance(obj, str):
        return Phantom.parse(obj).field()
    if isinstance(obj, ImplicitField):
        return obj
    raise TypeError(f"cannot interpret {type(obj).__name__} as an implicit field")


def phantom_field(phantom, p) -> float:
    """Implicit value of a phantom at one point (negative inside)."""
    p = np.asarray(p, dtype=float)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise ValueError("p must be a finite 3-vector")
    return as_field(phantom)(p)


def rasterize(phantom, spec: GridSpec) -> ScalarGrid:
    """Evaluate a phantom (or any implicit field) at every grid node."""
    f = as_field(phantom)
    pts = spec.nodes().reshape(-1, 3)
    return ScalarGrid(spec, f.evaluate(pts).phi.reshape(spec.dims))


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

class NoiseModel(enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class NoiseSpec:
    model: NoiseModel
    snr_db: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", NoiseModel(self.model))
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def noise_sigma(grid: ScalarGrid, snr_db: float) -> float:
    p_signal = float(np.mean(grid.values ** 2))
    return math.sqrt(p_signal * 10.0 ** (-snr_db / 10.0))


def add_noise(grid: ScalarGrid, spec: NoiseSpec) -> ScalarGrid:
    """Corrupt every node with zero-mean noise at the requested SNR.

    Noise power is ``mean(values**2) * 10**(-snr_db/10)``; the uniform model
    uses half-width ``sigma * sqrt(3)`` so both models carry equal power.
    Samples are drawn from a PCG64 stream seeded by ``spec.seed`` in the
    x-fastest node order.
    """
    if not math.isfinite(spec.snr_db):
        raise ValueError("snr_db must be finite")
    sigma = noise_sigma(grid, spec.snr_db)
    rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
    n = grid.spec.size
    if spec.model is NoiseModel.GAUSSIAN:
        eps = rng.normal(0.0, sigma, n)
    else:
        a = sigma * math.sqrt(3.0)
        eps = rng.uniform(-a, a, n)
    return ScalarGrid(grid.spec, grid.flat() + eps)


def empirical_snr_db(clean: ScalarGrid, noisy: ScalarGrid) -> float:
    noise = noisy.values - clean.values
    return 10.0 * math.log10(np.mean(clean.values ** 2) / np.mean(noise ** 2))


# ---------------------------------------------------------------------------
# field sources
# ---------------------------------------------------------------------------

class FieldSource:
    """Answers phi, gradient and Hessian queries at arbitrary points."""

    def sample(self, points) -> FieldSamples:
        raise NotImplementedError

    def check_domain(self, points):
        """Raise :class:`OutOfDomain` for the first inadmissible point."""


class AnalyticSource(FieldSource):
    def __init__(self, field_):
        self.field = as_field(field_)

    def check_domain(self, points):
        bad = ~np.all(np.isfinite(points), axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise OutOfDomain(f"non-finite sample point at index {i}", points[i], i)

    def sample(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        self.check_domain(points)
        return self.field.evaluate(points)


# upper-triangle Hessian channel layout inside GridSource.channels
_HESS_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def node_derivatives(grid: ScalarGrid):
    """Second-order finite-difference gradient and Hessian at every node.

    Central differences in the interior, second-order one-sided differences
    on the boundary layer. The Hessian is the difference Jacobian of the
    difference gradient; mixed entries are computed once and mirrored.
    Returns a (nx, ny, nz, 10) array: phi, 3 gradient, 6 Hessian channels.
    """
    v = grid.values
    h = grid.spec.spacing
    g = [np.gradient(v, h[a], axis=a, edge_order=2) for a in range(3)]
    out = np.empty(v.shape + (10,))
    out[..., 0] = v
    for a in range(3):
        out[..., 1 + a] = g[a]
    for c, (a, b) in enumerate(_HESS_PAIRS):
        out[..., 4 + c] = np.gradient(g[a], h[b], axis=b, edge_order=2)
    return out


class GridSource(FieldSource):
    """Trilinear field source over a :class:`ScalarGrid`.

    Queries must stay ``margin`` cells away from every face of the grid.
    """

    def __init__(self, grid: ScalarGrid, margin=SAMPLING_MARGIN):
        self.grid = grid
        self.margin = margin
        self.channels = np.ascontiguousarray(node_derivatives(grid))
        self.channels.setflags(write=False)
        self._origin = np.asarray(grid.spec.origin)
        self._spacing = np.asarray(grid.spec.spacing)
        self.lo, self.hi = grid.spec.bounds(margin)

    def check_domain(self, points):
        bad = ~np.all((points >= self.lo) & (points <= self.hi), axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise OutOfDomain(
                f"point {points[i].tolist()} (index {i}) is outside the sampling box "
                f"[{self.lo.tolist()}, {self.hi.tolist()}]", points[i], i)

    def sample(self, points):
        points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
        self.check_domain(points)
        s = kernels.trilinear_sample(self.channels, self._origin, self._spacing, points)
        hess = np.empty((points.shape[0], 3, 3))
        for c, (a, b) in enumerate(_HESS_PAIRS):
            hess[:, a, b] = s[:, 4 + c]
            hess[:, b, a] = s[:, 4 + c]
        return FieldSamples(s[:, 0].copy(), s[:, 1:4].copy(), hess)


def sample_trilinear(grid: ScalarGrid, p, margin=SAMPLING_MARGIN) -> float:
    """Trilinear value of the grid at ``p``."""
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    lo, hi = grid.spec.bounds(margin)
    bad = ~np.all((pts >= lo) & (pts <= hi), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise OutOfDomain(f"point {pts[i].tolist()} is outside the sampling box", pts[i], i)
    vals = grid.values[..., None]
    out = kernels.trilinear_sample(
        np.ascontiguousarray(vals), np.asarray(grid.spec.origin), np.asarray(grid.spec.spacing), pts)[:, 0]
    return float(out[0]) if np.ndim(p) == 1 else out


def make_source(obj, margin=SAMPLING_MARGIN) -> FieldSource:
    if isinstance(obj, FieldSource):
        return obj
    if isinstance(obj, ScalarGrid):
        return GridSource(obj, margin)
    return AnalyticSource(obj)


def sample_field(src: FieldSource, p) -> FieldSample:
    s = src.sample(np.asarray(p, dtype=float)[None, :])
    hess = 0.5 * (s.hess[0] + s.hess[0].T)
    return FieldSample(float(s.phi[0]), s.grad[0].copy(), hess)


def project_to_zero(src: FieldSource, p, tol=1e-10, max_iter=50, eps_grad=EPS_GRAD):
    """Newton-project ``p`` onto the zero set along the field gradient.

    Iterates ``p <- p - phi * grad / |grad|^2`` until ``|phi| <= tol``.
    """
    p = np.asarray(p, dtype=float).copy()
    for _ in range(max_iter + 1):
        s = src.sample(p[None, :])
        phi = float(s.phi[0])
        if abs(phi) <= tol:
            return p
        g = s.grad[0]
        gg = float(g @ g)
        if math.sqrt(gg) <= eps_grad:
            raise DegenerateGradient(f"|grad phi| = {math.sqrt(gg):.3g} at {p.tolist()}")
        p = p - phi * g / gg
    raise NoConvergence(f"no convergence after {max_iter} iterations (|phi| = {abs(phi):.3g})")


# ---------------------------------------------------------------------------
# SDF1 files
# ---------------------------------------------------------------------------

def write_sdf1(grid: ScalarGrid, path, encoding="le64"):
    """Write a grid in the SDF1 format (text header, le64 or ascii payload)."""
    if encoding not in ("le64", "ascii"):
        raise ValueError("encoding must be 'le64' or 'ascii'")
    s = grid.spec
    header = (
        "SDF1\n"
        f"dims {s.dims[0]} {s.dims[1]} {s.dims[2]}\n"
        f"origin {' '.join(repr(float(x)) for x in s.origin)}\n"
        f"spacing {' '.join(repr(float(x)) for x in s.spacing)}\n"
        f"data {encoding}\n"
    )
    flat = grid.flat()
    with open(os.fspath(path), "wb") as fh:
        fh.write(header.encode("ascii"))
        if encoding == "le64":
            fh.write(flat.astype("<f8").tobytes())
        else:
            fh.write("\n".join(repr(float(x)) for x in flat).encode("ascii"))
            fh.write(b"\n")


def _header_fields(line, key, count, lineno, conv):
    parts = line.split()
    if not parts or parts[0] != key or len(parts) != count + 1:
        raise ParseError(f"expected '{key}' followed by {count} values", lineno)
    try:
        return tuple(conv(x) for x in parts[1:])
    except ValueError:
        raise ParseError(f"malformed '{key}' values", lineno) from None


def read_sdf1(path) -> ScalarGrid:
    with open(os.fspath(path), "rb") as fh:
        raw = fh.read()
    lines = []
    pos = 0
    for _ in range(5):
        end = raw.find(b"\n", pos)
        if end < 0 and not lines and not raw.startswith(b"SDF1"):
            raise ParseError("missing SDF1 magic", 1)
        if end < 0:
            raise ParseError("truncated header", len(lines) + 1)
        try:
            lines.append(raw[pos:end].decode("ascii").strip())
        except UnicodeDecodeError:
            raise ParseError("header is not ASCII", len(lines) + 1) from None
        pos = end + 1
        if lines[0] != "SDF1":
            raise ParseError("missing SDF1 magic", 1)
    dims = _header_fields(lines[1], "dims", 3, 2, int)
    origin = _header_fields(lines[2], "origin", 3, 3, float)
    spacing = _header_fields(lines[3], "spacing", 3, 4, float)
    (encoding,) = _header_fields(lines[4], "data", 1, 5, str)
    try:
        spec = GridSpec(dims, origin, spacing)
    except ValueError as exc:
        raise ParseError(str(exc), 2) from None
    payload = raw[pos:]
    if encoding == "le64":
        if len(payload) != 8 * spec.size:
            raise ParseError(f"payload holds {len(payload)} bytes, expected {8 * spec.size}", 6)
        values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    elif encoding == "ascii":
        try:
            values = np.array(payload.decode("ascii").split(), dtype=np.float64)
        except (UnicodeDecodeError, ValueError):
            raise ParseError("malformed ascii payload", 6) from None
        if values.size != spec.size:
            raise ParseError(f"payload holds {values.size} values, expected {spec.size}", 6)
    else:
        raise ParseError(f"unknown data encoding {encoding!r}", 5)
    try:
        return ScalarGrid(spec, values)
    except ValueError as exc:
        raise ParseError(str(exc), 6) from None
