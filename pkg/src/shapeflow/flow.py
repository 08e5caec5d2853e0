"""Shape-gradient descent of a triangulated surface toward a zero level set.

The energy of a surface is

    E = integral over the surface of  alpha * phi^2 + beta * |grad_T phi|^2

where ``grad_T phi`` is the tangential part of the field gradient, so
``|grad_T phi|^2 = |grad phi|^2 - (grad phi . n)^2``. Each vertex moves along
its normal with speed ``g`` (the normal density of the shape gradient):

    g = alpha * (2 phi dphi_n + H phi^2)
      + beta  * (2 (D2phi grad phi) . n + H |grad_T phi|^2 - 2 dphi_n (D2phi n . n))

with ``dphi_n = grad phi . n`` and ``H`` the mean curvature. The update is
``v <- v - dt * g * n`` applied to all vertices at once from a frozen
snapshot of the mesh.
"""
from __future__ import annotations

import csv
import enum
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, NamedTuple

import numpy as np

from .curvature import CurvatureField, curvature_field
from .errors import CurvatureError, DegenerateNormal, NonFiniteUpdate, OutOfDomain, ShapeflowError
from .levelset import EPS_GRAD, FieldSamples, FieldSource
from .mesh import TriMesh, icosphere, lumped_vertex_area, vertex_normals

EPS_REL = 1e-12

TRACE_COLUMNS = ("iter", "E_total", "E_alpha", "E_beta", "rel_change",
                 "mean_abs_phi", "max_abs_g", "mean_H", "runtime_ms")


@dataclass(frozen=True)
class FlowConfig:
    alpha: float = 5.0
    beta: float = 1.0
    dt: float = 1e-3
    max_iters: int = 100
    rel_energy_tol: float = 1e-6
    initial_radius: float = 2.0
    subdiv: int = 3
    export_every: int = 0
    # optional absolute stop, off by default
    energy_threshold: float | None = None

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta >= 0 and self.alpha + self.beta > 0):
            raise ValueError("need alpha >= 0, beta >= 0 and alpha + beta > 0")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if not self.rel_energy_tol > 0:
            raise ValueError("rel_energy_tol must be positive")
        if not self.initial_radius > 0:
            raise ValueError("initial_radius must be positive")
        if not 0 <= self.subdiv <= 7:
            raise ValueError("subdiv must be in [0, 7]")
        if self.export_every < 0:
            raise ValueError("export_every must be >= 0")
        if self.energy_threshold is not None and not self.energy_threshold >= 0:
            raise ValueError("energy_threshold must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class EnergyTerms(NamedTuple):
    total: float
    alpha: float
    beta: float


@dataclass(frozen=True)
class VertexGradient:
    g: np.ndarray
    normals: np.ndarray


@dataclass(frozen=True)
class StepDiagnostics:
    max_abs_g: float
    mean_H: float
    gradient: VertexGradient
    curvature: CurvatureField


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    E_total: float
    E_alpha: float
    E_beta: float
    rel_change: float
    mean_abs_phi: float
    max_abs_g: float
    mean_H: float
    runtime_ms: float


@dataclass
class FlowTrace:
    initial: EnergyTerms | None = None
    records: list = field(default_factory=list)

    def append(self, rec: TraceRecord):
        if self.records and rec.iter <= self.records[-1].iter:
            raise ValueError("trace iterations must increase")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def write_csv(self, path):
        with open(os.fspath(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow([r.iter] + [f"{getattr(r, c):.12g}" for c in TRACE_COLUMNS[1:]])


def read_trace_csv(path):
    with open(os.fspath(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TraceRecord(int(r["iter"]), *(float(r[c]) for c in TRACE_COLUMNS[1:])) for r in rows]


class Termination(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    THRESHOLD = "energy_threshold"
    ABORTED = "aborted"


@dataclass
class FlowResult:
    mesh: TriMesh
    trace: FlowTrace
    termination: Termination
    diagnostic: str = ""
    snapshots: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# energy and gradient
# ---------------------------------------------------------------------------

def _integrands(samples: FieldSamples, normals, alpha, beta):
    dn = np.einsum("ij,ij->i", samples.grad, normals)
    tang = np.maximum(0.0, np.einsum("ij,ij->i", samples.grad, samples.grad) - dn * dn)
    return alpha * samples.phi ** 2, beta * tang


def _energy(mesh, normals, samples, alpha, beta):
    w = lumped_vertex_area(mesh)
    ea, eb = _integrands(samples, normals, alpha, beta)
    a = float(w @ ea)
    b = float(w @ eb)
    return EnergyTerms(a + b, a, b)


def energy(mesh: TriMesh, src: FieldSource, alpha, beta, normals=None) -> EnergyTerms:
    """Surface integral of ``alpha phi^2 + beta |grad_T phi|^2``.

    Quadrature puts a third of each triangle's area on each of its corners.
    """
    if normals is None:
        normals = vertex_normals(mesh)
    samples = src.sample(mesh.vertices)
    return _energy(mesh, normals, samples, alpha, beta)


def _gradient_density(samples: FieldSamples, normals, H, alpha, beta):
    phi, grad, hess = samples
    dn = np.einsum("ij,ij->i", grad, normals)
    hn = np.einsum("ijk,ik->ij", hess, normals)
    tang = np.einsum("ij,ij->i", grad, grad) - dn * dn
    g = np.zeros_like(phi)
    if alpha:
        g += alpha * (2.0 * phi * dn + H * phi * phi)
    if beta:
        # (D2phi grad) . n == (D2phi n) . grad for symmetric D2phi
        g += beta * (2.0 * np.einsum("ij,ij->i", hn, grad) + H * tang
                     - 2.0 * dn * np.einsum("ij,ij->i", hn, normals))
    return g


def shape_gradient(mesh: TriMesh, normals, curvatures, src: FieldSource, alpha, beta) -> VertexGradient:
    """Normal velocity density ``g`` at every vertex."""
    H = curvatures.H if isinstance(curvatures, CurvatureField) else np.asarray(curvatures, dtype=float)
    samples = src.sample(mesh.vertices)
    g = _gradient_density(samples, normals, H, alpha, beta)
    return VertexGradient(g, normals)


def evolve_step(mesh: TriMesh, config: FlowConfig, src: FieldSource, normals=None):
    """One explicit descent step; returns ``(new_mesh, StepDiagnostics)``.

    Normals, curvature and field samples all come from the input snapshot
    before any vertex moves.
    """
    if normals is None:
        normals = vertex_normals(mesh)
    curv = curvature_field(mesh, normals)
    grad = shape_gradient(mesh, normals, curv, src, config.alpha, config.beta)
    g = grad.g
    bad = ~np.isfinite(g)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteUpdate(f"non-finite gradient at vertex {i}", i)
    new_vertices = mesh.vertices - config.dt * g[:, None] * normals
    src.check_domain(new_vertices)
    diag = StepDiagnostics(float(np.max(np.abs(g))), float(np.mean(curv.H)), grad, curv)
    return mesh.with_vertices(new_vertices), diag


def distance_stats(mesh: TriMesh, src: FieldSource):
    """First-order distance to the zero set, ``|phi| / |grad phi|``, per vertex.

    Returns a dict with ``mean_dist`` and ``max_dist``.
    """
    s = src.sample(mesh.vertices)
    d = np.abs(s.phi) / np.maximum(np.linalg.norm(s.grad, axis=1), EPS_GRAD)
    return {"mean_dist": float(d.mean()), "max_dist": float(d.max())}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _abort_message(exc, it):
    where = ""
    idx = getattr(exc, "index", None)
    if idx is not None:
        where = f", vertex {idx}"
    return f"iteration {it}{where}: {type(exc).__name__}: {exc}"


def run(config: FlowConfig, src: FieldSource, initial: TriMesh | None = None,
        on_snapshot: Callable[[int, TriMesh], None] | None = None) -> FlowResult:
    """Evolve ``initial`` (default: an icosphere per ``config``) until the
    relative energy change drops to ``config.rel_energy_tol`` or the
    iteration budget runs out.

    Snapshots are taken every ``config.export_every`` iterations; they are
    stored on the result and also passed to ``on_snapshot`` when given.
    """
    mesh = initial if initial is not None else icosphere(config.initial_radius, config.subdiv)
    trace = FlowTrace()
    result = FlowResult(mesh, trace, Termination.MAX_ITERS)
    try:
        normals = vertex_normals(mesh)
        samples = src.sample(mesh.vertices)
    except ShapeflowError as exc:
        result.termination = Termination.ABORTED
        result.diagnostic = _abort_message(exc, 0)
        return result
    prev = _energy(mesh, normals, samples, config.alpha, config.beta)
    trace.initial = prev

    for it in range(1, config.max_iters + 1):
        t0 = time.perf_counter()
        try:
            new_mesh, diag = evolve_step(mesh, config, src, normals=normals)
            new_normals = vertex_normals(new_mesh)
            samples = src.sample(new_mesh.vertices)
            if not new_mesh.signed_volume() > 0:
                raise NonFiniteUpdate("surface turned inside out (signed volume <= 0)")
        except (OutOfDomain, NonFiniteUpdate, DegenerateNormal, CurvatureError) as exc:
            result.termination = Termination.ABORTED
            result.diagnostic = _abort_message(exc, it)
            break
        e = _energy(new_mesh, new_normals, samples, config.alpha, config.beta)
        rel = abs(e.total - prev.total) / max(prev.total, EPS_REL)
        trace.append(TraceRecord(
            it, e.total, e.alpha, e.beta, rel,
            float(np.mean(np.abs(samples.phi))), diag.max_abs_g, diag.mean_H,
            (time.perf_counter() - t0) * 1e3))
        mesh, normals, prev = new_mesh, new_normals, e
        result.mesh = mesh
        if config.export_every and it % config.export_every == 0:
            result.snapshots.append((it, mesh))
            if on_snapshot is not None:
                on_snapshot(it, mesh)
        if rel <= config.rel_energy_tol:
            result.termination = Termination.CONVERGED
            break
        if config.energy_threshold is not None and e.total < config.energy_threshold:
            result.termination = Termination.THRESHOLD
            break
    return result
