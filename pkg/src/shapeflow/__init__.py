"""Surface reconstruction from volumetric level-set data.

A triangulated sphere is pulled onto the zero level set of a scalar field by
shape-gradient descent on a curvature-aware energy. A marching-cubes
extractor is included as the fixed-grid baseline.

Modules: :mod:`~shapeflow.levelset` (fields, grids, noise, sampling),
:mod:`~shapeflow.mesh`, :mod:`~shapeflow.curvature`, :mod:`~shapeflow.flow`,
:mod:`~shapeflow.mcubes` and :mod:`~shapeflow.cli`.
"""
__version__ = "0.1.0"

from .errors import (CurvatureError, DegenerateGradient, DegenerateNormal, InsufficientNeighbors,
                     NoConvergence, NonFiniteUpdate, NonManifoldVertex, OutOfDomain, ParseError,
                     ShapeflowError, SingularFit, ValidationError)
from .levelset import (AnalyticSource, GridSource, GridSpec, NoiseSpec, Phantom, ScalarGrid,
                       add_noise, rasterize, read_sdf1, write_sdf1)
from .mesh import TriMesh, icosphere, read_obj, read_ply, vertex_normals, write_obj, write_ply
from .curvature import curvature_field
from .flow import FlowConfig, FlowResult, Termination, energy, evolve_step, run, shape_gradient
from .mcubes import marching_cubes, mc_report, surface_metrics

__all__ = [name for name in dir() if not name.startswith("_")]
