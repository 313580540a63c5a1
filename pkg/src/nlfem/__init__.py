"""Finite elements for volume-constrained nonlocal diffusion in two dimensions."""

from .errors import (ConstructionError, IndefiniteMatrixError, InvalidArgumentError, MeshValidationError,
                     NlfemError, NonConvergenceError, SolverError)
from .mesh import Mesh, Region, build_squared_grid, build_uniform_grid, load_mesh, save_mesh
from .geometry import BallStrategy, decompose_ball
from .quadrature import RuleKind, rule
from .assembly import Kernel, LinearSystem, ProblemData, assemble, manufactured_case
from .solver import SolveReport, solve

__version__ = "0.1.0"
