"""Trefftz discontinuous Galerkin solver for quasi-periodic grating scattering."""
from .errors import *  # noqa: F401,F403
from .geometry import FaceKind, Mesh, ProblemConfig, Region, build_mesh, rectangle, rectangle_mesh
from .spectral import auto_truncation, build_ladder, m_star, rayleigh_wood_distance
from .basis import GlobalBasis, PlaneWaveSpace, default_directions, segment_exp_integral
from .assembly import FluxParameters, TdgSystem, assemble_system
from .solver import DiscreteSolution, solve, solve_problem

__version__ = "0.1.0"

__all__ = [
    "FaceKind", "Mesh", "ProblemConfig", "Region", "build_mesh", "rectangle", "rectangle_mesh",
    "auto_truncation", "build_ladder", "m_star", "rayleigh_wood_distance",
    "GlobalBasis", "PlaneWaveSpace", "default_directions", "segment_exp_integral",
    "FluxParameters", "TdgSystem", "assemble_system",
    "DiscreteSolution", "solve", "solve_problem",
]
