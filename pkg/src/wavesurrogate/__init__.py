"""Surrogate matrix assembly for spline discretizations of the Helmholtz equation."""
from .assembly import assemble_boundary_mass, assemble_mass, assemble_rhs, assemble_stiffness, RowSelector
from .geometry import MultiPatchDomain, PmlStretch, builtin_geometry, glue_dofs, pml_wrap
from .helmholtz import (HelmholtzProblem, SolverError, build_system, consistency_error, error_norms,
                        manufactured_solution_2d, sine_solution_2d, solve, wedge_wavenumber)
from .splines import TensorBasis, make_open_uniform
from .surrogate import SurrogateConfig, count_rows_by_kind, mesh_dependent_M, select_sample_points, surrogate_matrix

__version__ = "0.1.0"

__all__ = [
    "RowSelector", "assemble_boundary_mass", "assemble_mass", "assemble_rhs", "assemble_stiffness",
    "MultiPatchDomain", "PmlStretch", "builtin_geometry", "glue_dofs", "pml_wrap",
    "HelmholtzProblem", "SolverError", "build_system", "consistency_error", "error_norms",
    "manufactured_solution_2d", "sine_solution_2d", "solve", "wedge_wavenumber",
    "TensorBasis", "make_open_uniform",
    "SurrogateConfig", "count_rows_by_kind", "mesh_dependent_M", "select_sample_points", "surrogate_matrix",
]
