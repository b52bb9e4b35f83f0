"""Slope factor of safety by optimised shear strength reduction.

The package evaluates the regularised kinematic functional of a 2D
plane-strain slope on quadratic triangles and maximises ``lam - G_alpha(lam)``
over the strength reduction level, for associated plasticity and the Davis
A/B/C substitutions.
"""
__version__ = "0.1.0"

from .mesh import (BoundaryTag, Material, TriMesh, WaterTable, build_homogeneous_slope,
                   export_vtk, import_mesh, refine)
from .reduction import ReductionScheme, Strength, q_eval, q_inverse, reduce_strength, yield_mc
from .solver import (FosReport, SearchConfig, SearchFailure, SlopeProblem, adaptive_fos,
                     alpha_continuation, fos_search)
from .tensors import Elasticity, SymTensor3, spectral_decompose

__all__ = [
    "BoundaryTag", "Elasticity", "FosReport", "Material", "ReductionScheme", "SearchConfig",
    "SearchFailure", "SlopeProblem", "Strength", "SymTensor3", "TriMesh", "WaterTable",
    "adaptive_fos", "alpha_continuation", "build_homogeneous_slope", "export_vtk", "fos_search",
    "import_mesh", "q_eval", "q_inverse", "reduce_strength", "refine", "spectral_decompose",
    "yield_mc",
]
