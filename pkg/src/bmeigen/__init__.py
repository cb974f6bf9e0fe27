"""Principal eigenvalues of fully nonlinear elliptic operators on planar domains,
with discrete checks of the Brunn-Minkowski inequality and of log-concavity."""
from .bmcheck import BMConfig, BMReport, EigenCache, bm_verify, build_subsolution, deficit, rescaled_form
from .convexity import (InfConvResult, brute_force_infconv, convex_envelope, infimal_convolution,
                        log_concavity_check, neg_log_transform)
from .eigensolver import (EigenResult, NonConvergenceError, SolverParams, barrier_check,
                          eigen_by_domain_approximation, holder_fit, principal_eigenpair, radial_eigenvalue_oracle)
from .geometry import (ConvexPolygon, Disc, DomainError, Grid2D, Offset, RoundedPolygon, Scaled, SdfGrid, Square,
                       minkowski_combine, rasterize, signed_distance, stadium_complement)
from .grid import DirectionSet, GridField, Stencil, apply_F, apply_G, discrete_F, discrete_G
from .operators import NormalizedPLaplacian, OperatorSpec, PLaplacian, PucciMinimal, eval_F, eval_G

__version__ = "0.1.0"

__all__ = [
    "BMConfig", "BMReport", "EigenCache", "bm_verify", "build_subsolution", "deficit", "rescaled_form",
    "InfConvResult", "brute_force_infconv", "convex_envelope", "infimal_convolution", "log_concavity_check",
    "neg_log_transform",
    "EigenResult", "NonConvergenceError", "SolverParams", "barrier_check", "eigen_by_domain_approximation",
    "holder_fit", "principal_eigenpair", "radial_eigenvalue_oracle",
    "ConvexPolygon", "Disc", "DomainError", "Grid2D", "Offset", "RoundedPolygon", "Scaled", "SdfGrid", "Square",
    "minkowski_combine", "rasterize", "signed_distance", "stadium_complement",
    "DirectionSet", "GridField", "Stencil", "apply_F", "apply_G", "discrete_F", "discrete_G",
    "NormalizedPLaplacian", "OperatorSpec", "PLaplacian", "PucciMinimal", "eval_F", "eval_G",
]
