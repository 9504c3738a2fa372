"""Multiscale solver for 2D heterogeneous high-frequency Helmholtz problems.

The method splits the solution over a coarse quad mesh into local bubble
parts carrying the right-hand side and a Helmholtz-harmonic part that is
approximated, edge by edge, in spectral bases built from oversampled local
solves.  Coarse systems stay small (a handful of functions per edge) while
errors decay nearly exponentially in the per-edge basis size.
"""

from .fem import CoefficientField, Load, solve_adjoint, solve_reference
from .galerkin import (
    CoarseSystemError,
    assemble_coarse,
    compute_errors,
    solve_coarse,
)
from .linalg import GramConditioningError, SingularSystemError, SolverError
from .mesh import (
    BoundaryClassification,
    GridSpec,
    MeshError,
    TwoLevelMesh,
    build_mesh,
    oversampling_domain,
)
from .problems import (
    ConfigError,
    RunConfig,
    constant_problem,
    load_config,
    mie_problem,
    planar_wave_problem,
    random_field_problem,
    run_sweep,
    verify_reference,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryClassification",
    "CoarseSystemError",
    "CoefficientField",
    "ConfigError",
    "GramConditioningError",
    "GridSpec",
    "Load",
    "MeshError",
    "RunConfig",
    "SingularSystemError",
    "SolverError",
    "TwoLevelMesh",
    "assemble_coarse",
    "build_mesh",
    "compute_errors",
    "constant_problem",
    "load_config",
    "mie_problem",
    "oversampling_domain",
    "planar_wave_problem",
    "random_field_problem",
    "run_sweep",
    "solve_adjoint",
    "solve_coarse",
    "solve_reference",
    "verify_reference",
    "__version__",
]
