"""Guaranteed two-sided bounds on homogenized coefficients of periodic media.

The package discretizes the periodic cell problem of a 3D scalar elliptic
operator with P1 elements on a six-tetrahedra voxel split, yielding an upper
bound on the effective matrix, and two routes to guaranteed lower bounds: an
iterative dual solve over curl-represented divergence-free fluxes, and an
FFT-diagonalized projection that needs no dual iterations at all.  Bounds
hold in the Loewner order for any iterate, independent of solver accuracy.
"""

from .analysis import (
    BoundsReport,
    ConvergenceStudy,
    OrderingCertificate,
    build_report,
    certify_ordering,
    eig3_sym,
    emit_convergence,
    emit_report,
    load_convergence,
    load_report,
    run_convergence,
)
from .coefficients import (
    CoefficientField,
    constant_field,
    example1_field,
    example2_field,
    laminate_field,
    load_voxel_file,
    save_voxel_file,
)
from .grid import PeriodicGrid, Tetrahedron, build_grid, node_index, tetrahedra_of_voxel
from .homogenize import (
    BoundsResult,
    DualSolution,
    FftProjector,
    PrimalSolution,
    ProjectedDual,
    algorithm2,
    fft_project,
    project_cg,
    run_bounds,
    solve_dual_all,
    solve_primal_all,
)
from .kernels import available_backends, current_backend, set_backend
from .krylov import SolveOutcome, SolverConfig, SolverError, cg
from .operators import (
    CurlGradViews,
    DerivativeOperators,
    apply_dual,
    apply_primal,
    build_derivative_operators,
    curl,
    curl_transpose,
    dense_views,
    grad,
    grad_transpose,
    rhs_dual,
    rhs_primal,
)
from .verify import InvariantResult, verify_invariants

__version__ = "0.1.0"
