"""Immersed finite elements with gradient recovery for 2D interface problems."""

from .bench import (
    BenchmarkProblem,
    ConvergenceTable,
    RunResult,
    StudyRow,
    compute_norms,
    convergence_rate,
    convergence_study,
    fitted_interpolant,
    ife_interpolant,
    make_problem,
    recovery_consistency,
    run_single,
    weighted_energy_error,
)
from .geometry import (
    ElementClassification,
    FittedMesh,
    GeometryError,
    InterfaceCut,
    LevelSet,
    build_fitted_mesh,
    classify_elements,
    edge_intersection,
)
from .ife import (
    IfeConstructionError,
    IfeElementBasis,
    build_all_bases,
    build_ife_basis,
    eval_ife,
)
from .mesh import UniformMesh, build_uniform_mesh, triangle_areas
from .quadrature import quad_rule
from .recovery import (
    EnrichedField,
    RecoveredGradient,
    RecoveryError,
    RecoveryPatch,
    build_patches,
    enrich,
    error_estimator,
    ippr_recover,
    recover,
)
from .system import (
    AssembledSystem,
    ProblemData,
    SolveError,
    apply_dirichlet,
    assemble_pgifem,
    assemble_scifem,
    solve,
)

__version__ = "0.1.0"
