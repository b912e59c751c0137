"""thinperm: effective Darcy description of Stokes flow through thin
periodically perforated layers with Navier-slip interior conditions.

The toolkit computes reference-cell flow problems and their effective
tensors, solves the reduced in-plane Darcy problem, verifies the
homogenization limit by direct microscopic simulation on eps-sweeps, and
estimates the functional-inequality constants (Korn, Poincare, trace)
that govern well-posedness.  Hot assembly kernels are compiled (Cython)
with a vectorized NumPy fallback selected at import.
"""

__version__ = "0.1.0"

from .cells import (  # noqa: F401
    CellSolutionSet,
    EffectiveLaw,
    RegimeDescriptor,
    TangentUnit,
    assemble_effective_law,
    solve_auxiliary_laplace,
    solve_boundary_stress_cell,
    solve_cell_suite,
    solve_normal_pressure_cell,
    solve_unit_force_cell,
)
from .darcy import (  # noqa: F401
    DarcySolution,
    MacroData,
    TwoScaleReconstruction,
    reconstruct_two_scale,
    sigma_mesh,
    solve_darcy,
    verify_two_pressure_residual,
)
from .errors import (  # noqa: F401
    BogovskiiFailure,
    ComputeFailed,
    ConfigInvalid,
    DegenerateTensor,
    EmptyGammaD,
    InconsistentMesh,
    MeanNotZero,
    MeshingFailed,
    RegimeMismatch,
    SingularSystem,
    TagAmbiguity,
)
from .fem import (  # noqa: F401
    ConstraintSpec,
    SaddleSystem,
    StokesDiscretization,
    StokesField,
    StokesProblemData,
    assemble,
    energy,
    inf_sup_constant,
    solve,
)
from .geometry import CellGeometry, Disk, LayerGeometry, Polygon, Slabs  # noqa: F401
from .meshing import (  # noqa: F401
    Mesh,
    NormalField,
    build_cell_mesh,
    build_layer_mesh,
    check_assumption_A4,
)
from .micro import (  # noqa: F401
    MicroData,
    SweepReport,
    extend_pressure,
    run_sweep,
    solve_micro,
    two_scale_error,
)
