"""Interior-penalty nonconforming finite elements of minimal polynomial degree
for 2m-th order elliptic problems on simplicial meshes (n = 1, 2, 3)."""

from .assemble import (
    AssembledSystem,
    PenaltyPlan,
    assemble,
    broken_error_norms,
    energy_error_norm,
    energy_norm_discrete,
    expand_solution,
    penalty_plan,
    reduce_system,
)
from .element import (
    DofSpec,
    ElementBasis,
    ElementCache,
    build_element,
    dof_values_of_function,
    enumerate_dofs,
    evaluate_dof,
    interpolate_local,
)
from .linalg import SolveReport, SparseSym, cg_solve, dense_solve
from .mesh import (
    Mesh,
    MeshSizes,
    NormalFrame,
    build_box_mesh,
    build_lshape_mesh,
    mesh_sizes,
    normal_frame,
    normal_frames,
)
from .poly import (
    Poly,
    QuadratureRule,
    basis_multiindices,
    derivative,
    directional_derivative,
    integrate_simplex_exact,
    quadrature,
)
from .solutions import ExactSolution, get_solution
from .space import (
    DiscreteFunction,
    GlobalDofMap,
    build_space,
    dirichlet_partition,
    interpolate_global,
)
from .study import StudyConfig, StudyRow, emit_table, run_study

__version__ = "0.1.0"
