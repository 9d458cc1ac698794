"""Finite-element solver for the complex Helmholtz equation.

Discretizes div(L grad u) = M u with complex L, M through a saddle-point
variational principle whose block structure reduces each solve to two
symmetric positive-definite real systems (a Schur complement for the real
part, a plain A1 solve for the imaginary part), handled by nested
preconditioned conjugate gradients with an IC(0) preconditioner.
"""

from .grid import BasisFunction, Grid, build_grid, eval_basis
from .coeff import (
    AcousticParams, AdmissibilityReport, CoefficientField, HalfPlaneError,
    acoustic_to_helmholtz, admissibility, auto_rotation_angle, rotate,
)
from .assemble import (
    AssemblyError, BlockSystem, DirichletBC, NeumannBC, RobinBC,
    assemble_system, element_blocks,
)
from .sparse import (
    A1Solver, ICFactor, IcBreakdownError, PcgBreakdownError, PcgConfig,
    PcgNonConvergenceError, PcgResult, SchurOperator, SparseSym, ic0, pcg,
    schur_apply,
)
from .solve import (
    ProblemSpec, SolutionField, SolveError, SolveInfo, evaluate,
    saddle_functional_Y, solve,
)
from .verify import (
    ConvergenceStudy, ErrorReport, constitutive_spectrum, convergence_study,
    galerkin_oracle, omega_sweep, pcg_iteration_sweep, rotation_sweep,
    schur_spectrum, v_norm_error,
)

__version__ = "0.1.0"
